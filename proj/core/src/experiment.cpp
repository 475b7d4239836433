#include "tabguide/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "tabguide/errors.hpp"
#include "tabguide/rng.hpp"

namespace tabguide {

namespace fs = std::filesystem;
using nlohmann::json;

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(
    RunConfig, seed, trials, data, schema, checkpoint, output_dir, mask, constraint, imputed,
    samples_file, target, steps, alpha_1, alpha_T, hidden, time_hidden, embed_dim, epochs,
    batch_size, learning_rate, optimizer, eta, eta_schedule, mechanism, ratio, loss, ablation,
    scenario, num_samples, quantile, threshold, range_column, category_column, category, control,
    diag, diag_loss, diag_samples, t_grid, diag_hidden, diag_epochs, diag_batch,
    diag_learning_rate, diag_optimizer, synth, rows, ambient, intrinsic, radius, rho,
    test_fraction, n_continuous, n_categorical, components, cardinality)

json RunConfig::to_json() const {
  json j;
  tabguide::to_json(j, *this);
  return j;
}

std::string RunConfig::hash() const {
  json j = to_json();
  j.erase("seed");
  j.erase("output_dir");
  return sha256_hex(j.dump());
}

std::string Provenance::comment() const {
  return "seed=" + std::to_string(seed) + " config=" + config_sha256 + " checkpoint=" +
         (checkpoint_sha256.empty() ? "none" : checkpoint_sha256);
}

json Provenance::to_json() const {
  return {{"seed", seed},
          {"config_sha256", config_sha256},
          {"checkpoint_sha256", checkpoint_sha256.empty() ? json(nullptr) : json(checkpoint_sha256)}};
}

namespace {

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

fs::path out_path(const RunConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.output_dir);
  return fs::path(cfg.output_dir) / name;
}

void write_json(const fs::path& path, const json& j) { write_file(path.string(), j.dump(2) + "\n"); }

void require(const std::string& value, const char* flag, const char* command) {
  if (value.empty()) throw UsageError(std::string(command) + " needs --" + flag);
}

csv::Table read_csv(const std::string& path) {
  try {
    return csv::read_file(path);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

GuidanceConfig guidance_config(const RunConfig& cfg, const std::string& schedule) {
  GuidanceConfig g;
  g.eta = cfg.eta;
  if (schedule == "constant") {
    g.schedule = GuidanceSchedule::Constant;
  } else if (schedule == "linear") {
    g.schedule = GuidanceSchedule::LinearRamp;
  } else {
    throw ConfigError("unknown guidance schedule '" + schedule + "' (expected constant or linear)");
  }
  return g;
}

struct LoadedCheckpoint {
  Checkpoint ckpt;
  std::string sha256;
};

LoadedCheckpoint load_ckpt(const RunConfig& cfg, const char* command) {
  require(cfg.checkpoint, "checkpoint", command);
  const std::string text = read_file(cfg.checkpoint);
  try {
    return {checkpoint_from_string(text), sha256_hex(text)};
  } catch (const Error& e) {
    throw Error(cfg.checkpoint + ": " + e.what());
  }
}

/// Loads `path` against the checkpoint schema, listing divergent columns.
Dataset load_against(const std::string& path, const TabularSchema& schema) {
  const csv::Table table = read_csv(path);
  std::vector<std::string> missing;
  std::vector<std::string> extra;
  std::set<std::string> known;
  for (const auto& c : schema.columns) known.insert(c.name);
  for (const auto& c : schema.modeled_columns()) {
    if (std::find(table.header.begin(), table.header.end(), c.name) == table.header.end()) {
      missing.push_back(c.name);
    }
  }
  for (const auto& h : table.header) {
    if (!known.count(h)) extra.push_back(h);
  }
  if (!missing.empty() || !extra.empty()) {
    std::string msg = path + ": schema mismatch;";
    if (!missing.empty()) {
      msg += " missing columns:";
      for (const auto& m : missing) msg += " " + m;
      msg += ";";
    }
    if (!extra.empty()) {
      msg += " unexpected columns:";
      for (const auto& m : extra) msg += " " + m;
    }
    throw DataError(msg);
  }
  try {
    return load_dataset(table, schema);
  } catch (const Error& e) {
    throw DataError(path + ": " + e.what());
  }
}

TabularSchema load_schema(const std::string& path) {
  try {
    return TabularSchema::from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

NoiseSchedule schedule_of(const RunConfig& cfg) {
  return build_schedule(cfg.steps, cfg.alpha_1, cfg.alpha_T);
}

std::vector<int> t_grid_of(const RunConfig& cfg, int steps) {
  std::vector<int> grid = cfg.t_grid;
  if (grid.empty()) {
    for (int t : {1, 2, 5, 10, 20, 50, 100, 150, 200}) {
      if (t <= steps) grid.push_back(t);
    }
    if (grid.back() != steps) grid.push_back(steps);
  }
  return grid;
}

struct Stat {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t n = 0;
};

Stat summarize(const std::vector<double>& v) {
  Stat s;
  s.n = v.size();
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

json stat_json(const std::vector<double>& v) {
  if (v.empty()) return nullptr;
  const Stat s = summarize(v);
  return {{"mean", s.mean}, {"std", s.stddev}, {"n", s.n}};
}

std::string trial_name(const std::string& stem, int trial, int trials) {
  if (trials == 1) return stem + ".csv";
  return stem + "_trial" + std::to_string(trial) + ".csv";
}

BitMatrix make_mask(const RunConfig& cfg, const Encoder& enc, const Matrix& x, std::uint64_t seed) {
  const MaskMechanism mech = parse_mechanism(cfg.mechanism);
  const auto rows = static_cast<std::size_t>(x.rows());
  switch (mech) {
    case MaskMechanism::MCAR:
      return gen_mcar(rows, enc.num_columns(), cfg.ratio, seed).mask;
    case MaskMechanism::MAR: {
      const Matrix f = enc.column_features(x);
      return gen_mar(f, cfg.ratio, default_observed_columns(enc.num_columns()), seed).mask;
    }
    case MaskMechanism::MNAR:
      return gen_mnar(enc.column_features(x), cfg.ratio, seed).mask;
  }
  return {};
}

/// Raw rows for output: observed cells copied from the input, missing cells decoded.
std::vector<RawRow> merge_rows(const std::vector<RawRow>& truth, const std::vector<RawRow>& decoded,
                               const BitMatrix& mask) {
  std::vector<RawRow> out = truth;
  for (std::size_t r = 0; r < out.size(); ++r) {
    for (std::size_t c = 0; c < out[r].size(); ++c) {
      if (mask(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) != 0) out[r][c] = decoded[r][c];
    }
  }
  return out;
}

DenoiserNet train_synthetic(const RunConfig& cfg, const SyntheticManifold& m,
                            const NoiseSchedule& sched, const Logger& log) {
  const Matrix data = m.sample(cfg.rows, derive_seed(cfg.seed, 11));
  DenoiserConfig dc;
  dc.data_dim = m.ambient_dim();
  dc.hidden = cfg.diag_hidden;
  dc.time_hidden = cfg.diag_hidden;
  dc.embed_dim = cfg.embed_dim;
  DenoiserNet net(dc, derive_seed(cfg.seed, 12));
  TrainConfig tc;
  tc.epochs = cfg.diag_epochs;
  tc.batch_size = cfg.diag_batch;
  tc.learning_rate = cfg.diag_learning_rate;
  tc.optimizer = parse_optimizer(cfg.diag_optimizer);
  tc.seed = derive_seed(cfg.seed, 13);
  const int every = std::max(1, tc.epochs / 10);
  train(net, sched, data, tc, [&](int epoch, double loss) {
    if ((epoch + 1) % every == 0) say(log, "epoch " + std::to_string(epoch + 1) + " loss " + csv::format_double(loss));
  });
  return net;
}

/// Specs on real data: first column for mae/mse, first categorical block for
/// ce, first continuous coordinate >= its mean + 0.5 sd for inequality.
SpecFactory data_spec_factory(const std::string& loss, const Encoder& enc) {
  const auto d = static_cast<Eigen::Index>(enc.dim());
  if (loss == "mae" || loss == "mse") {
    const ColumnBlock b = enc.blocks().front();
    const Norm norm = loss == "mae" ? Norm::L1 : Norm::L2;
    return [=](const Matrix& x0) {
      Matrix obs = Matrix::Zero(1, d);
      obs.block(0, static_cast<Eigen::Index>(b.offset), 1, static_cast<Eigen::Index>(b.width)).setOnes();
      return ConstraintSpec{Imputation{obs, x0, norm}};
    };
  }
  if (loss == "ce") {
    for (const auto& b : enc.blocks()) {
      if (b.column.kind != ColumnKind::Categorical) continue;
      return [=](const Matrix& x0) {
        CategoricalCE ce;
        CategoricalCE::Block blk{b.offset, b.width, {}};
        for (Eigen::Index r = 0; r < x0.rows(); ++r) {
          Eigen::Index k = 0;
          x0.row(r).segment(static_cast<Eigen::Index>(b.offset), static_cast<Eigen::Index>(b.width)).maxCoeff(&k);
          blk.target.push_back(static_cast<int>(k));
        }
        ce.blocks.push_back(std::move(blk));
        return ConstraintSpec{std::move(ce)};
      };
    }
    throw UsageError("ce diagnostic needs a categorical column");
  }
  if (loss == "inequality") {
    for (const auto& b : enc.blocks()) {
      if (b.column.kind != ColumnKind::Continuous) continue;
      return [=](const Matrix&) {
        Inequality s;
        s.selector = AffineSelector::coordinate(b.offset);
        s.lower = 0.5;
        return ConstraintSpec{s};
      };
    }
    throw UsageError("inequality diagnostic needs a continuous column");
  }
  throw UsageError("unknown diagnostic loss '" + loss + "' (expected mae, mse, ce, inequality)");
}

}  // namespace

const std::vector<std::string>& diag_names() {
  static const std::vector<std::string> names{"angles", "projection", "shell"};
  return names;
}

const std::vector<std::string>& diag_loss_names() {
  static const std::vector<std::string> names{"mae", "mse", "ce", "inequality"};
  return names;
}

SpecFactory synthetic_spec_factory(const std::string& loss, std::size_t dim, double radius) {
  const auto d = static_cast<Eigen::Index>(dim);
  if (loss == "mae" || loss == "mse") {
    const Norm norm = loss == "mae" ? Norm::L1 : Norm::L2;
    return [=](const Matrix& x0) {
      Matrix obs = Matrix::Zero(1, d);
      obs(0, 0) = 1.0;
      return ConstraintSpec{Imputation{obs, x0, norm}};
    };
  }
  if (loss == "ce") {
    return [=](const Matrix& x0) {
      CategoricalCE ce;
      CategoricalCE::Block blk{0, dim, {}};
      for (Eigen::Index r = 0; r < x0.rows(); ++r) {
        Eigen::Index k = 0;
        x0.row(r).maxCoeff(&k);
        blk.target.push_back(static_cast<int>(k));
      }
      ce.blocks.push_back(std::move(blk));
      return ConstraintSpec{std::move(ce)};
    };
  }
  if (loss == "inequality") {
    return [=](const Matrix&) {
      Inequality s;
      s.selector = AffineSelector::coordinate(0);
      s.lower = 0.9 * radius;
      return ConstraintSpec{s};
    };
  }
  throw UsageError("unknown diagnostic loss '" + loss + "' (expected mae, mse, ce, inequality)");
}

SyntheticManifold make_manifold(const RunConfig& cfg) {
  if (cfg.synth == "circle") return SyntheticManifold::circle(cfg.radius, cfg.ambient);
  if (cfg.synth == "sphere") return SyntheticManifold::sphere(cfg.radius, cfg.intrinsic, cfg.ambient);
  if (cfg.synth == "subspace") {
    if (cfg.intrinsic >= cfg.ambient) throw ConfigError("subspace needs intrinsic < ambient");
    Rng rng(derive_seed(cfg.seed, 21));
    const Matrix g = standard_normal(rng, static_cast<Eigen::Index>(cfg.ambient),
                                     static_cast<Eigen::Index>(cfg.intrinsic));
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() *
                        Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(cfg.ambient),
                                                  static_cast<Eigen::Index>(cfg.intrinsic));
    return SyntheticManifold::affine(q.transpose(), Matrix::Zero(1, static_cast<Eigen::Index>(cfg.ambient)));
  }
  throw ConfigError("unknown manifold '" + cfg.synth + "' (expected circle, sphere, subspace)");
}

csv::Table mask_to_table(const Encoder& enc, const BitMatrix& mask) {
  csv::Table t;
  for (const auto& b : enc.blocks()) t.header.push_back(b.column.name);
  for (Eigen::Index r = 0; r < mask.rows(); ++r) {
    std::vector<std::string> row;
    for (Eigen::Index c = 0; c < mask.cols(); ++c) row.push_back(mask(r, c) ? "1" : "0");
    t.rows.push_back(std::move(row));
  }
  return t;
}

BitMatrix mask_from_table(const Encoder& enc, const csv::Table& table) {
  std::vector<std::size_t> source;
  for (const auto& b : enc.blocks()) {
    auto it = std::find(table.header.begin(), table.header.end(), b.column.name);
    if (it == table.header.end()) throw DataError("mask lacks column '" + b.column.name + "'");
    source.push_back(static_cast<std::size_t>(it - table.header.begin()));
  }
  BitMatrix m(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(source.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    for (std::size_t c = 0; c < source.size(); ++c) {
      const std::string& v = table.rows[r][source[c]];
      if (v != "0" && v != "1") {
        throw DataError("mask row " + std::to_string(r + 1) + " holds '" + v + "'; expected 0 or 1");
      }
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v == "1" ? 1 : 0;
    }
  }
  return m;
}

// -------------------------------------------------------------------- train

json cmd_train(const RunConfig& cfg, const Logger& log) {
  require(cfg.data, "data", "train");
  require(cfg.schema, "schema", "train");
  TabularSchema schema = load_schema(cfg.schema);
  if (!cfg.target.empty()) schema.target_column = cfg.target;
  const Dataset ds = load_against(cfg.data, schema);
  const Encoder enc = Encoder::fit(schema, ds.rows);
  const Matrix x = enc.encode_rows(ds.rows);
  const NoiseSchedule sched = schedule_of(cfg);

  DenoiserConfig dc;
  dc.data_dim = enc.dim();
  dc.hidden = cfg.hidden;
  dc.time_hidden = cfg.time_hidden;
  dc.embed_dim = cfg.embed_dim;
  DenoiserNet net(dc, derive_seed(cfg.seed, 1));
  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.learning_rate = cfg.learning_rate;
  tc.optimizer = parse_optimizer(cfg.optimizer);
  tc.seed = derive_seed(cfg.seed, 2);
  say(log, "training on " + std::to_string(ds.rows.size()) + " rows, d = " + std::to_string(enc.dim()));
  const int every = std::max(1, tc.epochs / 20);
  const TrainResult tr = train(net, sched, x, tc, [&](int epoch, double loss) {
    if ((epoch + 1) % every == 0) say(log, "epoch " + std::to_string(epoch + 1) + " loss " + csv::format_double(loss));
  });

  Checkpoint ckpt{schema, enc, sched, std::move(net), tc, cfg.seed};
  const std::string text = checkpoint_to_string(ckpt);
  const std::string ckpt_path = cfg.checkpoint.empty() ? out_path(cfg, "model.json").string() : cfg.checkpoint;
  if (fs::path(ckpt_path).has_parent_path()) fs::create_directories(fs::path(ckpt_path).parent_path());
  write_file(ckpt_path, text);
  const Provenance prov{cfg.seed, cfg.hash(), sha256_hex(text)};

  csv::Table trace;
  trace.header = {"epoch", "loss"};
  for (std::size_t e = 0; e < tr.epoch_loss.size(); ++e) {
    trace.rows.push_back({std::to_string(e + 1), csv::format_double(tr.epoch_loss[e])});
  }
  csv::write_file(out_path(cfg, "train_loss.csv"), trace, prov.comment());
  return {{"checkpoint", ckpt_path},
          {"provenance", prov.to_json()},
          {"rows", ds.rows.size()},
          {"dropped_rows", ds.dropped_rows},
          {"final_loss", tr.epoch_loss.back()}};
}

// ------------------------------------------------------------------- impute

json cmd_impute(const RunConfig& cfg, const Logger& log) {
  require(cfg.data, "data", "impute");
  if (!(cfg.ratio > 0.0 && cfg.ratio < 1.0)) {
    throw UsageError("--ratio must be in (0, 1); a zero ratio leaves nothing to impute");
  }
  if (cfg.trials < 1) throw UsageError("--trials must be at least 1");
  const LoadedCheckpoint lc = load_ckpt(cfg, "impute");
  const Checkpoint& ck = lc.ckpt;
  const Encoder& enc = ck.encoder;
  const Dataset ds = load_against(cfg.data, ck.schema);
  if (ds.rows.empty()) throw DataError(cfg.data + ": no complete rows");
  const Matrix x = enc.encode_rows(ds.rows);
  const Provenance prov{cfg.seed, cfg.hash(), lc.sha256};

  std::vector<ImputationLoss> losses;
  std::vector<std::string> schedules;
  if (cfg.ablation) {
    losses = {ImputationLoss::Mae, ImputationLoss::Mse, ImputationLoss::MaeCe, ImputationLoss::MseCe};
    schedules = {"constant", "linear"};
  } else {
    losses = {parse_imputation_loss(cfg.loss)};
    schedules = {cfg.eta_schedule};
  }
  for (const auto& s : schedules) guidance_config(cfg, s);

  std::vector<BitMatrix> masks;
  csv::Table provided;
  if (!cfg.mask.empty()) {
    const BitMatrix m = mask_from_table(enc, read_csv(cfg.mask));
    if (m.rows() != x.rows()) throw DataError(cfg.mask + ": mask rows differ from data rows");
    masks.assign(static_cast<std::size_t>(cfg.trials), m);
  } else {
    for (int k = 0; k < cfg.trials; ++k) {
      masks.push_back(make_mask(cfg, enc, x, derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(k))));
    }
  }

  json variants = json::array();
  csv::Table ablation;
  ablation.header = {"loss", "schedule", "trials", "mse_mean", "mse_std", "accuracy_mean", "accuracy_std"};
  for (const ImputationLoss loss : losses) {
    for (const auto& sched_name : schedules) {
      const GuidanceConfig gcfg = guidance_config(cfg, sched_name);
      std::vector<double> mse;
      std::vector<double> acc;
      json trial_reports = json::array();
      for (int k = 0; k < cfg.trials; ++k) {
        const BitMatrix& mask = masks[static_cast<std::size_t>(k)];
        const Matrix observed = (1.0 - enc.mask_to_ambient(mask).array()).matrix();
        const ConstraintSpec spec = make_imputation_spec(enc, observed, x, loss);
        say(log, std::string("imputing with ") + imputation_loss_name(loss) + ", " + sched_name +
                     " schedule, trial " + std::to_string(k + 1) + "/" + std::to_string(cfg.trials));
        const SampleResult res = harpoon_sample(ck.net, ck.schedule, &spec, gcfg,
                                                static_cast<std::size_t>(x.rows()),
                                                derive_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(k)));
        // Hard anchor: observed entries take their true values before decoding.
        const Matrix anchored = (observed.array() * x.array() + (1.0 - observed.array()) * res.samples.array()).matrix();
        EvalReport rep = evaluate_imputation(enc, anchored, x, mask);
        rep.seed = cfg.seed;
        if (rep.continuous_mse) mse.push_back(*rep.continuous_mse);
        if (rep.categorical_accuracy) acc.push_back(*rep.categorical_accuracy);
        trial_reports.push_back(rep.to_json());
        if (!cfg.ablation) {
          const auto rows = merge_rows(ds.rows, enc.decode_rows(anchored), mask);
          csv::write_file(out_path(cfg, trial_name("imputed", k, cfg.trials)), to_table(enc.columns(), rows),
                          prov.comment());
          csv::write_file(out_path(cfg, trial_name("mask", k, cfg.trials)), mask_to_table(enc, mask),
                          prov.comment());
        }
      }
      const Stat ms = summarize(mse);
      const Stat as = summarize(acc);
      auto cell = [](const Stat& s, double v) { return s.n == 0 ? std::string() : csv::format_double(v); };
      ablation.rows.push_back({imputation_loss_name(loss), sched_name, std::to_string(cfg.trials),
                               cell(ms, ms.mean), cell(ms, ms.stddev), cell(as, as.mean), cell(as, as.stddev)});
      variants.push_back({{"loss", imputation_loss_name(loss)},
                          {"schedule", sched_name},
                          {"trials", trial_reports},
                          {"continuous_mse", stat_json(mse)},
                          {"categorical_accuracy", stat_json(acc)}});
    }
  }
  json report{{"provenance", prov.to_json()},
              {"mechanism", cfg.mechanism},
              {"ratio", cfg.ratio},
              {"eta", cfg.eta},
              {"rows", x.rows()},
              {"variants", variants}};
  write_json(out_path(cfg, "report.json"), report);
  if (cfg.ablation) csv::write_file(out_path(cfg, "ablation.csv"), ablation, prov.comment());
  return report;
}

// ---------------------------------------------------------------- constrain

json cmd_constrain(const RunConfig& cfg, const Logger& log) {
  if (cfg.trials < 1) throw UsageError("--trials must be at least 1");
  if (cfg.num_samples == 0) throw UsageError("--samples must be positive");
  const LoadedCheckpoint lc = load_ckpt(cfg, "constrain");
  const Checkpoint& ck = lc.ckpt;
  const Encoder& enc = ck.encoder;
  const Provenance prov{cfg.seed, cfg.hash(), lc.sha256};

  json spec_json;
  json scenario_json = nullptr;
  if (!cfg.constraint.empty()) {
    try {
      spec_json = json::parse(read_file(cfg.constraint));
    } catch (const json::exception& e) {
      throw SpecError(cfg.constraint + ": " + e.what());
    }
  } else {
    require(cfg.data, "data", "constrain (scenario mode)");
    const Dataset ds = load_against(cfg.data, ck.schema);
    ScenarioOptions opts;
    opts.quantile = cfg.quantile;
    if (!std::isnan(cfg.threshold)) opts.threshold = cfg.threshold;
    if (!cfg.range_column.empty()) opts.range_column = cfg.range_column;
    if (!cfg.category_column.empty()) opts.category_column = cfg.category_column;
    if (!cfg.category.empty()) opts.category = cfg.category;
    const ConstraintScenario sc =
        gen_constraint_scenario(parse_scenario(cfg.scenario), ds.rows, enc, derive_seed(cfg.seed, 3), opts);
    spec_json = sc.spec_json;
    scenario_json = sc.to_json();
  }
  const ConstraintSpec spec = parse_constraint(spec_json, enc);
  const GuidanceConfig gcfg = guidance_config(cfg, cfg.eta_schedule);

  std::vector<double> guided;
  std::vector<double> control;
  json trials = json::array();
  for (int k = 0; k < cfg.trials; ++k) {
    const std::uint64_t seed = derive_seed(cfg.seed, 3000 + static_cast<std::uint64_t>(k));
    say(log, "sampling " + std::to_string(cfg.num_samples) + " rows, trial " + std::to_string(k + 1));
    const SampleResult res = harpoon_sample(ck.net, ck.schedule, &spec, gcfg, cfg.num_samples, seed);
    EvalReport rep = evaluate_constraint(enc, res.samples, spec);
    rep.seed = cfg.seed;
    guided.push_back(*rep.violation_rate);
    json t{{"guided", rep.to_json()}};
    csv::write_file(out_path(cfg, trial_name("samples", k, cfg.trials)),
                    to_table(enc.columns(), enc.decode_rows(res.samples)), prov.comment());
    if (cfg.control) {
      GuidanceConfig off = gcfg;
      off.eta = 0.0;
      const SampleResult base = harpoon_sample(ck.net, ck.schedule, &spec, off, cfg.num_samples, seed);
      EvalReport crep = evaluate_constraint(enc, base.samples, spec);
      crep.seed = cfg.seed;
      control.push_back(*crep.violation_rate);
      t["control"] = crep.to_json();
    }
    trials.push_back(t);
  }
  json report{{"provenance", prov.to_json()},
              {"constraint", spec_json},
              {"scenario", scenario_json},
              {"eta", cfg.eta},
              {"schedule", cfg.eta_schedule},
              {"samples", cfg.num_samples},
              {"trials", trials},
              {"violation_rate", stat_json(guided)},
              {"control_violation_rate", stat_json(control)}};
  write_json(out_path(cfg, "report.json"), report);
  return report;
}

// --------------------------------------------------------------------- diag

json cmd_diag(const RunConfig& cfg, const Logger& log) {
  const auto& names = diag_names();
  if (std::find(names.begin(), names.end(), cfg.diag) == names.end()) {
    std::string msg = "unknown diagnostic '" + cfg.diag + "'; available:";
    for (const auto& n : names) msg += " " + n;
    throw UsageError(msg);
  }
  const auto& losses = diag_loss_names();
  if (std::find(losses.begin(), losses.end(), cfg.diag_loss) == losses.end()) {
    std::string msg = "unknown diagnostic loss '" + cfg.diag_loss + "'; available:";
    for (const auto& n : losses) msg += " " + n;
    throw UsageError(msg);
  }

  DiagTable table;
  std::string ckpt_sha;
  if (!cfg.checkpoint.empty()) {
    if (cfg.diag != "angles") {
      throw UsageError("diagnostic '" + cfg.diag + "' needs an analytic manifold; drop --checkpoint");
    }
    require(cfg.data, "data", "diag with a checkpoint");
    const LoadedCheckpoint lc = load_ckpt(cfg, "diag");
    ckpt_sha = lc.sha256;
    const Dataset ds = load_against(cfg.data, lc.ckpt.schema);
    const Matrix x = lc.ckpt.encoder.encode_rows(ds.rows);
    table = angle_profile_residual(lc.ckpt.net, lc.ckpt.schedule, data_spec_factory(cfg.diag_loss, lc.ckpt.encoder),
                                   x, cfg.diag_samples, t_grid_of(cfg, lc.ckpt.schedule.steps()),
                                   derive_seed(cfg.seed, 4));
  } else {
    const SyntheticManifold m = make_manifold(cfg);
    const NoiseSchedule sched = schedule_of(cfg);
    const auto grid = t_grid_of(cfg, sched.steps());
    if (cfg.diag == "shell") {
      for (int t : grid) {
        const ShellCheck s = shell_distance_check(m, sched, cfg.diag_samples, t, derive_seed(cfg.seed, 5 + static_cast<std::uint64_t>(t)));
        table.push_back({t, s.alpha_bar, "shell_measured", s.measured, s.measured_std, cfg.diag_samples});
        table.push_back({t, s.alpha_bar, "shell_predicted", s.predicted, 0.0, 1});
      }
    } else {
      say(log, "training a " + std::to_string(cfg.diag_hidden) + "-wide denoiser on " + std::to_string(cfg.rows) +
                   " manifold samples");
      const DenoiserNet net = train_synthetic(cfg, m, sched, log);
      if (cfg.diag == "angles") {
        table = angle_profile(net, sched, synthetic_spec_factory(cfg.diag_loss, m.ambient_dim(), m.radius() > 0 ? m.radius() : 1.0),
                              m, cfg.diag_samples, grid, derive_seed(cfg.seed, 4));
      } else {
        table = projection_error_profile(net, sched, m, cfg.diag_samples, grid, derive_seed(cfg.seed, 4));
      }
    }
  }
  const Provenance prov{cfg.seed, cfg.hash(), ckpt_sha};
  if (cfg.diag == "angles") {
    DiagTable main;
    for (const auto& r : table) {
      if (r.metric == "angle_deg") main.push_back(r);
    }
    csv::write_file(out_path(cfg, "diag_angles.csv"), diag_to_table(main), prov.comment());
    csv::write_file(out_path(cfg, "diag_angles_detail.csv"), diag_to_table(table), prov.comment());
  } else {
    csv::write_file(out_path(cfg, "diag_" + cfg.diag + ".csv"), diag_to_table(table), prov.comment());
  }
  json rows = json::array();
  for (const auto& r : table) {
    rows.push_back({{"t", r.t}, {"alpha_bar", r.alpha_bar}, {"metric", r.metric}, {"mean", r.mean}, {"std", r.stddev}, {"n", r.n}});
  }
  return {{"provenance", prov.to_json()}, {"diag", cfg.diag}, {"loss", cfg.diag_loss}, {"rows", rows}};
}

// -------------------------------------------------------------------- synth

json cmd_synth(const RunConfig& cfg, const Logger& log) {
  if (!(cfg.test_fraction >= 0.0 && cfg.test_fraction < 1.0)) {
    throw UsageError("--test-fraction must be in [0, 1)");
  }
  if (cfg.rows < 2) throw UsageError("--rows must be at least 2");
  TabularSchema schema;
  std::vector<RawRow> rows;
  json meta{{"kind", cfg.synth}, {"seed", cfg.seed}, {"rows", cfg.rows}};

  auto continuous_from = [&](const Matrix& x, const std::string& prefix) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      schema.columns.push_back({prefix + std::to_string(c), ColumnKind::Continuous, 0, {}});
    }
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      RawRow row;
      for (Eigen::Index c = 0; c < x.cols(); ++c) row.emplace_back(x(r, c));
      rows.push_back(std::move(row));
    }
  };

  if (cfg.synth == "circle" || cfg.synth == "sphere" || cfg.synth == "subspace") {
    const SyntheticManifold m = make_manifold(cfg);
    continuous_from(m.sample(cfg.rows, derive_seed(cfg.seed, 1)), "x");
    meta["manifold"] = m.to_json();
  } else if (cfg.synth == "gaussian") {
    if (cfg.ambient < 2) throw UsageError("gaussian needs --ambient >= 2");
    if (!(cfg.rho > -1.0 / static_cast<double>(cfg.ambient - 1) && cfg.rho < 1.0)) {
      throw UsageError("--rho must keep the equicorrelation matrix positive definite");
    }
    const auto d = static_cast<Eigen::Index>(cfg.ambient);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Constant(d, d, cfg.rho);
    cov.diagonal().setOnes();
    const Eigen::MatrixXd l = cov.llt().matrixL();
    Rng rng(derive_seed(cfg.seed, 1));
    const Matrix z = standard_normal(rng, static_cast<Eigen::Index>(cfg.rows), d);
    continuous_from(z * l.transpose(), "x");
    meta["covariance"] = {{"equicorrelation", cfg.rho}, {"variance", 1.0}};
  } else if (cfg.synth == "mixture") {
    if (cfg.components < 1 || cfg.cardinality < 2 || cfg.n_continuous + cfg.n_categorical == 0) {
      throw UsageError("mixture needs components >= 1, cardinality >= 2 and at least one column");
    }
    Rng rng(derive_seed(cfg.seed, 1));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::vector<double>> means(cfg.components);
    std::vector<std::vector<std::vector<double>>> probs(cfg.components);
    json comps = json::array();
    for (std::size_t k = 0; k < cfg.components; ++k) {
      for (std::size_t c = 0; c < cfg.n_continuous; ++c) means[k].push_back(3.0 * normal(rng));
      for (std::size_t c = 0; c < cfg.n_categorical; ++c) {
        std::vector<double> p(cfg.cardinality);
        double total = 0.0;
        for (auto& v : p) {
          v = std::exp(1.5 * normal(rng));
          total += v;
        }
        for (auto& v : p) v /= total;
        probs[k].push_back(p);
      }
      comps.push_back({{"weight", 1.0 / static_cast<double>(cfg.components)},
                       {"means", means[k]},
                       {"stddev", 1.0},
                       {"class_probabilities", probs[k]}});
    }
    for (std::size_t c = 0; c < cfg.n_continuous; ++c) {
      schema.columns.push_back({"num" + std::to_string(c), ColumnKind::Continuous, 0, {}});
    }
    std::vector<std::string> labels;
    for (std::size_t v = 0; v < cfg.cardinality; ++v) labels.push_back("c" + std::to_string(v));
    for (std::size_t c = 0; c < cfg.n_categorical; ++c) {
      schema.columns.push_back({"cat" + std::to_string(c), ColumnKind::Categorical, cfg.cardinality, labels});
    }
    std::uniform_int_distribution<std::size_t> pick(0, cfg.components - 1);
    for (std::size_t r = 0; r < cfg.rows; ++r) {
      const std::size_t k = pick(rng);
      RawRow row;
      for (std::size_t c = 0; c < cfg.n_continuous; ++c) row.emplace_back(means[k][c] + normal(rng));
      for (std::size_t c = 0; c < cfg.n_categorical; ++c) {
        std::discrete_distribution<std::size_t> cat(probs[k][c].begin(), probs[k][c].end());
        row.emplace_back(labels[cat(rng)]);
      }
      rows.push_back(std::move(row));
    }
    meta["components"] = comps;
  } else {
    throw UsageError("unknown synthetic kind '" + cfg.synth + "' (expected circle, sphere, subspace, gaussian, mixture)");
  }

  const Provenance prov{cfg.seed, cfg.hash(), ""};
  meta["provenance"] = prov.to_json();
  json files = json::object();
  if (cfg.test_fraction > 0.0) {
    const auto n_test = static_cast<std::size_t>(std::round(cfg.test_fraction * static_cast<double>(rows.size())));
    if (n_test == 0 || n_test >= rows.size()) throw UsageError("--test-fraction leaves an empty split");
    std::vector<std::size_t> perm(rows.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    Rng rng(derive_seed(cfg.seed, 2));
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::size_t> test_idx(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::sort(test_idx.begin(), test_idx.end());
    std::vector<bool> is_test(rows.size(), false);
    for (std::size_t i : test_idx) is_test[i] = true;
    std::vector<RawRow> train_rows;
    std::vector<RawRow> test_rows;
    for (std::size_t i = 0; i < rows.size(); ++i) (is_test[i] ? test_rows : train_rows).push_back(rows[i]);
    csv::write_file(out_path(cfg, "train.csv"), to_table(schema.columns, train_rows), prov.comment());
    csv::write_file(out_path(cfg, "test.csv"), to_table(schema.columns, test_rows), prov.comment());
    files["train"] = out_path(cfg, "train.csv").string();
    files["test"] = out_path(cfg, "test.csv").string();
  } else {
    csv::write_file(out_path(cfg, "data.csv"), to_table(schema.columns, rows), prov.comment());
    files["data"] = out_path(cfg, "data.csv").string();
  }
  write_json(out_path(cfg, "schema.json"), schema.to_json());
  write_json(out_path(cfg, "manifold.json"), meta);
  files["schema"] = out_path(cfg, "schema.json").string();
  files["metadata"] = out_path(cfg, "manifold.json").string();
  say(log, "wrote " + std::to_string(rows.size()) + " " + cfg.synth + " rows");
  return {{"provenance", prov.to_json()}, {"files", files}};
}

// --------------------------------------------------------------------- eval

json cmd_eval(const RunConfig& cfg, const Logger& log) {
  const LoadedCheckpoint lc = load_ckpt(cfg, "eval");
  const Encoder& enc = lc.ckpt.encoder;
  const Provenance prov{cfg.seed, cfg.hash(), lc.sha256};
  json report{{"provenance", prov.to_json()}};
  if (!cfg.imputed.empty()) {
    require(cfg.data, "data", "eval (imputation)");
    require(cfg.mask, "mask", "eval (imputation)");
    const Dataset truth = load_against(cfg.data, lc.ckpt.schema);
    const Dataset imputed = load_against(cfg.imputed, lc.ckpt.schema);
    if (truth.rows.size() != imputed.rows.size()) throw DataError("imputed and truth row counts differ");
    const BitMatrix mask = mask_from_table(enc, read_csv(cfg.mask));
    EvalReport rep = evaluate_imputation(enc, enc.encode_rows(imputed.rows), enc.encode_rows(truth.rows), mask);
    rep.seed = cfg.seed;
    report["imputation"] = rep.to_json();
    say(log, "scored " + std::to_string(truth.rows.size()) + " imputed rows");
  } else if (!cfg.samples_file.empty()) {
    require(cfg.constraint, "constraint", "eval (constraint)");
    const Dataset samples = load_against(cfg.samples_file, lc.ckpt.schema);
    const ConstraintSpec spec = parse_constraint(json::parse(read_file(cfg.constraint)), enc);
    EvalReport rep = evaluate_constraint(enc, enc.encode_rows(samples.rows), spec);
    rep.seed = cfg.seed;
    report["constraint"] = rep.to_json();
    say(log, "scored " + std::to_string(samples.rows.size()) + " samples");
  } else {
    throw UsageError("eval needs --imputed (with --data and --mask) or --samples-file (with --constraint)");
  }
  write_json(out_path(cfg, "eval_report.json"), report);
  return report;
}

}  // namespace tabguide
