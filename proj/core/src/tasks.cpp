#include "tabguide/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "tabguide/errors.hpp"
#include "tabguide/rng.hpp"

namespace tabguide {

const char* mechanism_name(MaskMechanism m) {
  switch (m) {
    case MaskMechanism::MCAR: return "mcar";
    case MaskMechanism::MAR: return "mar";
    case MaskMechanism::MNAR: return "mnar";
  }
  return "mcar";
}

MaskMechanism parse_mechanism(const std::string& s) {
  if (s == "mcar" || s == "MCAR") return MaskMechanism::MCAR;
  if (s == "mar" || s == "MAR") return MaskMechanism::MAR;
  if (s == "mnar" || s == "MNAR") return MaskMechanism::MNAR;
  throw TaskError("unknown mask mechanism '" + s + "' (expected mcar, mar, mnar)");
}

double MaskTask::missing_fraction() const {
  if (mask.size() == 0) return 0.0;
  return mask.cast<double>().sum() / static_cast<double>(mask.size());
}

MaskTask gen_mcar(std::size_t rows, std::size_t cols, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw TaskError("MCAR ratio must be in [0, 1)");
  MaskTask task;
  task.mechanism = MaskMechanism::MCAR;
  task.ratio = ratio;
  task.seed = seed;
  task.mask.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  Rng rng(seed);
  for (Eigen::Index i = 0; i < task.mask.size(); ++i) {
    task.mask.data()[i] = uniform01(rng) < ratio ? 1 : 0;
  }
  return task;
}

std::size_t default_observed_columns(std::size_t cols) {
  if (cols < 2) return 1;
  const auto n = static_cast<std::size_t>(std::ceil(0.3 * static_cast<double>(cols)));
  return std::clamp<std::size_t>(n, 1, cols - 1);
}

namespace {

/// Column-wise z-scores; constant columns become zero.
Matrix zscore(const Matrix& x) {
  Matrix out = x;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mean = x.col(c).mean();
    const double var = (x.col(c).array() - mean).square().mean();
    const double sd = std::sqrt(var);
    if (sd > 0.0) {
      out.col(c) = (x.col(c).array() - mean) / sd;
    } else {
      out.col(c).setZero();
    }
  }
  return out;
}

/// Logistic masking of the `target` columns driven by the `driver` columns.
/// `fixed_missing` cells already masked elsewhere count toward the realized
/// fraction, which is measured over `denominator` cells.
struct LogisticMasker {
  Matrix logits;    // rows × |target|
  Matrix uniforms;  // rows × |target|

  LogisticMasker(const Matrix& features, const std::vector<std::size_t>& driver,
                 const std::vector<std::size_t>& target, Rng& rng) {
    const Eigen::Index rows = features.rows();
    Matrix x(rows, static_cast<Eigen::Index>(driver.size()));
    for (std::size_t k = 0; k < driver.size(); ++k) {
      x.col(static_cast<Eigen::Index>(k)) = features.col(static_cast<Eigen::Index>(driver[k]));
    }
    x = zscore(x);
    Matrix w = standard_normal(rng, static_cast<Eigen::Index>(driver.size()),
                               static_cast<Eigen::Index>(target.size()));
    logits = x * w;
    uniforms.resize(rows, static_cast<Eigen::Index>(target.size()));
    for (Eigen::Index i = 0; i < uniforms.size(); ++i) uniforms.data()[i] = uniform01(rng);
  }

  std::size_t count(double bias) const {
    std::size_t n = 0;
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
      if (uniforms.data()[i] < ad::kernels::sigmoid(logits.data()[i] + bias)) ++n;
    }
    return n;
  }

  /// Bisection for the bias whose realized count (plus `fixed`) over
  /// `denominator` cells is closest to `ratio`.
  double solve(double ratio, std::size_t fixed, std::size_t denominator) const {
    auto frac = [&](double b) {
      return static_cast<double>(count(b) + fixed) / static_cast<double>(denominator);
    };
    double lo = -20.0;
    double hi = 20.0;
    if (frac(lo) > ratio || frac(hi) < ratio) {
      throw TaskError("bias line search cannot bracket the requested missing ratio");
    }
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (frac(mid) < ratio) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return std::abs(frac(lo) - ratio) <= std::abs(frac(hi) - ratio) ? lo : hi;
  }
};

void check_ratio(double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw TaskError("mask ratio must be in (0, 1)");
}

}  // namespace

MaskTask gen_mar(const Matrix& features, double ratio, std::size_t n_observed_cols,
                 std::uint64_t seed) {
  check_ratio(ratio);
  const auto cols = static_cast<std::size_t>(features.cols());
  if (n_observed_cols < 1 || n_observed_cols >= cols) {
    throw TaskError("MAR needs 1 <= observed columns < " + std::to_string(cols));
  }
  Rng rng(seed);
  std::vector<std::size_t> perm(cols);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::size_t> observed(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_observed_cols));
  std::vector<std::size_t> maskable(perm.begin() + static_cast<std::ptrdiff_t>(n_observed_cols), perm.end());
  std::sort(observed.begin(), observed.end());
  std::sort(maskable.begin(), maskable.end());

  LogisticMasker lm(features, observed, maskable, rng);
  const double bias = lm.solve(ratio, 0, static_cast<std::size_t>(lm.logits.size()));

  MaskTask task;
  task.mechanism = MaskMechanism::MAR;
  task.ratio = ratio;
  task.seed = seed;
  task.bias = bias;
  task.observed_columns = observed;
  task.logistic_columns = maskable;
  task.mask = BitMatrix::Zero(features.rows(), features.cols());
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    for (std::size_t k = 0; k < maskable.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      if (lm.uniforms(r, kk) < ad::kernels::sigmoid(lm.logits(r, kk) + bias)) {
        task.mask(r, static_cast<Eigen::Index>(maskable[k])) = 1;
      }
    }
  }
  return task;
}

MaskTask gen_mnar(const Matrix& features, double ratio, std::uint64_t seed) {
  check_ratio(ratio);
  const auto cols = static_cast<std::size_t>(features.cols());
  if (cols < 2) throw TaskError("MNAR needs at least two columns to form two groups");
  Rng rng(seed);
  std::vector<std::size_t> perm(cols);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t split = cols / 2;
  std::vector<std::size_t> group_one(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(split));
  std::vector<std::size_t> group_two(perm.begin() + static_cast<std::ptrdiff_t>(split), perm.end());
  std::sort(group_one.begin(), group_one.end());
  std::sort(group_two.begin(), group_two.end());

  MaskTask task;
  task.mechanism = MaskMechanism::MNAR;
  task.ratio = ratio;
  task.seed = seed;
  task.observed_columns = group_one;
  task.logistic_columns = group_two;
  task.mask = BitMatrix::Zero(features.rows(), features.cols());

  std::size_t fixed = 0;
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    for (std::size_t c : group_one) {
      if (uniform01(rng) < ratio) {
        task.mask(r, static_cast<Eigen::Index>(c)) = 1;
        ++fixed;
      }
    }
  }
  LogisticMasker lm(features, group_one, group_two, rng);
  const double bias = lm.solve(ratio, fixed, static_cast<std::size_t>(task.mask.size()));
  task.bias = bias;
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    for (std::size_t k = 0; k < group_two.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      if (lm.uniforms(r, kk) < ad::kernels::sigmoid(lm.logits(r, kk) + bias)) {
        task.mask(r, static_cast<Eigen::Index>(group_two[k])) = 1;
      }
    }
  }
  return task;
}

// ---------------------------------------------------------------- scenarios

const char* scenario_name(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::Range: return "range";
    case ScenarioKind::Category: return "category";
    case ScenarioKind::Conjunction: return "and";
    case ScenarioKind::Disjunction: return "or";
  }
  return "range";
}

ScenarioKind parse_scenario(const std::string& s) {
  if (s == "range") return ScenarioKind::Range;
  if (s == "category") return ScenarioKind::Category;
  if (s == "and" || s == "conjunction") return ScenarioKind::Conjunction;
  if (s == "or" || s == "disjunction") return ScenarioKind::Disjunction;
  throw TaskError("unknown scenario '" + s + "' (expected range, category, and, or)");
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw TaskError("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw TaskError("quantile level must be in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

nlohmann::json ConstraintScenario::to_json() const {
  nlohmann::json j{{"kind", scenario_name(kind)},
                   {"coverage", coverage},
                   {"child_coverage", child_coverage},
                   {"seed", seed},
                   {"spec", spec_json}};
  if (!range_column.empty()) j["range_column"] = range_column;
  if (threshold) j["threshold"] = *threshold;
  if (!category_column.empty()) j["category_column"] = category_column;
  if (category) j["category"] = *category;
  return j;
}

ConstraintScenario gen_constraint_scenario(ScenarioKind kind, const std::vector<RawRow>& train,
                                           const Encoder& enc, std::uint64_t seed,
                                           const ScenarioOptions& opts) {
  if (train.empty()) throw TaskError("scenario generation needs training rows");
  Rng rng(seed);
  const auto& blocks = enc.blocks();
  const bool need_range = kind != ScenarioKind::Category;
  const bool need_category = kind != ScenarioKind::Range;

  ConstraintScenario sc;
  sc.kind = kind;
  sc.seed = seed;

  auto pick_column = [&](ColumnKind want, const std::optional<std::string>& requested) {
    if (requested) {
      const std::size_t idx = enc.column_index(*requested);
      if (blocks[idx].column.kind != want) {
        throw TaskError("column '" + *requested + "' has the wrong kind for this scenario");
      }
      return idx;
    }
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      if (blocks[i].column.kind == want) candidates.push_back(i);
    }
    if (candidates.empty()) {
      throw TaskError(want == ColumnKind::Continuous ? "scenario needs a continuous column"
                                                     : "scenario needs a categorical column");
    }
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    return candidates[pick(rng)];
  };

  std::vector<bool> in_range(train.size(), true);
  std::vector<bool> in_category(train.size(), true);
  nlohmann::json range_json;
  nlohmann::json category_json;

  if (need_range) {
    const std::size_t col = pick_column(ColumnKind::Continuous, opts.range_column);
    std::vector<double> values;
    values.reserve(train.size());
    for (const auto& row : train) values.push_back(std::get<double>(row[col]));
    const double thr = opts.threshold ? *opts.threshold : quantile(values, opts.quantile);
    sc.range_column = blocks[col].column.name;
    sc.threshold = thr;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < train.size(); ++r) {
      in_range[r] = values[r] >= thr;
      hits += in_range[r] ? 1 : 0;
    }
    sc.child_coverage.push_back(static_cast<double>(hits) / static_cast<double>(train.size()));
    range_json = {{"type", "inequality"}, {"column", sc.range_column}, {"lower", thr}};
  }

  if (need_category) {
    const std::size_t col = pick_column(ColumnKind::Categorical, opts.category_column);
    std::map<std::string, std::size_t> counts;
    for (const auto& row : train) ++counts[std::get<std::string>(row[col])];
    std::string target;
    if (opts.category) {
      target = *opts.category;
      enc.category_index(col, target);
    } else {
      std::size_t majority = 0;
      for (const auto& [k, v] : counts) majority = std::max(majority, v);
      std::vector<std::string> options;
      for (const auto& [k, v] : counts) {
        if (v < majority) options.push_back(k);
      }
      if (options.empty()) {
        throw TaskError("column '" + blocks[col].column.name + "' has no non-majority class");
      }
      std::uniform_int_distribution<std::size_t> pick(0, options.size() - 1);
      target = options[pick(rng)];
    }
    sc.category_column = blocks[col].column.name;
    sc.category = target;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < train.size(); ++r) {
      in_category[r] = std::get<std::string>(train[r][col]) == target;
      hits += in_category[r] ? 1 : 0;
    }
    sc.child_coverage.push_back(static_cast<double>(hits) / static_cast<double>(train.size()));
    category_json = {{"type", "equality"}, {"column", sc.category_column}, {"value", target}};
  }

  std::size_t hits = 0;
  for (std::size_t r = 0; r < train.size(); ++r) {
    bool ok = true;
    switch (kind) {
      case ScenarioKind::Range: ok = in_range[r]; break;
      case ScenarioKind::Category: ok = in_category[r]; break;
      case ScenarioKind::Conjunction: ok = in_range[r] && in_category[r]; break;
      case ScenarioKind::Disjunction: ok = in_range[r] || in_category[r]; break;
    }
    hits += ok ? 1 : 0;
  }
  sc.coverage = static_cast<double>(hits) / static_cast<double>(train.size());

  switch (kind) {
    case ScenarioKind::Range: sc.spec_json = range_json; break;
    case ScenarioKind::Category: sc.spec_json = category_json; break;
    case ScenarioKind::Conjunction:
      sc.spec_json = {{"type", "and"}, {"children", {range_json, category_json}}};
      break;
    case ScenarioKind::Disjunction:
      sc.spec_json = {{"type", "or"}, {"children", {range_json, category_json}}};
      break;
  }
  return sc;
}

}  // namespace tabguide
