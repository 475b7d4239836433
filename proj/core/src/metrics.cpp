#include "tabguide/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tabguide/errors.hpp"
#include "tabguide/rng.hpp"

namespace tabguide {

namespace {

void check_mask_shape(const BitMatrix& mask, Eigen::Index rows, std::size_t cols) {
  if (mask.rows() != rows || static_cast<std::size_t>(mask.cols()) != cols) {
    throw DimensionError("mask is " + std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()) +
                         "; expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

struct Moments {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;

  void add(double v) {
    sum += v;
    sum_sq += v * v;
    ++n;
  }
  double mean() const { return n == 0 ? 0.0 : sum / static_cast<double>(n); }
  double stddev() const {
    if (n < 2) return 0.0;
    const double m = mean();
    const double var = (sum_sq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1);
    return std::sqrt(std::max(var, 0.0));
  }
};

DiagRow make_row(int t, double alpha_bar, std::string metric, const Moments& m) {
  return DiagRow{t, alpha_bar, std::move(metric), m.mean(), m.stddev(), m.n};
}

struct Noised {
  Matrix x0;
  Matrix xt;
};

Noised noise_samples(const NoiseSchedule& sched, const Matrix& x0, int t, std::uint64_t seed) {
  Rng rng(seed);
  const Matrix eps = standard_normal(rng, x0.rows(), x0.cols());
  return {x0, forward_noise(sched, x0, t, eps)};
}

constexpr double kDeg = 180.0 / std::numbers::pi;

/// Shared body of the two angle profiles; `normal_for` returns unit reference
/// normals given x_t and x̂_0.
template <typename NormalFn>
DiagTable angle_table(const NoiseModel& model, const NoiseSchedule& sched,
                      const SpecFactory& spec_for, const std::vector<int>& t_list,
                      std::uint64_t seed, const std::function<Matrix(int)>& clean_for,
                      NormalFn normal_for) {
  DiagTable out;
  for (int t : t_list) {
    sched.check_step(t);
    const Matrix x0 = clean_for(t);
    const Noised s = noise_samples(sched, x0, t, derive_seed(seed, 2 * static_cast<std::uint64_t>(t) + 1));
    const ConstraintSpec spec = spec_for(s.x0);
    const Matrix g = guidance_gradient(model, sched, spec, s.xt, t);
    const Matrix xhat = dirty_estimate(model, sched, s.xt, t);
    const Matrix nu = normal_for(s.xt, xhat, t);
    Moments signed_m;
    Moments folded_m;
    Moments zero;
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const auto a = angle_between(g.row(r), nu.row(r));
      if (!a) {
        zero.add(1.0);
        continue;
      }
      signed_m.add(*a);
      folded_m.add(std::min(*a, 180.0 - *a));
    }
    const double ab = sched.alpha_bar(t);
    out.push_back(make_row(t, ab, "angle_deg", signed_m));
    out.push_back(make_row(t, ab, "angle_folded_deg", folded_m));
    out.push_back(DiagRow{t, ab, "zero_gradients", static_cast<double>(zero.n), 0.0,
                          static_cast<std::size_t>(g.rows())});
  }
  return out;
}

}  // namespace

AffineProjectorModel::AffineProjectorModel(const SyntheticManifold& flat, const NoiseSchedule& sched)
    : sched_(sched) {
  if (flat.kind() != SyntheticManifold::Kind::Affine) {
    throw ConfigError("the projector model needs a flat manifold");
  }
  const auto d = static_cast<Eigen::Index>(flat.ambient_dim());
  const Matrix p = flat.basis().transpose() * flat.basis();
  residual_ = Matrix::Identity(d, d) - p;
  anchor_ = flat.offset() - flat.offset() * p;
}

// ε = (x (I − P) − √ᾱ (o − oP)) / √(1 − ᾱ), row by row.
Matrix AffineProjectorModel::predict(const Matrix& x, std::span<const int> steps) const {
  if (static_cast<Eigen::Index>(steps.size()) != x.rows()) throw DimensionError("one step per row required");
  Matrix out = x * residual_;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double ab = sched_.alpha_bar(steps[static_cast<std::size_t>(r)]);
    out.row(r) = (out.row(r) - std::sqrt(ab) * anchor_.row(0)) / std::sqrt(1.0 - ab);
  }
  return out;
}

ad::Var AffineProjectorModel::record(ad::Tape& tape, ad::Var x, std::span<const int> steps) const {
  const Eigen::Index n = tape.value(x).rows();
  if (static_cast<Eigen::Index>(steps.size()) != n) throw DimensionError("one step per row required");
  Matrix row_scale = Matrix::Zero(n, n);
  Matrix shift(n, anchor_.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const double ab = sched_.alpha_bar(steps[static_cast<std::size_t>(r)]);
    row_scale(r, r) = 1.0 / std::sqrt(1.0 - ab);
    shift.row(r) = -std::sqrt(ab) / std::sqrt(1.0 - ab) * anchor_.row(0);
  }
  ad::Var normal = tape.matmul(x, tape.leaf_ref(residual_, false));
  ad::Var scaled = tape.matmul(tape.leaf(std::move(row_scale), false), normal);
  return tape.add(scaled, tape.leaf(std::move(shift), false));
}

double imputation_mse(const Matrix& imputed, const Matrix& truth, const BitMatrix& mask,
                      const Encoder& enc) {
  if (imputed.rows() != truth.rows() || imputed.cols() != truth.cols() ||
      static_cast<std::size_t>(imputed.cols()) != enc.dim()) {
    throw DimensionError("imputed and truth must both be rows x " + std::to_string(enc.dim()));
  }
  check_mask_shape(mask, imputed.rows(), enc.num_columns());
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < enc.num_columns(); ++c) {
    const ColumnBlock& b = enc.blocks()[c];
    if (b.column.kind != ColumnKind::Continuous) continue;
    const auto off = static_cast<Eigen::Index>(b.offset);
    for (Eigen::Index r = 0; r < imputed.rows(); ++r) {
      if (mask(r, static_cast<Eigen::Index>(c)) == 0) continue;
      const double e = imputed(r, off) - truth(r, off);
      total += e * e;
      ++n;
    }
  }
  if (n == 0) throw EmptyMetricError("no masked continuous cells to score");
  return total / static_cast<double>(n);
}

double imputation_accuracy(const std::vector<RawRow>& imputed, const std::vector<RawRow>& truth,
                           const BitMatrix& mask) {
  if (imputed.size() != truth.size() || static_cast<std::size_t>(mask.rows()) != truth.size()) {
    throw DimensionError("imputed, truth and mask row counts differ");
  }
  std::size_t hits = 0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < truth.size(); ++r) {
    if (imputed[r].size() != truth[r].size() || static_cast<std::size_t>(mask.cols()) != truth[r].size()) {
      throw DimensionError("row " + std::to_string(r) + " has mismatched column counts");
    }
    for (std::size_t c = 0; c < truth[r].size(); ++c) {
      if (mask(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) == 0) continue;
      const auto* want = std::get_if<std::string>(&truth[r][c]);
      if (want == nullptr) continue;
      const auto* got = std::get_if<std::string>(&imputed[r][c]);
      ++n;
      if (got != nullptr && *got == *want) ++hits;
    }
  }
  if (n == 0) throw EmptyMetricError("no masked categorical cells to score");
  return 100.0 * static_cast<double>(hits) / static_cast<double>(n);
}

namespace {

struct Checker {
  const Matrix& x;

  std::vector<bool> operator()(const Imputation&) const {
    throw SpecError("violation rate does not apply to imputation specs");
  }

  std::vector<bool> operator()(const CategoricalCE& s) const {
    std::vector<bool> ok(static_cast<std::size_t>(x.rows()), true);
    for (const auto& b : s.blocks) {
      for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const int want = b.target.size() == 1 ? b.target[0] : b.target[static_cast<std::size_t>(r)];
        if (want < 0) continue;
        Eigen::Index arg = 0;
        x.row(r).segment(static_cast<Eigen::Index>(b.offset), static_cast<Eigen::Index>(b.width)).maxCoeff(&arg);
        if (arg != want) ok[static_cast<std::size_t>(r)] = false;
      }
    }
    return ok;
  }

  std::vector<bool> operator()(const Inequality& s) const {
    const Matrix g = s.selector.apply(x);
    std::vector<bool> ok(static_cast<std::size_t>(x.rows()), true);
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      for (Eigen::Index j = 0; j < g.cols(); ++j) {
        if (s.lower && g(r, j) < *s.lower - 1e-9) ok[static_cast<std::size_t>(r)] = false;
        if (s.upper && g(r, j) > *s.upper + 1e-9) ok[static_cast<std::size_t>(r)] = false;
      }
    }
    return ok;
  }

  std::vector<bool> operator()(const Equality& s) const {
    const Matrix h = s.selector.apply(x);
    std::vector<bool> ok(static_cast<std::size_t>(x.rows()), true);
    for (Eigen::Index r = 0; r < h.rows(); ++r) {
      for (Eigen::Index j = 0; j < h.cols(); ++j) {
        if (std::abs(h(r, j) - s.value[static_cast<std::size_t>(j)]) > 1e-6) {
          ok[static_cast<std::size_t>(r)] = false;
        }
      }
    }
    return ok;
  }

  std::vector<bool> operator()(const Conjunction& s) const {
    std::vector<bool> ok(static_cast<std::size_t>(x.rows()), true);
    for (const auto& c : s.children) {
      const auto child = std::visit(*this, c.node);
      for (std::size_t r = 0; r < ok.size(); ++r) ok[r] = ok[r] && child[r];
    }
    return ok;
  }

  std::vector<bool> operator()(const Disjunction& s) const {
    std::vector<bool> ok(static_cast<std::size_t>(x.rows()), false);
    for (const auto& c : s.children) {
      const auto child = std::visit(*this, c.node);
      for (std::size_t r = 0; r < ok.size(); ++r) ok[r] = ok[r] || child[r];
    }
    return ok;
  }
};

double percent_false(const std::vector<bool>& ok) {
  if (ok.empty()) throw EmptyMetricError("no samples to check");
  const auto bad = std::count(ok.begin(), ok.end(), false);
  return 100.0 * static_cast<double>(bad) / static_cast<double>(ok.size());
}

}  // namespace

std::vector<bool> satisfied(const ConstraintSpec& spec, const Matrix& samples) {
  validate(spec, static_cast<std::size_t>(samples.cols()), static_cast<std::size_t>(samples.rows()));
  return std::visit(Checker{samples}, spec.node);
}

double violation_rate(const ConstraintSpec& spec, const Matrix& samples) {
  return percent_false(satisfied(spec, samples));
}

std::optional<double> angle_between(const Matrix& a, const Matrix& b) {
  if (a.size() != b.size()) throw DimensionError("angle_between: operand sizes differ");
  const double na = a.norm();
  const double nb = b.norm();
  if (na < 1e-14 || nb < 1e-14) return std::nullopt;
  double c = a.cwiseProduct(b).sum() / (na * nb);
  c = std::clamp(c, -1.0, 1.0);
  return std::acos(c) * kDeg;
}

DiagTable angle_profile(const NoiseModel& model, const NoiseSchedule& sched,
                        const SpecFactory& spec_for, const SyntheticManifold& manifold,
                        std::size_t n_samples, const std::vector<int>& t_list, std::uint64_t seed) {
  auto clean = [&](int t) {
    return manifold.sample(n_samples, derive_seed(seed, 2 * static_cast<std::uint64_t>(t)));
  };
  auto normal = [&](const Matrix&, const Matrix& xhat, int) {
    return manifold.reference_normal(xhat, manifold.project(xhat));
  };
  return angle_table(model, sched, spec_for, t_list, seed, clean, normal);
}

DiagTable angle_profile_residual(const NoiseModel& model, const NoiseSchedule& sched,
                                 const SpecFactory& spec_for, const Matrix& data,
                                 std::size_t n_samples, const std::vector<int>& t_list,
                                 std::uint64_t seed) {
  if (data.rows() == 0) throw EmptyMetricError("no data rows for the angle profile");
  auto clean = [&](int t) {
    Rng rng(derive_seed(seed, 2 * static_cast<std::uint64_t>(t)));
    std::uniform_int_distribution<Eigen::Index> pick(0, data.rows() - 1);
    Matrix x0(static_cast<Eigen::Index>(n_samples), data.cols());
    for (Eigen::Index r = 0; r < x0.rows(); ++r) x0.row(r) = data.row(pick(rng));
    return x0;
  };
  auto normal = [&](const Matrix& xt, const Matrix& xhat, int t) {
    return Matrix(xt / std::sqrt(sched.alpha_bar(t)) - xhat);
  };
  return angle_table(model, sched, spec_for, t_list, seed, clean, normal);
}

DiagTable projection_error_profile(const NoiseModel& model, const NoiseSchedule& sched,
                                   const SyntheticManifold& manifold, std::size_t n_samples,
                                   const std::vector<int>& t_list, std::uint64_t seed) {
  DiagTable out;
  for (int t : t_list) {
    sched.check_step(t);
    const Matrix x0 = manifold.sample(n_samples, derive_seed(seed, 2 * static_cast<std::uint64_t>(t)));
    const Noised s = noise_samples(sched, x0, t, derive_seed(seed, 2 * static_cast<std::uint64_t>(t) + 1));
    const double ab = sched.alpha_bar(t);
    const Matrix xhat = dirty_estimate(model, sched, s.xt, t);
    const Matrix proj = manifold.project(s.xt / std::sqrt(ab));
    Moments m;
    for (Eigen::Index r = 0; r < xhat.rows(); ++r) m.add((xhat.row(r) - proj.row(r)).norm());
    out.push_back(make_row(t, ab, "projection_error", m));
  }
  return out;
}

ShellCheck shell_distance_at(const SyntheticManifold& manifold, double alpha_bar,
                             std::size_t n_samples, std::uint64_t seed) {
  if (!(alpha_bar > 0.0 && alpha_bar <= 1.0)) throw ConfigError("alpha_bar must be in (0, 1]");
  const Matrix x0 = manifold.sample(n_samples, derive_seed(seed, 0));
  Rng rng(derive_seed(seed, 1));
  const Matrix eps = standard_normal(rng, x0.rows(), x0.cols());
  const double s = std::sqrt(alpha_bar);
  const Matrix xt = s * x0 + std::sqrt(1.0 - alpha_bar) * eps;
  const Matrix proj = manifold.project(xt / s);
  Moments m;
  for (Eigen::Index r = 0; r < xt.rows(); ++r) m.add((xt.row(r) - s * proj.row(r)).norm());
  const double codim = static_cast<double>(manifold.ambient_dim() - manifold.intrinsic_dim());
  return ShellCheck{alpha_bar, m.mean(), m.stddev(), std::sqrt((1.0 - alpha_bar) * codim)};
}

ShellCheck shell_distance_check(const SyntheticManifold& manifold, const NoiseSchedule& sched,
                                std::size_t n_samples, int t, std::uint64_t seed) {
  sched.check_step(t);
  return shell_distance_at(manifold, sched.alpha_bar(t), n_samples, seed);
}

csv::Table diag_to_table(const DiagTable& rows) {
  csv::Table table;
  table.header = {"t", "alpha_bar", "metric", "mean", "std", "n"};
  for (const auto& r : rows) {
    table.rows.push_back({std::to_string(r.t), csv::format_double(r.alpha_bar), r.metric,
                          csv::format_double(r.mean), csv::format_double(r.stddev), std::to_string(r.n)});
  }
  return table;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  j["continuous_mse"] = opt(continuous_mse);
  j["categorical_accuracy"] = opt(categorical_accuracy);
  j["violation_rate"] = opt(violation_rate);
  j["column_mse"] = column_mse;
  j["column_accuracy"] = column_accuracy;
  j["child_satisfaction"] = child_satisfaction;
  j["samples"] = samples;
  j["masked_continuous"] = masked_continuous;
  j["masked_categorical"] = masked_categorical;
  j["seed"] = seed;
  return j;
}

EvalReport evaluate_imputation(const Encoder& enc, const Matrix& imputed, const Matrix& truth,
                               const BitMatrix& mask) {
  EvalReport rep;
  rep.samples = static_cast<std::size_t>(imputed.rows());
  check_mask_shape(mask, imputed.rows(), enc.num_columns());
  const auto imputed_rows = enc.decode_rows(imputed);
  const auto truth_rows = enc.decode_rows(truth);
  for (std::size_t c = 0; c < enc.num_columns(); ++c) {
    const ColumnBlock& b = enc.blocks()[c];
    BitMatrix only = BitMatrix::Zero(mask.rows(), mask.cols());
    only.col(static_cast<Eigen::Index>(c)) = mask.col(static_cast<Eigen::Index>(c));
    const auto count = static_cast<std::size_t>(only.cast<int>().sum());
    if (count == 0) continue;
    if (b.column.kind == ColumnKind::Continuous) {
      rep.masked_continuous += count;
      rep.column_mse[b.column.name] = imputation_mse(imputed, truth, only, enc);
    } else {
      rep.masked_categorical += count;
      rep.column_accuracy[b.column.name] = imputation_accuracy(imputed_rows, truth_rows, only);
    }
  }
  if (rep.masked_continuous > 0) rep.continuous_mse = imputation_mse(imputed, truth, mask, enc);
  if (rep.masked_categorical > 0) {
    rep.categorical_accuracy = imputation_accuracy(imputed_rows, truth_rows, mask);
  }
  return rep;
}

EvalReport evaluate_constraint(const Encoder& enc, const Matrix& samples,
                               const ConstraintSpec& spec) {
  EvalReport rep;
  rep.samples = static_cast<std::size_t>(samples.rows());
  const Matrix snapped = enc.snap(samples);
  rep.violation_rate = violation_rate(spec, snapped);
  const std::vector<ConstraintSpec>* children = nullptr;
  if (const auto* c = std::get_if<Conjunction>(&spec.node)) children = &c->children;
  if (const auto* d = std::get_if<Disjunction>(&spec.node)) children = &d->children;
  if (children != nullptr) {
    for (const auto& child : *children) {
      rep.child_satisfaction.push_back(100.0 - violation_rate(child, snapped));
    }
  }
  return rep;
}

}  // namespace tabguide
