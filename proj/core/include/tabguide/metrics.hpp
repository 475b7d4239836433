#pragma once

// Evaluation metrics and geometric diagnostics.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabguide/csv.hpp"
#include "tabguide/diffusion.hpp"
#include "tabguide/guidance.hpp"
#include "tabguide/manifold.hpp"
#include "tabguide/tabular_codec.hpp"

namespace tabguide {

/// Mean squared error over masked continuous cells, in standardized space.
/// `imputed` and `truth` are encoded rows; `mask` is rows × columns, 1 = missing.
/// Throws EmptyMetricError when no continuous cell is masked.
double imputation_mse(const Matrix& imputed, const Matrix& truth, const BitMatrix& mask,
                      const Encoder& enc);

/// Percentage of masked categorical cells whose decoded class matches.
/// Throws EmptyMetricError when no categorical cell is masked.
double imputation_accuracy(const std::vector<RawRow>& imputed, const std::vector<RawRow>& truth,
                           const BitMatrix& mask);

/// Per-row hard satisfaction. Inequality and equality tolerate 1e-9 and 1e-6;
/// categorical constraints should be checked on snapped rows. Imputation
/// specs throw SpecError.
std::vector<bool> satisfied(const ConstraintSpec& spec, const Matrix& samples);

/// Percentage of rows violating `spec`.
double violation_rate(const ConstraintSpec& spec, const Matrix& samples);

/// Angle in degrees in [0, 180], or nullopt when either vector has norm < 1e-14.
std::optional<double> angle_between(const Matrix& a, const Matrix& b);

/// Ideal noise predictor for a flat manifold: its dirty estimate is exactly
/// π(x_t/√ᾱ_t), so the estimate's Jacobian is the tangent projector.
class AffineProjectorModel final : public NoiseModel {
 public:
  AffineProjectorModel(const SyntheticManifold& flat, const NoiseSchedule& sched);

  std::size_t dim() const override { return static_cast<std::size_t>(residual_.rows()); }
  using NoiseModel::predict;
  using NoiseModel::record;
  Matrix predict(const Matrix& x, std::span<const int> steps) const override;
  ad::Var record(ad::Tape& tape, ad::Var x, std::span<const int> steps) const override;

 private:
  const NoiseSchedule& sched_;
  Matrix residual_;  // I − BᵀB
  Matrix anchor_;    // o − o BᵀB
};

/// One diagnostic table row.
struct DiagRow {
  int t = 0;
  double alpha_bar = 0.0;
  std::string metric;
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t n = 0;
};

using DiagTable = std::vector<DiagRow>;

/// Builds the guidance spec for a batch of clean points (per-row targets).
using SpecFactory = std::function<ConstraintSpec(const Matrix& x0)>;

/// Per t: forward-noises fresh manifold samples, computes guidance gradients and
/// reports the angle to the analytic normal at π(x̂_0) as "angle_deg", its
/// folded counterpart min(θ, 180° − θ) as "angle_folded_deg", and the number of
/// zero gradients as "zero_gradients".
DiagTable angle_profile(const NoiseModel& model, const NoiseSchedule& sched,
                        const SpecFactory& spec_for, const SyntheticManifold& manifold,
                        std::size_t n_samples, const std::vector<int>& t_list, std::uint64_t seed);

/// As angle_profile but on data rows, using the residual x_t/√ᾱ_t − x̂_0 as the
/// normal proxy.
DiagTable angle_profile_residual(const NoiseModel& model, const NoiseSchedule& sched,
                                 const SpecFactory& spec_for, const Matrix& data,
                                 std::size_t n_samples, const std::vector<int>& t_list,
                                 std::uint64_t seed);

/// Per t: mean ‖x̂_0 − π(x_t/√ᾱ_t)‖ over fresh forward-noised manifold samples.
DiagTable projection_error_profile(const NoiseModel& model, const NoiseSchedule& sched,
                                   const SyntheticManifold& manifold, std::size_t n_samples,
                                   const std::vector<int>& t_list, std::uint64_t seed);

struct ShellCheck {
  double alpha_bar = 0.0;
  double measured = 0.0;
  double measured_std = 0.0;
  double predicted = 0.0;
};

/// Mean ‖x_t − √ᾱ π(x_t/√ᾱ)‖ against √((1 − ᾱ)(d − n)).
ShellCheck shell_distance_at(const SyntheticManifold& manifold, double alpha_bar,
                             std::size_t n_samples, std::uint64_t seed);
ShellCheck shell_distance_check(const SyntheticManifold& manifold, const NoiseSchedule& sched,
                                std::size_t n_samples, int t, std::uint64_t seed);

/// Columns t, alpha_bar, metric, mean, std, n.
csv::Table diag_to_table(const DiagTable& rows);

struct EvalReport {
  std::optional<double> continuous_mse;
  std::optional<double> categorical_accuracy;
  std::optional<double> violation_rate;
  std::map<std::string, double> column_mse;
  std::map<std::string, double> column_accuracy;
  /// Satisfaction percentage of each disjunct or conjunct, in declaration order.
  std::vector<double> child_satisfaction;
  std::size_t samples = 0;
  std::size_t masked_continuous = 0;
  std::size_t masked_categorical = 0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

/// MSE and accuracy overall and per column; absent metrics stay empty.
EvalReport evaluate_imputation(const Encoder& enc, const Matrix& imputed, const Matrix& truth,
                               const BitMatrix& mask);

/// Violation rate on snapped samples plus the per-child split for composites.
EvalReport evaluate_constraint(const Encoder& enc, const Matrix& samples,
                               const ConstraintSpec& spec);

}  // namespace tabguide
