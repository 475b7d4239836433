#pragma once

// Inference-time constraint losses and the guided sampler that interleaves
// unconditional reverse steps with gradient corrections computed through the
// dirty estimate.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabguide/diffusion.hpp"
#include "tabguide/grad_engine.hpp"
#include "tabguide/tabular_codec.hpp"

namespace tabguide {

enum class Norm { L1, L2, Linf };

const char* norm_name(Norm n);
Norm parse_norm(const std::string& s);

/// g(x) = W x + offset, restricted to sums of weighted coordinates.
struct AffineSelector {
  struct Term {
    std::size_t index = 0;
    double weight = 1.0;
  };
  struct Output {
    std::vector<Term> terms;
    double offset = 0.0;
  };
  std::vector<Output> outputs;

  static AffineSelector coordinate(std::size_t index);
  /// Identity over `width` consecutive coordinates starting at `offset`.
  static AffineSelector block(std::size_t offset, std::size_t width);

  std::size_t size() const { return outputs.size(); }
  /// d × m weight matrix.
  Matrix weight_matrix(std::size_t dim) const;
  /// 1 × m offsets.
  Matrix offset_row() const;
  /// Applies the selector to every row of x.
  Matrix apply(const Matrix& x) const;
};

struct ConstraintSpec;

/// ‖observed ⊙ (x̂_0 − target)‖_p per row. `observed` and `target` hold one row
/// (broadcast) or one row per sample; observed entries are 1.
struct Imputation {
  Matrix observed;
  Matrix target;
  Norm norm = Norm::L1;
};

/// Cross-entropy of softmax(x̂_0 block) against a target class, per block.
struct CategoricalCE {
  struct Block {
    std::size_t offset = 0;
    std::size_t width = 0;
    /// One entry (broadcast) or one per sample; -1 leaves the row unconstrained.
    std::vector<int> target;
  };
  std::vector<Block> blocks;
};

/// λ_g(‖ReLU(ℓ − g(x̂_0))‖_i + ‖ReLU(g(x̂_0) − u)‖_j).
struct Inequality {
  AffineSelector selector;
  std::optional<double> lower;
  std::optional<double> upper;
  double lambda = 1.0;
  Norm lower_norm = Norm::L2;
  Norm upper_norm = Norm::L2;
};

/// λ_h‖h(x̂_0) − v‖_k.
struct Equality {
  AffineSelector selector;
  std::vector<double> value;
  double lambda = 1.0;
  Norm norm = Norm::L1;
};

/// Sum of child losses.
struct Conjunction {
  std::vector<ConstraintSpec> children;
};

/// Product of child losses; zero as soon as one child is satisfied.
struct Disjunction {
  std::vector<ConstraintSpec> children;
};

struct ConstraintSpec {
  std::variant<Imputation, CategoricalCE, Inequality, Equality, Conjunction, Disjunction> node;
};

/// Throws SpecError when an index is out of range, λ <= 0, a mask is empty, a
/// disjunction has fewer than two children, or row counts disagree with `rows`.
void validate(const ConstraintSpec& spec, std::size_t dim, std::size_t rows);

/// Records the per-row loss (rows × 1) of `spec` at x̂_0.
ad::Var record_loss(ad::Tape& tape, const ConstraintSpec& spec, ad::Var estimate);

/// Per-row losses at x̂_0.
std::vector<double> eval_row_losses(const ConstraintSpec& spec, const Matrix& estimate);
/// Sum of the per-row losses.
double eval_loss(const ConstraintSpec& spec, const Matrix& estimate);

/// ∇_{x_t} of eval_loss(spec, x̂_0(x_t)), through the dirty estimate and the model.
Matrix guidance_gradient(const NoiseModel& model, const NoiseSchedule& sched,
                         const ConstraintSpec& spec, const Matrix& x, int t);

enum class GuidanceSchedule { Constant, LinearRamp };

struct GuidanceConfig {
  double eta = 0.2;
  GuidanceSchedule schedule = GuidanceSchedule::Constant;

  /// η at step t: η for Constant, η(T − t)/(T − 1) for LinearRamp.
  double step_size(int t, int steps) const;
};

struct SamplerStats {
  std::uint64_t forward_passes = 0;   ///< row-steps evaluated by the noise model
  std::uint64_t backward_passes = 0;  ///< row-steps with a gradient computed
  std::uint64_t steps = 0;
  std::uint64_t rows = 0;
};

struct SampleResult {
  Matrix samples;
  SamplerStats stats;
};

/// Guided reverse process. Row r draws x_T and every z from its own stream
/// seeded by derive_seed(seed, r). Per step, one noise-model evaluation is
/// shared by the dirty estimate, the gradient and the reverse update; the
/// correction −η_t g is applied after the reverse update. A null `spec`
/// samples unconditionally.
SampleResult harpoon_sample(const NoiseModel& model, const NoiseSchedule& sched,
                            const ConstraintSpec* spec, const GuidanceConfig& gcfg,
                            std::size_t n, std::uint64_t seed);

enum class TaskKind { Imputation, Inequality, Mixed };

/// Loss selection used when a task does not override it.
struct LossDefaults {
  Norm imputation_norm = Norm::L1;
  bool categorical_ce = false;
  Norm lower_norm = Norm::L2;
  Norm upper_norm = Norm::L2;
  Norm equality_norm = Norm::L1;
  double lambda_g = 1.0;
  double lambda_h = 1.0;
};

LossDefaults default_loss_for(TaskKind task);

/// Imputation loss variants compared in the loss ablation.
enum class ImputationLoss { Mae, Mse, MaeCe, MseCe };

const char* imputation_loss_name(ImputationLoss loss);
ImputationLoss parse_imputation_loss(const std::string& s);

/// Anchors every observed ambient entry of `truth`. For the "+CE" variants the
/// norm only covers continuous entries and observed categorical blocks get a
/// cross-entropy term against the true class.
ConstraintSpec make_imputation_spec(const Encoder& enc, const Matrix& observed,
                                    const Matrix& truth, ImputationLoss loss);

/// Parses the JSON constraint format with column names resolved against the
/// encoder (see README for the grammar).
ConstraintSpec parse_constraint(const nlohmann::json& j, const Encoder& enc);

}  // namespace tabguide
