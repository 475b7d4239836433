#pragma once

// Synthetic missingness masks and constraint scenarios for evaluation.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabguide/guidance.hpp"
#include "tabguide/tabular_codec.hpp"

namespace tabguide {

enum class MaskMechanism { MCAR, MAR, MNAR };

const char* mechanism_name(MaskMechanism m);
MaskMechanism parse_mechanism(const std::string& s);

/// Cell-level missingness; mask(r, c) == 1 marks a missing cell.
struct MaskTask {
  MaskMechanism mechanism = MaskMechanism::MCAR;
  double ratio = 0.0;
  std::uint64_t seed = 0;
  BitMatrix mask;
  /// MAR: columns that are never masked. MNAR: the first (driving) group.
  std::vector<std::size_t> observed_columns;
  /// MNAR: the logistic-masked group.
  std::vector<std::size_t> logistic_columns;
  double bias = 0.0;

  double missing_fraction() const;
};

/// Every cell masked independently with probability `ratio` (0 <= ratio < 1).
MaskTask gen_mcar(std::size_t rows, std::size_t cols, double ratio, std::uint64_t seed);

/// ⌈30%⌉ of the columns, clamped to [1, cols − 1].
std::size_t default_observed_columns(std::size_t cols);

/// Holds `n_observed_cols` random columns fully observed; every other cell is
/// masked with probability sigmoid(w_c · x_obs + b), w_c ~ N(0, I). The bias is
/// found by bisection on [−20, 20] so that the realized missing fraction over
/// maskable cells matches `ratio`. `features` is the rows × columns numeric view.
MaskTask gen_mar(const Matrix& features, double ratio, std::size_t n_observed_cols,
                 std::uint64_t seed);

/// Splits the columns in two groups. Group one is masked MCAR at `ratio`;
/// group two through the logistic mechanism driven by group-one values, with
/// the bias tuned so the overall realized fraction matches `ratio`.
MaskTask gen_mnar(const Matrix& features, double ratio, std::uint64_t seed);

enum class ScenarioKind { Range, Category, Conjunction, Disjunction };

const char* scenario_name(ScenarioKind k);
ScenarioKind parse_scenario(const std::string& s);

struct ScenarioOptions {
  /// Range threshold quantile (feature >= q-quantile).
  double quantile = 0.8;
  std::optional<std::string> range_column;
  std::optional<double> threshold;
  std::optional<std::string> category_column;
  std::optional<std::string> category;
};

struct ConstraintScenario {
  ScenarioKind kind = ScenarioKind::Range;
  std::string range_column;
  std::optional<double> threshold;
  std::string category_column;
  std::optional<std::string> category;
  /// Fraction of training rows satisfying the scenario.
  double coverage = 0.0;
  /// Range and category coverages for composite scenarios.
  std::vector<double> child_coverage;
  std::uint64_t seed = 0;
  /// Constraint in the JSON format accepted by parse_constraint.
  nlohmann::json spec_json;

  nlohmann::json to_json() const;
};

/// Range thresholds sit in the upper tail; categorical targets avoid the
/// majority class. Throws TaskError when the schema lacks a column of the
/// required kind.
ConstraintScenario gen_constraint_scenario(ScenarioKind kind, const std::vector<RawRow>& train,
                                           const Encoder& enc, std::uint64_t seed,
                                           const ScenarioOptions& opts = {});

/// Linear-interpolation quantile (numpy's default method).
double quantile(std::vector<double> values, double q);

}  // namespace tabguide
