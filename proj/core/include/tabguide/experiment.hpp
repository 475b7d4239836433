#pragma once

// Run orchestration behind the command-line subcommands. Every artifact is
// written under RunConfig::output_dir and carries the (seed, config hash,
// checkpoint hash) triple; equal triples give byte-identical files.

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabguide/checkpoint.hpp"
#include "tabguide/guidance.hpp"
#include "tabguide/manifold.hpp"
#include "tabguide/metrics.hpp"
#include "tabguide/tasks.hpp"

namespace tabguide {

struct RunConfig {
  std::uint64_t seed = 0;
  int trials = 1;

  // Paths.
  std::string data;
  std::string schema;
  std::string checkpoint;
  std::string output_dir = "out";
  std::string mask;
  std::string constraint;
  std::string imputed;
  std::string samples_file;
  std::string target;

  // Schedule.
  int steps = 200;
  double alpha_1 = 0.9999;
  double alpha_T = 0.98;

  // Network and training.
  std::size_t hidden = 1024;
  std::size_t time_hidden = 1024;
  std::size_t embed_dim = 128;
  int epochs = 1000;
  std::size_t batch_size = 1024;
  double learning_rate = 1e-4;
  std::string optimizer = "sgd";

  // Guidance.
  double eta = 0.2;
  std::string eta_schedule = "constant";

  // Imputation.
  std::string mechanism = "mar";
  double ratio = 0.25;
  std::string loss = "mae";
  bool ablation = false;

  // Constraint generation.
  std::string scenario = "range";
  std::size_t num_samples = 1000;
  double quantile = 0.8;
  /// NaN selects the quantile threshold.
  double threshold = std::numeric_limits<double>::quiet_NaN();
  std::string range_column;
  std::string category_column;
  std::string category;
  bool control = false;

  // Diagnostics.
  std::string diag = "angles";
  std::string diag_loss = "mae";
  std::size_t diag_samples = 100;
  std::vector<int> t_grid;
  std::size_t diag_hidden = 128;
  int diag_epochs = 1000;
  std::size_t diag_batch = 256;
  double diag_learning_rate = 1e-3;
  std::string diag_optimizer = "adam";

  // Synthetic data.
  std::string synth = "circle";
  std::size_t rows = 5000;
  std::size_t ambient = 2;
  std::size_t intrinsic = 1;
  double radius = 1.0;
  double rho = 0.8;
  double test_fraction = 0.0;
  std::size_t n_continuous = 2;
  std::size_t n_categorical = 2;
  std::size_t components = 3;
  std::size_t cardinality = 3;

  nlohmann::json to_json() const;
  /// SHA-256 of the canonical JSON without seed and output_dir.
  std::string hash() const;
};

using Logger = std::function<void(const std::string&)>;

struct Provenance {
  std::uint64_t seed = 0;
  std::string config_sha256;
  std::string checkpoint_sha256;

  std::string comment() const;
  nlohmann::json to_json() const;
};

/// Trains the denoiser; writes the checkpoint and train_loss.csv.
nlohmann::json cmd_train(const RunConfig& cfg, const Logger& log = {});
/// Masks, imputes, anchors and scores; writes imputed/mask CSVs, report.json
/// and, with `ablation`, ablation.csv.
nlohmann::json cmd_impute(const RunConfig& cfg, const Logger& log = {});
/// Guided generation under a scenario or constraint file; writes samples.csv and report.json.
nlohmann::json cmd_constrain(const RunConfig& cfg, const Logger& log = {});
/// Geometric diagnostics; writes diag_<name>.csv.
nlohmann::json cmd_diag(const RunConfig& cfg, const Logger& log = {});
/// Synthetic datasets with schema.json and manifold.json metadata.
nlohmann::json cmd_synth(const RunConfig& cfg, const Logger& log = {});
/// Scores existing imputed or sampled files; writes eval_report.json.
nlohmann::json cmd_eval(const RunConfig& cfg, const Logger& log = {});

/// Names accepted by cmd_diag.
const std::vector<std::string>& diag_names();
/// Loss names accepted by the diagnostics.
const std::vector<std::string>& diag_loss_names();

/// Guidance specs used by the synthetic diagnostics, applied to coordinate 0
/// (mae, mse, inequality) or the whole vector as one block (ce).
SpecFactory synthetic_spec_factory(const std::string& loss, std::size_t dim, double radius);

/// Builds the synthetic manifold named by cfg.synth (circle, sphere, subspace).
SyntheticManifold make_manifold(const RunConfig& cfg);

/// Mask CSV: header = column names, one 0/1 row per data row (1 = missing).
csv::Table mask_to_table(const Encoder& enc, const BitMatrix& mask);
BitMatrix mask_from_table(const Encoder& enc, const csv::Table& table);

}  // namespace tabguide
