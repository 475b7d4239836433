#include <iostream>

#include <CLI11.hpp>

#include "tabguide/errors.hpp"
#include "tabguide/experiment.hpp"
#include "tabguide/runtime.hpp"

namespace {

using tabguide::RunConfig;

void add_paths(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--output-dir", cfg.output_dir, "Directory for every artifact")->capture_default_str();
}

void add_schedule(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--steps", cfg.steps, "Diffusion steps T")->capture_default_str();
  sub->add_option("--alpha-1", cfg.alpha_1, "alpha at t = 1")->capture_default_str();
  sub->add_option("--alpha-T", cfg.alpha_T, "alpha at t = T")->capture_default_str();
}

void add_guidance(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--eta", cfg.eta, "Guidance step size")->capture_default_str();
  sub->add_option("--eta-schedule", cfg.eta_schedule, "constant | linear")
      ->check(CLI::IsMember({"constant", "linear"}))
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  tabguide::tune_allocator();
  RunConfig cfg;
  CLI::App app{"Inference-time constrained sampling for tabular diffusion models", "tabguide"};
  app.set_config("--config", "", "TOML config file; CLI flags take precedence");
  app.add_option("--seed", cfg.seed, "Run seed")->capture_default_str();
  app.add_option("--trials", cfg.trials, "Independent repetitions")->capture_default_str();
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train the unconditional denoiser");
  train->add_option("--data", cfg.data, "Training CSV")->required();
  train->add_option("--schema", cfg.schema, "Schema JSON")->required();
  train->add_option("--checkpoint", cfg.checkpoint, "Checkpoint output path (default <output-dir>/model.json)");
  train->add_option("--target", cfg.target, "Column excluded from modeling");
  train->add_option("--hidden", cfg.hidden, "Hidden width of the trunk")->capture_default_str();
  train->add_option("--time-hidden", cfg.time_hidden, "Width of the time-embedding MLP")->capture_default_str();
  train->add_option("--embed-dim", cfg.embed_dim, "Sinusoidal embedding width")->capture_default_str();
  train->add_option("--epochs", cfg.epochs)->capture_default_str();
  train->add_option("--batch-size", cfg.batch_size)->capture_default_str();
  train->add_option("--lr", cfg.learning_rate, "Learning rate")->capture_default_str();
  train->add_option("--optimizer", cfg.optimizer, "sgd | adam")
      ->check(CLI::IsMember({"sgd", "adam"}))
      ->capture_default_str();
  add_schedule(train, cfg);
  add_paths(train, cfg);

  auto* impute = app.add_subcommand("impute", "Impute masked cells with guided sampling");
  impute->add_option("--checkpoint", cfg.checkpoint)->required();
  impute->add_option("--data", cfg.data, "Complete ground-truth CSV to mask and impute")->required();
  impute->add_option("--mask", cfg.mask, "Mask CSV (1 = missing); generated when absent");
  impute->add_option("--mechanism", cfg.mechanism, "mcar | mar | mnar")
      ->check(CLI::IsMember({"mcar", "mar", "mnar"}))
      ->capture_default_str();
  impute->add_option("--ratio", cfg.ratio, "Missing ratio in (0, 1)")->capture_default_str();
  impute->add_option("--loss", cfg.loss, "mae | mse | mae+ce | mse+ce")->capture_default_str();
  impute->add_flag("--ablation", cfg.ablation, "Run all losses and both schedules");
  add_guidance(impute, cfg);
  add_paths(impute, cfg);

  auto* constrain = app.add_subcommand("constrain", "Generate rows under a constraint");
  constrain->add_option("--checkpoint", cfg.checkpoint)->required();
  constrain->add_option("--data", cfg.data, "Reference CSV used to build the scenario");
  constrain->add_option("--constraint", cfg.constraint, "Constraint JSON (overrides --scenario)");
  constrain->add_option("--scenario", cfg.scenario, "range | category | and | or")
      ->check(CLI::IsMember({"range", "category", "and", "or"}))
      ->capture_default_str();
  constrain->add_option("--samples", cfg.num_samples, "Rows to generate")->capture_default_str();
  constrain->add_option("--quantile", cfg.quantile, "Range threshold quantile")->capture_default_str();
  constrain->add_option("--threshold", cfg.threshold, "Explicit range threshold (raw units)");
  constrain->add_option("--range-column", cfg.range_column);
  constrain->add_option("--category-column", cfg.category_column);
  constrain->add_option("--category", cfg.category);
  constrain->add_flag("--control", cfg.control, "Also run the unguided eta = 0 baseline");
  add_guidance(constrain, cfg);
  add_paths(constrain, cfg);

  auto* diag = app.add_subcommand("diag", "Geometric diagnostics");
  diag->add_option("--diag", cfg.diag, "angles | projection | shell")->capture_default_str();
  diag->add_option("--loss", cfg.diag_loss, "mae | mse | ce | inequality")->capture_default_str();
  diag->add_option("--checkpoint", cfg.checkpoint, "Use a trained model and --data instead of a synthetic manifold");
  diag->add_option("--data", cfg.data);
  diag->add_option("--samples", cfg.diag_samples, "Samples per t")->capture_default_str();
  diag->add_option("--t", cfg.t_grid, "Steps to evaluate")->delimiter(',');
  diag->add_option("--manifold", cfg.synth, "circle | sphere | subspace")->capture_default_str();
  diag->add_option("--ambient", cfg.ambient)->capture_default_str();
  diag->add_option("--intrinsic", cfg.intrinsic)->capture_default_str();
  diag->add_option("--radius", cfg.radius)->capture_default_str();
  diag->add_option("--rows", cfg.rows, "Training rows for the in-run model")->capture_default_str();
  diag->add_option("--hidden", cfg.diag_hidden)->capture_default_str();
  diag->add_option("--embed-dim", cfg.embed_dim)->capture_default_str();
  diag->add_option("--epochs", cfg.diag_epochs)->capture_default_str();
  diag->add_option("--batch-size", cfg.diag_batch)->capture_default_str();
  diag->add_option("--lr", cfg.diag_learning_rate)->capture_default_str();
  diag->add_option("--optimizer", cfg.diag_optimizer)
      ->check(CLI::IsMember({"sgd", "adam"}))
      ->capture_default_str();
  add_schedule(diag, cfg);
  add_paths(diag, cfg);

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset and its schema");
  synth->add_option("--kind", cfg.synth, "circle | sphere | subspace | gaussian | mixture")->capture_default_str();
  synth->add_option("--rows", cfg.rows)->capture_default_str();
  synth->add_option("--ambient", cfg.ambient)->capture_default_str();
  synth->add_option("--intrinsic", cfg.intrinsic)->capture_default_str();
  synth->add_option("--radius", cfg.radius)->capture_default_str();
  synth->add_option("--rho", cfg.rho, "Equicorrelation of the gaussian kind")->capture_default_str();
  synth->add_option("--test-fraction", cfg.test_fraction)->capture_default_str();
  synth->add_option("--continuous", cfg.n_continuous)->capture_default_str();
  synth->add_option("--categorical", cfg.n_categorical)->capture_default_str();
  synth->add_option("--components", cfg.components)->capture_default_str();
  synth->add_option("--cardinality", cfg.cardinality)->capture_default_str();
  add_paths(synth, cfg);

  auto* eval = app.add_subcommand("eval", "Score imputed or generated files");
  eval->add_option("--checkpoint", cfg.checkpoint)->required();
  eval->add_option("--data", cfg.data, "Ground-truth CSV");
  eval->add_option("--imputed", cfg.imputed, "Imputed CSV");
  eval->add_option("--mask", cfg.mask, "Mask CSV");
  eval->add_option("--samples-file", cfg.samples_file, "Generated CSV");
  eval->add_option("--constraint", cfg.constraint, "Constraint JSON");
  add_paths(eval, cfg);

  CLI11_PARSE(app, argc, argv);

  const tabguide::Logger log = [](const std::string& msg) { std::cerr << "[tabguide] " << msg << "\n"; };
  try {
    nlohmann::json out;
    if (*train) out = tabguide::cmd_train(cfg, log);
    if (*impute) out = tabguide::cmd_impute(cfg, log);
    if (*constrain) out = tabguide::cmd_constrain(cfg, log);
    if (*diag) out = tabguide::cmd_diag(cfg, log);
    if (*synth) out = tabguide::cmd_synth(cfg, log);
    if (*eval) out = tabguide::cmd_eval(cfg, log);
    std::cout << out.dump(2) << "\n";
  } catch (const tabguide::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
