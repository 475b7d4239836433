#pragma once

// Noise schedule, forward noising, the MLP noise predictor, unconditional
// training, dirty estimates and the one-step reverse update.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tabguide/grad_engine.hpp"

namespace tabguide {

/// Precomputed α_t, ᾱ_t, σ_t tables for t = 1..T.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  int steps() const { return steps_; }
  double alpha_first() const { return alpha_first_; }
  double alpha_last() const { return alpha_last_; }
  /// Interpolation tag recorded in checkpoints.
  const std::string& interpolation() const { return interpolation_; }

  double alpha(int t) const;
  /// ᾱ_t for t = 0..T, with ᾱ_0 = 1.
  double alpha_bar(int t) const;
  /// σ_t = (1 − α_t)(1 − ᾱ_{t−1}) / (1 − ᾱ_t).
  double sigma(int t) const;

  /// Throws ConfigError when t is outside 1..T.
  void check_step(int t) const;

 private:
  friend NoiseSchedule build_schedule(int, double, double);
  int steps_ = 0;
  double alpha_first_ = 0.0;
  double alpha_last_ = 0.0;
  std::string interpolation_ = "linear";
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
  std::vector<double> sigma_;
};

/// α_t linear in t from alpha_1 (t = 1) to alpha_T (t = T).
/// Requires T >= 2 and 0 < alpha_T < alpha_1 < 1.
NoiseSchedule build_schedule(int steps, double alpha_1, double alpha_T);

/// x_t = √ᾱ_t x0 + √(1 − ᾱ_t) eps.
Matrix forward_noise(const NoiseSchedule& sched, const Matrix& x0, int t, const Matrix& eps);

/// Anything that predicts ε(x_t, t) and can record itself on a tape.
class NoiseModel {
 public:
  virtual ~NoiseModel() = default;
  virtual std::size_t dim() const = 0;
  /// One step per row of x.
  virtual Matrix predict(const Matrix& x, std::span<const int> steps) const = 0;
  virtual ad::Var record(ad::Tape& tape, ad::Var x, std::span<const int> steps) const = 0;

  Matrix predict(const Matrix& x, int t) const;
  ad::Var record(ad::Tape& tape, ad::Var x, int t) const;
};

struct DenoiserConfig {
  std::size_t data_dim = 0;
  /// Width of the four hidden layers of the main trunk.
  std::size_t hidden = 1024;
  /// Width of the 2-layer time-embedding MLP.
  std::size_t time_hidden = 1024;
  /// Raw sinusoidal embedding width (even).
  std::size_t embed_dim = 128;
};

/// ε_θ: five swish-activated linear layers over [x_t, MLP(sinusoid(t))].
class DenoiserNet final : public NoiseModel {
 public:
  /// Weights uniform in ±1/√fan_in, drawn from `init_seed`.
  DenoiserNet(const DenoiserConfig& cfg, std::uint64_t init_seed);

  std::size_t dim() const override { return cfg_.data_dim; }
  const DenoiserConfig& config() const { return cfg_; }
  using NoiseModel::predict;
  using NoiseModel::record;
  Matrix predict(const Matrix& x, std::span<const int> steps) const override;
  ad::Var record(ad::Tape& tape, ad::Var x, std::span<const int> steps) const override;

  struct Recording {
    ad::Var output;
    std::vector<ad::Var> params;
  };
  /// Records the forward pass with parameter leaves that require gradients.
  Recording record_trainable(ad::Tape& tape, ad::Var x, std::span<const int> steps) const;

  /// Declared layer order: time_fc1, time_fc2, fc1..fc5, each weight then bias.
  std::vector<std::string> parameter_names() const;
  std::vector<Matrix>& parameters() { return params_; }
  const std::vector<Matrix>& parameters() const { return params_; }

 private:
  ad::Var record_impl(ad::Tape& tape, ad::Var x, std::span<const int> steps, bool trainable,
                      std::vector<ad::Var>* leaves) const;

  DenoiserConfig cfg_;
  std::vector<Matrix> params_;
};

enum class OptimizerKind { Sgd, Adam };

struct TrainConfig {
  int epochs = 1000;
  std::size_t batch_size = 1024;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::Sgd;

  void validate() const;
};

struct TrainResult {
  /// Mean per-element squared error of each epoch.
  std::vector<double> epoch_loss;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Minimizes mean ‖ε − ε_θ(x_t, t)‖² with t ~ U{1..T}, ε ~ N(0, I). Rows are
/// reshuffled every epoch; the final partial batch is kept.
TrainResult train(DenoiserNet& net, const NoiseSchedule& sched, const Matrix& data,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// x̂_0 = (x_t − √(1 − ᾱ_t) eps) / √ᾱ_t for a given noise estimate.
Matrix dirty_estimate_from_noise(const NoiseSchedule& sched, const Matrix& x, const Matrix& eps,
                                 int t);
Matrix dirty_estimate(const NoiseModel& model, const NoiseSchedule& sched, const Matrix& x, int t);

/// x'_{t−1} = (x_t − (1 − α_t)/√(1 − ᾱ_t) eps)/√α_t + σ_t z.
Matrix denoise_from_noise(const NoiseSchedule& sched, const Matrix& x, const Matrix& eps, int t,
                          const Matrix& z);
Matrix denoise_step(const NoiseModel& model, const NoiseSchedule& sched, const Matrix& x, int t,
                    const Matrix& z);

/// Taped dirty estimate; returns the noise estimate and x̂_0.
struct TapedEstimate {
  ad::Var noise;
  ad::Var estimate;
};
TapedEstimate record_dirty_estimate(ad::Tape& tape, const NoiseModel& model,
                                    const NoiseSchedule& sched, ad::Var x, int t);

}  // namespace tabguide
