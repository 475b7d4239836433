#include "tabguide/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "tabguide/errors.hpp"
#include "tabguide/rng.hpp"

namespace tabguide {

// ---------------------------------------------------------------- schedule

NoiseSchedule build_schedule(int steps, double alpha_1, double alpha_T) {
  if (steps < 2) throw ConfigError("schedule needs T >= 2, got " + std::to_string(steps));
  if (!(alpha_T > 0.0 && alpha_T < alpha_1 && alpha_1 < 1.0)) {
    throw ConfigError("schedule needs 0 < alpha_T < alpha_1 < 1");
  }
  NoiseSchedule s;
  s.steps_ = steps;
  s.alpha_first_ = alpha_1;
  s.alpha_last_ = alpha_T;
  s.alpha_.resize(static_cast<std::size_t>(steps));
  s.alpha_bar_.resize(static_cast<std::size_t>(steps) + 1);
  s.sigma_.resize(static_cast<std::size_t>(steps));
  s.alpha_bar_[0] = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double frac = static_cast<double>(t - 1) / static_cast<double>(steps - 1);
    const double a = alpha_1 + frac * (alpha_T - alpha_1);
    s.alpha_[static_cast<std::size_t>(t - 1)] = a;
    s.alpha_bar_[static_cast<std::size_t>(t)] = s.alpha_bar_[static_cast<std::size_t>(t - 1)] * a;
  }
  for (int t = 1; t <= steps; ++t) {
    const auto i = static_cast<std::size_t>(t);
    s.sigma_[i - 1] = (1.0 - s.alpha_[i - 1]) * (1.0 - s.alpha_bar_[i - 1]) / (1.0 - s.alpha_bar_[i]);
  }
  return s;
}

void NoiseSchedule::check_step(int t) const {
  if (t < 1 || t > steps_) {
    throw ConfigError("timestep " + std::to_string(t) + " outside 1.." + std::to_string(steps_));
  }
}

double NoiseSchedule::alpha(int t) const {
  check_step(t);
  return alpha_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t > steps_) {
    throw ConfigError("timestep " + std::to_string(t) + " outside 0.." + std::to_string(steps_));
  }
  return alpha_bar_[static_cast<std::size_t>(t)];
}

double NoiseSchedule::sigma(int t) const {
  check_step(t);
  return sigma_[static_cast<std::size_t>(t - 1)];
}

Matrix forward_noise(const NoiseSchedule& sched, const Matrix& x0, int t, const Matrix& eps) {
  sched.check_step(t);
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) {
    throw DimensionError("forward_noise: x0 and eps shapes differ");
  }
  const double ab = sched.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

// ------------------------------------------------------------- noise model

Matrix NoiseModel::predict(const Matrix& x, int t) const {
  std::vector<int> steps(static_cast<std::size_t>(x.rows()), t);
  return predict(x, steps);
}

ad::Var NoiseModel::record(ad::Tape& tape, ad::Var x, int t) const {
  std::vector<int> steps(static_cast<std::size_t>(tape.value(x).rows()), t);
  return record(tape, x, steps);
}

namespace {

constexpr std::size_t kLayers = 7;  // time_fc1, time_fc2, fc1..fc5

}  // namespace

DenoiserNet::DenoiserNet(const DenoiserConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  if (cfg.data_dim == 0 || cfg.hidden == 0 || cfg.time_hidden == 0) {
    throw ConfigError("denoiser dimensions must be positive");
  }
  if (cfg.embed_dim == 0 || cfg.embed_dim % 2 != 0) {
    throw ConfigError("denoiser embed_dim must be even and positive");
  }
  const std::size_t d = cfg.data_dim;
  const std::size_t h = cfg.hidden;
  const std::size_t th = cfg.time_hidden;
  const std::size_t shapes[kLayers][2] = {
      {cfg.embed_dim, th}, {th, th}, {d + th, h}, {h, h}, {h, h}, {h, h}, {h, d}};
  Rng rng(init_seed);
  for (const auto& s : shapes) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(s[0]));
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix w(static_cast<Eigen::Index>(s[0]), static_cast<Eigen::Index>(s[1]));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
    Matrix b(1, static_cast<Eigen::Index>(s[1]));
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = u(rng);
    params_.push_back(std::move(w));
    params_.push_back(std::move(b));
  }
}

std::vector<std::string> DenoiserNet::parameter_names() const {
  static const char* layers[kLayers] = {"time_fc1", "time_fc2", "fc1", "fc2", "fc3", "fc4", "fc5"};
  std::vector<std::string> names;
  for (const char* l : layers) {
    names.push_back(std::string(l) + ".weight");
    names.push_back(std::string(l) + ".bias");
  }
  return names;
}

Matrix DenoiserNet::predict(const Matrix& x, std::span<const int> steps) const {
  using namespace ad::kernels;
  if (x.cols() != static_cast<Eigen::Index>(cfg_.data_dim) ||
      static_cast<std::size_t>(x.rows()) != steps.size()) {
    throw DimensionError("denoiser: input must be rows x " + std::to_string(cfg_.data_dim) +
                         " with one timestep per row");
  }
  const auto& p = params_;
  Matrix emb = sinusoidal_embedding(steps, cfg_.embed_dim);
  Matrix te = swish(add_bias(matmul(emb, p[0]), p[1]));
  te = add_bias(matmul(te, p[2]), p[3]);
  Matrix h(x.rows(), x.cols() + te.cols());
  h << x, te;
  for (std::size_t layer = 2; layer < 6; ++layer) {
    h = swish(add_bias(matmul(h, p[2 * layer]), p[2 * layer + 1]));
  }
  return add_bias(matmul(h, p[12]), p[13]);
}

ad::Var DenoiserNet::record_impl(ad::Tape& tape, ad::Var x, std::span<const int> steps,
                                 bool trainable, std::vector<ad::Var>* leaves) const {
  const Matrix& xv = tape.value(x);
  if (xv.cols() != static_cast<Eigen::Index>(cfg_.data_dim) ||
      static_cast<std::size_t>(xv.rows()) != steps.size()) {
    throw DimensionError("denoiser: input must be rows x " + std::to_string(cfg_.data_dim) +
                         " with one timestep per row");
  }
  std::vector<ad::Var> w;
  w.reserve(params_.size());
  for (const auto& m : params_) w.push_back(tape.leaf_ref(m, trainable));
  if (leaves) *leaves = w;

  ad::Var emb = tape.leaf(ad::kernels::sinusoidal_embedding(steps, cfg_.embed_dim), false);
  ad::Var te = tape.swish(tape.add_bias(tape.matmul(emb, w[0]), w[1]));
  te = tape.add_bias(tape.matmul(te, w[2]), w[3]);
  ad::Var h = tape.concat_cols(x, te);
  for (std::size_t layer = 2; layer < 6; ++layer) {
    h = tape.swish(tape.add_bias(tape.matmul(h, w[2 * layer]), w[2 * layer + 1]));
  }
  return tape.add_bias(tape.matmul(h, w[12]), w[13]);
}

ad::Var DenoiserNet::record(ad::Tape& tape, ad::Var x, std::span<const int> steps) const {
  return record_impl(tape, x, steps, false, nullptr);
}

DenoiserNet::Recording DenoiserNet::record_trainable(ad::Tape& tape, ad::Var x,
                                                     std::span<const int> steps) const {
  Recording rec;
  rec.output = record_impl(tape, x, steps, true, &rec.params);
  return rec;
}

// ---------------------------------------------------------------- training

void TrainConfig::validate() const {
  if (epochs <= 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
}

TrainResult train(DenoiserNet& net, const NoiseSchedule& sched, const Matrix& data,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.rows() == 0) throw ConfigError("training data is empty");
  if (data.cols() != static_cast<Eigen::Index>(net.dim())) {
    throw DimensionError("training data has " + std::to_string(data.cols()) +
                         " columns, denoiser expects " + std::to_string(net.dim()));
  }
  const auto n = static_cast<std::size_t>(data.rows());
  const Eigen::Index d = data.cols();
  Rng rng(cfg.seed);
  std::uniform_int_distribution<int> step_dist(1, sched.steps());
  std::normal_distribution<double> normal(0.0, 1.0);

  auto& params = net.parameters();
  std::vector<Matrix> m1, m2;
  if (cfg.optimizer == OptimizerKind::Adam) {
    for (const auto& p : params) {
      m1.push_back(Matrix::Zero(p.rows(), p.cols()));
      m2.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
  }
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kAdamEps = 1e-8;
  std::int64_t adam_step = 0;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  result.epoch_loss.reserve(static_cast<std::size_t>(cfg.epochs));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_index) {
      const std::size_t bsz = std::min(cfg.batch_size, n - start);
      const auto b = static_cast<Eigen::Index>(bsz);
      Matrix xt(b, d);
      Matrix eps(b, d);
      std::vector<int> steps(bsz);
      for (std::size_t i = 0; i < bsz; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        steps[i] = step_dist(rng);
        for (Eigen::Index c = 0; c < d; ++c) eps(r, c) = normal(rng);
        const double ab = sched.alpha_bar(steps[i]);
        xt.row(r) = std::sqrt(ab) * data.row(static_cast<Eigen::Index>(order[start + i])) +
                    std::sqrt(1.0 - ab) * eps.row(r);
      }

      ad::Tape tape;
      ad::Var x = tape.leaf(std::move(xt), false);
      auto rec = net.record_trainable(tape, x, steps);
      const Matrix diff = tape.value(rec.output) - eps;
      const double count = static_cast<double>(diff.size());
      const double loss = diff.squaredNorm() / count;
      if (!std::isfinite(loss)) {
        throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch_index));
      }
      loss_sum += loss * static_cast<double>(bsz);
      auto grads = tape.backward(rec.output, (2.0 / count) * diff);

      if (cfg.optimizer == OptimizerKind::Sgd) {
        for (std::size_t i = 0; i < params.size(); ++i) {
          params[i] -= cfg.learning_rate * grads.of(rec.params[i]);
        }
      } else {
        ++adam_step;
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(adam_step));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(adam_step));
        for (std::size_t i = 0; i < params.size(); ++i) {
          const Matrix& g = grads.of(rec.params[i]);
          m1[i] = kBeta1 * m1[i] + (1.0 - kBeta1) * g;
          m2[i] = kBeta2 * m2[i] + (1.0 - kBeta2) * g.cwiseAbs2();
          params[i].array() -= cfg.learning_rate * (m1[i].array() / c1) /
                               ((m2[i].array() / c2).sqrt() + kAdamEps);
        }
      }
    }
    const double mean_loss = loss_sum / static_cast<double>(n);
    result.epoch_loss.push_back(mean_loss);
    if (on_epoch) on_epoch(epoch, mean_loss);
  }
  return result;
}

// ------------------------------------------------------- estimate / reverse

Matrix dirty_estimate_from_noise(const NoiseSchedule& sched, const Matrix& x, const Matrix& eps,
                                 int t) {
  sched.check_step(t);
  const double ab = sched.alpha_bar(t);
  const Matrix scaled = std::sqrt(1.0 - ab) * eps;
  const Matrix diff = x - scaled;
  return (1.0 / std::sqrt(ab)) * diff;
}

Matrix dirty_estimate(const NoiseModel& model, const NoiseSchedule& sched, const Matrix& x, int t) {
  sched.check_step(t);
  return dirty_estimate_from_noise(sched, x, model.predict(x, t), t);
}

Matrix denoise_from_noise(const NoiseSchedule& sched, const Matrix& x, const Matrix& eps, int t,
                          const Matrix& z) {
  sched.check_step(t);
  const double a = sched.alpha(t);
  const double ab = sched.alpha_bar(t);
  const double coef = (1.0 - a) / std::sqrt(1.0 - ab);
  Matrix out = (1.0 / std::sqrt(a)) * (x - coef * eps);
  if (t > 1) out += sched.sigma(t) * z;
  return out;
}

Matrix denoise_step(const NoiseModel& model, const NoiseSchedule& sched, const Matrix& x, int t,
                    const Matrix& z) {
  sched.check_step(t);
  return denoise_from_noise(sched, x, model.predict(x, t), t, z);
}

TapedEstimate record_dirty_estimate(ad::Tape& tape, const NoiseModel& model,
                                    const NoiseSchedule& sched, ad::Var x, int t) {
  sched.check_step(t);
  const double ab = sched.alpha_bar(t);
  TapedEstimate out;
  out.noise = model.record(tape, x, t);
  ad::Var scaled = tape.scale(out.noise, std::sqrt(1.0 - ab));
  out.estimate = tape.scale(tape.sub(x, scaled), 1.0 / std::sqrt(ab));
  return out;
}

}  // namespace tabguide
