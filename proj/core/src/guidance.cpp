#include "tabguide/guidance.hpp"

#include <algorithm>
#include <cmath>

#include "tabguide/errors.hpp"
#include "tabguide/rng.hpp"

namespace tabguide {

const char* norm_name(Norm n) {
  switch (n) {
    case Norm::L1: return "l1";
    case Norm::L2: return "l2";
    case Norm::Linf: return "linf";
  }
  return "l1";
}

Norm parse_norm(const std::string& s) {
  if (s == "l1" || s == "L1" || s == "1") return Norm::L1;
  if (s == "l2" || s == "L2" || s == "2") return Norm::L2;
  if (s == "linf" || s == "Linf" || s == "inf") return Norm::Linf;
  throw SpecError("unknown norm '" + s + "' (expected l1, l2 or linf)");
}

// ---------------------------------------------------------------- selector

AffineSelector AffineSelector::coordinate(std::size_t index) {
  AffineSelector s;
  s.outputs.push_back(Output{{Term{index, 1.0}}, 0.0});
  return s;
}

AffineSelector AffineSelector::block(std::size_t offset, std::size_t width) {
  AffineSelector s;
  for (std::size_t k = 0; k < width; ++k) s.outputs.push_back(Output{{Term{offset + k, 1.0}}, 0.0});
  return s;
}

Matrix AffineSelector::weight_matrix(std::size_t dim) const {
  Matrix w = Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(outputs.size()));
  for (std::size_t j = 0; j < outputs.size(); ++j) {
    for (const auto& term : outputs[j].terms) {
      w(static_cast<Eigen::Index>(term.index), static_cast<Eigen::Index>(j)) += term.weight;
    }
  }
  return w;
}

Matrix AffineSelector::offset_row() const {
  Matrix b(1, static_cast<Eigen::Index>(outputs.size()));
  for (std::size_t j = 0; j < outputs.size(); ++j) b(0, static_cast<Eigen::Index>(j)) = outputs[j].offset;
  return b;
}

Matrix AffineSelector::apply(const Matrix& x) const {
  Matrix out(x.rows(), static_cast<Eigen::Index>(outputs.size()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (std::size_t j = 0; j < outputs.size(); ++j) {
      double acc = outputs[j].offset;
      for (const auto& term : outputs[j].terms) acc += term.weight * x(r, static_cast<Eigen::Index>(term.index));
      out(r, static_cast<Eigen::Index>(j)) = acc;
    }
  }
  return out;
}

// -------------------------------------------------------------- validation

namespace {

void check_rows(std::size_t have, std::size_t rows, const char* what) {
  if (have != 1 && have != rows) {
    throw SpecError(std::string(what) + " has " + std::to_string(have) + " rows; expected 1 or " +
                    std::to_string(rows));
  }
}

void check_selector(const AffineSelector& s, std::size_t dim, const char* what) {
  if (s.outputs.empty()) throw SpecError(std::string(what) + ": selector has no outputs");
  for (const auto& o : s.outputs) {
    if (o.terms.empty()) throw SpecError(std::string(what) + ": selector output has no terms");
    for (const auto& term : o.terms) {
      if (term.index >= dim) {
        throw SpecError(std::string(what) + ": ambient index " + std::to_string(term.index) +
                        " out of range for d = " + std::to_string(dim));
      }
    }
  }
}

struct Validator {
  std::size_t dim;
  std::size_t rows;

  void operator()(const Imputation& s) const {
    if (s.observed.cols() != static_cast<Eigen::Index>(dim) ||
        s.target.cols() != static_cast<Eigen::Index>(dim)) {
      throw SpecError("imputation: mask and target need " + std::to_string(dim) + " columns");
    }
    check_rows(static_cast<std::size_t>(s.observed.rows()), rows, "imputation mask");
    check_rows(static_cast<std::size_t>(s.target.rows()), rows, "imputation target");
    if ((s.observed.array() != 0.0 && s.observed.array() != 1.0).any()) {
      throw SpecError("imputation: mask entries must be 0 or 1");
    }
    if (s.observed.sum() == 0.0) throw SpecError("imputation: mask has no observed entries");
    if (!s.target.allFinite()) throw SpecError("imputation: target has non-finite entries");
  }
  void operator()(const CategoricalCE& s) const {
    if (s.blocks.empty()) throw SpecError("ce: no blocks");
    bool any = false;
    for (const auto& b : s.blocks) {
      if (b.width < 2 || b.offset + b.width > dim) {
        throw SpecError("ce: block [" + std::to_string(b.offset) + ", " +
                        std::to_string(b.offset + b.width) + ") invalid for d = " +
                        std::to_string(dim));
      }
      check_rows(b.target.size(), rows, "ce target");
      for (int k : b.target) {
        if (k >= static_cast<int>(b.width) || k < -1) throw SpecError("ce: target class out of range");
        any = any || k >= 0;
      }
    }
    if (!any) throw SpecError("ce: no constrained block");
  }
  void operator()(const Inequality& s) const {
    check_selector(s.selector, dim, "inequality");
    if (!s.lower && !s.upper) throw SpecError("inequality: needs a lower or an upper bound");
    if (s.lower && s.upper && *s.lower > *s.upper) throw SpecError("inequality: lower > upper");
    if (!(s.lambda > 0.0)) throw SpecError("inequality: lambda must be positive");
  }
  void operator()(const Equality& s) const {
    check_selector(s.selector, dim, "equality");
    if (s.value.size() != s.selector.size()) {
      throw SpecError("equality: value has " + std::to_string(s.value.size()) +
                      " entries, selector has " + std::to_string(s.selector.size()));
    }
    if (!(s.lambda > 0.0)) throw SpecError("equality: lambda must be positive");
  }
  void operator()(const Conjunction& s) const {
    if (s.children.empty()) throw SpecError("and: needs at least one child");
    for (const auto& c : s.children) std::visit(*this, c.node);
  }
  void operator()(const Disjunction& s) const {
    if (s.children.size() < 2) throw SpecError("or: needs at least two children");
    for (const auto& c : s.children) std::visit(*this, c.node);
  }
};

Matrix broadcast_rows(const Matrix& m, Eigen::Index rows) {
  if (m.rows() == rows) return m;
  return m.row(0).replicate(rows, 1);
}

ad::Var record_norm(ad::Tape& tape, ad::Var m, Norm norm) {
  switch (norm) {
    case Norm::L1: return tape.row_sum(tape.abs(m));
    case Norm::L2: return tape.sqrt(tape.row_sum(tape.square(m)));
    case Norm::Linf: return tape.row_max(tape.abs(m));
  }
  return tape.row_sum(tape.abs(m));
}

struct LossRecorder {
  ad::Tape& tape;
  ad::Var x;
  Eigen::Index rows;
  std::size_t dim;

  ad::Var operator()(const Imputation& s) const {
    ad::Var target = tape.leaf(broadcast_rows(s.target, rows), false);
    ad::Var mask = tape.leaf(broadcast_rows(s.observed, rows), false);
    return record_norm(tape, tape.mul(tape.sub(x, target), mask), s.norm);
  }
  ad::Var operator()(const CategoricalCE& s) const {
    std::optional<ad::Var> total;
    for (const auto& b : s.blocks) {
      Matrix onehot = Matrix::Zero(rows, static_cast<Eigen::Index>(b.width));
      for (Eigen::Index r = 0; r < rows; ++r) {
        const int k = b.target.size() == 1 ? b.target[0] : b.target[static_cast<std::size_t>(r)];
        if (k >= 0) onehot(r, k) = 1.0;
      }
      ad::Var logp = tape.log_softmax_rows(tape.slice_cols(x, b.offset, b.width));
      ad::Var ce = tape.scale(tape.row_sum(tape.mul(logp, tape.leaf(std::move(onehot), false))), -1.0);
      total = total ? tape.add(*total, ce) : ce;
    }
    return *total;
  }
  ad::Var selector(const AffineSelector& sel) const {
    ad::Var w = tape.leaf(sel.weight_matrix(dim), false);
    ad::Var b = tape.leaf(sel.offset_row(), false);
    return tape.add_bias(tape.matmul(x, w), b);
  }
  ad::Var operator()(const Inequality& s) const {
    ad::Var g = selector(s.selector);
    std::optional<ad::Var> total;
    if (s.lower) {
      ad::Var below = tape.relu(tape.add_scalar(tape.scale(g, -1.0), *s.lower));
      total = record_norm(tape, below, s.lower_norm);
    }
    if (s.upper) {
      ad::Var above = tape.relu(tape.add_scalar(g, -*s.upper));
      ad::Var term = record_norm(tape, above, s.upper_norm);
      total = total ? tape.add(*total, term) : term;
    }
    return tape.scale(*total, s.lambda);
  }
  ad::Var operator()(const Equality& s) const {
    ad::Var h = selector(s.selector);
    Matrix neg(1, static_cast<Eigen::Index>(s.value.size()));
    for (std::size_t j = 0; j < s.value.size(); ++j) neg(0, static_cast<Eigen::Index>(j)) = -s.value[j];
    ad::Var diff = tape.add_bias(h, tape.leaf(std::move(neg), false));
    return tape.scale(record_norm(tape, diff, s.norm), s.lambda);
  }
  ad::Var operator()(const Conjunction& s) const {
    ad::Var total = std::visit(*this, s.children.front().node);
    for (std::size_t i = 1; i < s.children.size(); ++i) {
      total = tape.add(total, std::visit(*this, s.children[i].node));
    }
    return total;
  }
  ad::Var operator()(const Disjunction& s) const {
    ad::Var total = std::visit(*this, s.children.front().node);
    for (std::size_t i = 1; i < s.children.size(); ++i) {
      total = tape.mul(total, std::visit(*this, s.children[i].node));
    }
    return total;
  }
};

/// Restricts per-row spec data to rows [begin, begin + count).
ConstraintSpec slice_rows(const ConstraintSpec& spec, std::size_t begin, std::size_t count) {
  struct Slicer {
    std::size_t begin, count;
    ConstraintSpec operator()(const Imputation& s) const {
      Imputation out = s;
      if (s.observed.rows() > 1) {
        out.observed = s.observed.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
      }
      if (s.target.rows() > 1) {
        out.target = s.target.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
      }
      return {out};
    }
    ConstraintSpec operator()(const CategoricalCE& s) const {
      CategoricalCE out = s;
      for (auto& b : out.blocks) {
        if (b.target.size() > 1) {
          b.target.assign(b.target.begin() + static_cast<std::ptrdiff_t>(begin),
                          b.target.begin() + static_cast<std::ptrdiff_t>(begin + count));
        }
      }
      return {out};
    }
    ConstraintSpec operator()(const Inequality& s) const { return {s}; }
    ConstraintSpec operator()(const Equality& s) const { return {s}; }
    ConstraintSpec operator()(const Conjunction& s) const {
      Conjunction out;
      for (const auto& c : s.children) out.children.push_back(std::visit(*this, c.node));
      return {out};
    }
    ConstraintSpec operator()(const Disjunction& s) const {
      Disjunction out;
      for (const auto& c : s.children) out.children.push_back(std::visit(*this, c.node));
      return {out};
    }
  };
  return std::visit(Slicer{begin, count}, spec.node);
}

constexpr std::size_t kSampleChunk = 512;

}  // namespace

void validate(const ConstraintSpec& spec, std::size_t dim, std::size_t rows) {
  std::visit(Validator{dim, rows}, spec.node);
}

ad::Var record_loss(ad::Tape& tape, const ConstraintSpec& spec, ad::Var estimate) {
  const Matrix& x = tape.value(estimate);
  return std::visit(LossRecorder{tape, estimate, x.rows(), static_cast<std::size_t>(x.cols())},
                    spec.node);
}

std::vector<double> eval_row_losses(const ConstraintSpec& spec, const Matrix& estimate) {
  validate(spec, static_cast<std::size_t>(estimate.cols()), static_cast<std::size_t>(estimate.rows()));
  ad::Tape tape;
  ad::Var x = tape.leaf_ref(estimate, false);
  const Matrix& loss = tape.value(record_loss(tape, spec, x));
  return std::vector<double>(loss.data(), loss.data() + loss.size());
}

double eval_loss(const ConstraintSpec& spec, const Matrix& estimate) {
  double total = 0.0;
  for (double v : eval_row_losses(spec, estimate)) total += v;
  return total;
}

Matrix guidance_gradient(const NoiseModel& model, const NoiseSchedule& sched,
                         const ConstraintSpec& spec, const Matrix& x, int t) {
  sched.check_step(t);
  validate(spec, model.dim(), static_cast<std::size_t>(x.rows()));
  ad::Tape tape;
  ad::Var xv = tape.leaf_ref(x, true);
  auto est = record_dirty_estimate(tape, model, sched, xv, t);
  ad::Var total = tape.sum(record_loss(tape, spec, est.estimate));
  auto grads = tape.backward(total, Matrix::Ones(1, 1));
  Matrix g = grads.of(xv);
  if (!g.allFinite()) {
    throw NumericError("guidance gradient is non-finite at step " + std::to_string(t));
  }
  return g;
}

double GuidanceConfig::step_size(int t, int steps) const {
  if (schedule == GuidanceSchedule::Constant) return eta;
  return eta * static_cast<double>(steps - t) / static_cast<double>(steps - 1);
}

SampleResult harpoon_sample(const NoiseModel& model, const NoiseSchedule& sched,
                            const ConstraintSpec* spec, const GuidanceConfig& gcfg, std::size_t n,
                            std::uint64_t seed) {
  if (gcfg.eta < 0.0 || !std::isfinite(gcfg.eta)) throw ConfigError("guidance eta must be >= 0");
  const std::size_t d = model.dim();
  if (spec) validate(*spec, d, n);
  const int steps = sched.steps();

  SampleResult result;
  result.samples.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  result.stats.rows = n;
  result.stats.steps = static_cast<std::uint64_t>(steps);
  for (std::size_t begin = 0; begin < n; begin += kSampleChunk) {
    const std::size_t count = std::min(kSampleChunk, n - begin);
    const auto rows = static_cast<Eigen::Index>(count);
    std::optional<ConstraintSpec> chunk_spec;
    if (spec) chunk_spec = slice_rows(*spec, begin, count);

    // Distributions cache a spare draw, so each row owns one next to its engine.
    std::vector<Rng> rngs;
    std::vector<std::normal_distribution<double>> normals(count);
    rngs.reserve(count);
    Matrix x(rows, static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < count; ++i) {
      rngs.emplace_back(derive_seed(seed, begin + i));
      for (std::size_t c = 0; c < d; ++c) {
        x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = normals[i](rngs[i]);
      }
    }

    Matrix z = Matrix::Zero(rows, static_cast<Eigen::Index>(d));
    for (int t = steps; t >= 1; --t) {
      if (t > 1) {
        for (std::size_t i = 0; i < count; ++i) {
          for (std::size_t c = 0; c < d; ++c) {
            z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = normals[i](rngs[i]);
          }
        }
      } else {
        z.setZero();
      }
      const double eta_t = gcfg.step_size(t, steps);
      const bool guided = chunk_spec.has_value() && eta_t != 0.0;

      ad::Tape tape;
      ad::Var xv = tape.leaf_ref(x, guided);
      auto est = record_dirty_estimate(tape, model, sched, xv, t);
      result.stats.forward_passes += count;

      Matrix next = denoise_from_noise(sched, x, tape.value(est.noise), t, z);
      if (guided) {
        ad::Var total = tape.sum(record_loss(tape, *chunk_spec, est.estimate));
        auto grads = tape.backward(total, Matrix::Ones(1, 1));
        result.stats.backward_passes += count;
        const Matrix& g = grads.of(xv);
        for (Eigen::Index r = 0; r < rows; ++r) {
          if (!g.row(r).allFinite()) {
            throw NumericError("non-finite guidance gradient at step " + std::to_string(t) +
                               ", row " + std::to_string(begin + static_cast<std::size_t>(r)));
          }
        }
        next -= eta_t * g;
      }
      for (Eigen::Index r = 0; r < rows; ++r) {
        if (!next.row(r).allFinite()) {
          throw NumericError("non-finite sample state at step " + std::to_string(t) + ", row " +
                             std::to_string(begin + static_cast<std::size_t>(r)));
        }
      }
      x = std::move(next);
    }
    result.samples.middleRows(static_cast<Eigen::Index>(begin), rows) = x;
  }
  return result;
}

// ----------------------------------------------------------------- defaults

LossDefaults default_loss_for(TaskKind task) {
  LossDefaults d;
  switch (task) {
    case TaskKind::Imputation:
      d.imputation_norm = Norm::L1;
      break;
    case TaskKind::Inequality:
      d.lower_norm = Norm::L2;
      d.upper_norm = Norm::L2;
      d.equality_norm = Norm::L1;
      d.lambda_g = 1.0;
      d.lambda_h = 1.0;
      break;
    case TaskKind::Mixed:
      d.imputation_norm = Norm::L1;
      d.categorical_ce = true;
      break;
  }
  return d;
}

const char* imputation_loss_name(ImputationLoss loss) {
  switch (loss) {
    case ImputationLoss::Mae: return "mae";
    case ImputationLoss::Mse: return "mse";
    case ImputationLoss::MaeCe: return "mae+ce";
    case ImputationLoss::MseCe: return "mse+ce";
  }
  return "mae";
}

ImputationLoss parse_imputation_loss(const std::string& s) {
  if (s == "mae") return ImputationLoss::Mae;
  if (s == "mse") return ImputationLoss::Mse;
  if (s == "mae+ce" || s == "mae-ce") return ImputationLoss::MaeCe;
  if (s == "mse+ce" || s == "mse-ce") return ImputationLoss::MseCe;
  throw SpecError("unknown imputation loss '" + s + "' (expected mae, mse, mae+ce, mse+ce)");
}

ConstraintSpec make_imputation_spec(const Encoder& enc, const Matrix& observed, const Matrix& truth,
                                    ImputationLoss loss) {
  const bool with_ce = loss == ImputationLoss::MaeCe || loss == ImputationLoss::MseCe;
  const Norm norm =
      (loss == ImputationLoss::Mae || loss == ImputationLoss::MaeCe) ? Norm::L1 : Norm::L2;
  if (!with_ce) return ConstraintSpec{Imputation{observed, truth, norm}};

  Matrix cont_mask = Matrix::Zero(observed.rows(), observed.cols());
  CategoricalCE ce;
  for (const auto& b : enc.blocks()) {
    const auto off = static_cast<Eigen::Index>(b.offset);
    if (b.column.kind == ColumnKind::Continuous) {
      cont_mask.col(off) = observed.col(off);
      continue;
    }
    CategoricalCE::Block blk;
    blk.offset = b.offset;
    blk.width = b.width;
    blk.target.resize(static_cast<std::size_t>(observed.rows()), -1);
    for (Eigen::Index r = 0; r < observed.rows(); ++r) {
      if (observed(r, off) == 0.0) continue;
      Eigen::Index best = 0;
      truth.row(r).segment(off, static_cast<Eigen::Index>(b.width)).maxCoeff(&best);
      blk.target[static_cast<std::size_t>(r)] = static_cast<int>(best);
    }
    const bool any = std::any_of(blk.target.begin(), blk.target.end(), [](int k) { return k >= 0; });
    if (any) ce.blocks.push_back(std::move(blk));
  }
  const bool has_cont = cont_mask.sum() > 0.0;
  if (has_cont && !ce.blocks.empty()) {
    Conjunction both;
    both.children.push_back(ConstraintSpec{Imputation{cont_mask, truth, norm}});
    both.children.push_back(ConstraintSpec{std::move(ce)});
    return ConstraintSpec{std::move(both)};
  }
  if (has_cont) return ConstraintSpec{Imputation{cont_mask, truth, norm}};
  if (!ce.blocks.empty()) return ConstraintSpec{std::move(ce)};
  throw SpecError("imputation: nothing is observed");
}

}  // namespace tabguide
