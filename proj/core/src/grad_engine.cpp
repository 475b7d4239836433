#include "tabguide/grad_engine.hpp"

#include <cmath>
#include <sstream>

#include "tabguide/errors.hpp"

namespace tabguide {

bool all_finite(const Matrix& m) { return m.allFinite(); }

namespace ad {
namespace kernels {

double sigmoid(double v) {
  if (v >= 0.0) {
    return 1.0 / (1.0 + std::exp(-v));
  }
  const double e = std::exp(v);
  return e / (1.0 + e);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  out.noalias() = a * b;
  return out;
}

Matrix add_bias(const Matrix& x, const Matrix& bias) {
  Matrix out = x;
  out.rowwise() += bias.row(0);
  return out;
}

Matrix swish(const Matrix& x) {
  return x.unaryExpr([](double v) { return v * sigmoid(v); });
}

Matrix relu(const Matrix& x) {
  return x.unaryExpr([](double v) { return v > 0.0 ? v : 0.0; });
}

Matrix log_softmax_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mx = x.row(r).maxCoeff();
    double acc = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) acc += std::exp(x(r, c) - mx);
    const double lse = mx + std::log(acc);
    for (Eigen::Index c = 0; c < x.cols(); ++c) out(r, c) = x(r, c) - lse;
  }
  return out;
}

Matrix sinusoidal_embedding(std::span<const int> steps, std::size_t width) {
  if (width == 0 || width % 2 != 0) {
    throw ConfigError("sinusoidal embedding width must be even and positive, got " +
                      std::to_string(width));
  }
  const std::size_t half = width / 2;
  Matrix out(static_cast<Eigen::Index>(steps.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < steps.size(); ++r) {
    for (std::size_t k = 0; k < half; ++k) {
      const double freq =
          std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
      const double arg = static_cast<double>(steps[r]) * freq;
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = std::sin(arg);
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(half + k)) = std::cos(arg);
    }
  }
  return out;
}

}  // namespace kernels

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::MatMul: return "matmul";
    case OpKind::AddBias: return "add_bias";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::AddScalar: return "add_scalar";
    case OpKind::Swish: return "swish";
    case OpKind::Relu: return "relu";
    case OpKind::Abs: return "abs";
    case OpKind::Square: return "square";
    case OpKind::Sqrt: return "sqrt";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::SliceCols: return "slice_cols";
    case OpKind::RowSum: return "row_sum";
    case OpKind::RowMax: return "row_max";
    case OpKind::Sum: return "sum";
    case OpKind::LogSoftmaxRows: return "log_softmax_rows";
  }
  return "unknown";
}

namespace {

std::string shape(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

[[noreturn]] void shape_error(OpKind op, const Matrix& a, const Matrix& b) {
  throw DimensionError(std::string(op_name(op)) + ": incompatible shapes " + shape(a) + " and " +
                       shape(b));
}

}  // namespace

const Matrix& Gradients::of(Var v) const {
  if (v.id >= grads_.size()) throw UsageError("gradient requested for a Var not on this tape");
  if (grads_[v.id].size() != 0) return grads_[v.id];
  Matrix& z = zeros_[v.id];
  if (z.size() == 0) z = Matrix::Zero(shapes_[v.id].first, shapes_[v.id].second);
  return z;
}

Var Tape::push(Node node) {
  if (consumed_) throw UsageError("cannot record on a tape that has been consumed by backward");
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tape::Node& Tape::node(Var v) const { return nodes_.at(v.id); }

const Matrix& Tape::val(std::uint32_t id) const {
  const Node& n = nodes_[id];
  return n.ref != nullptr ? *n.ref : n.value;
}

const Matrix& Tape::value(Var v) const {
  if (v.id >= nodes_.size()) throw UsageError("Var does not belong to this tape");
  return val(v.id);
}

void Tape::check_var(Var v, OpKind op) const {
  if (v.id >= nodes_.size()) {
    throw UsageError(std::string(op_name(op)) + ": operand does not belong to this tape");
  }
}

Var Tape::leaf(Matrix value, bool requires_grad) {
  Node n;
  n.kind = OpKind::Leaf;
  n.value = std::move(value);
  n.needs_grad = requires_grad;
  return push(std::move(n));
}

Var Tape::leaf_ref(const Matrix& value, bool requires_grad) {
  Node n;
  n.kind = OpKind::Leaf;
  n.ref = &value;
  n.needs_grad = requires_grad;
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  check_var(a, OpKind::MatMul);
  check_var(b, OpKind::MatMul);
  const Matrix& x = val(a.id);
  const Matrix& w = val(b.id);
  if (x.cols() != w.rows()) shape_error(OpKind::MatMul, x, w);
  Node n;
  n.kind = OpKind::MatMul;
  n.a = a.id;
  n.b = b.id;
  n.value = kernels::matmul(x, w);
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  return push(std::move(n));
}

Var Tape::add_bias(Var x, Var bias) {
  check_var(x, OpKind::AddBias);
  check_var(bias, OpKind::AddBias);
  const Matrix& xv = val(x.id);
  const Matrix& bv = val(bias.id);
  if (bv.rows() != 1 || bv.cols() != xv.cols()) shape_error(OpKind::AddBias, xv, bv);
  Node n;
  n.kind = OpKind::AddBias;
  n.a = x.id;
  n.b = bias.id;
  n.value = kernels::add_bias(xv, bv);
  n.needs_grad = nodes_[x.id].needs_grad || nodes_[bias.id].needs_grad;
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  check_var(a, OpKind::Add);
  check_var(b, OpKind::Add);
  const Matrix& x = val(a.id);
  const Matrix& y = val(b.id);
  if (x.rows() != y.rows() || x.cols() != y.cols()) shape_error(OpKind::Add, x, y);
  Node n;
  n.kind = OpKind::Add;
  n.a = a.id;
  n.b = b.id;
  n.value = x + y;
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  check_var(a, OpKind::Sub);
  check_var(b, OpKind::Sub);
  const Matrix& x = val(a.id);
  const Matrix& y = val(b.id);
  if (x.rows() != y.rows() || x.cols() != y.cols()) shape_error(OpKind::Sub, x, y);
  Node n;
  n.kind = OpKind::Sub;
  n.a = a.id;
  n.b = b.id;
  n.value = x - y;
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  check_var(a, OpKind::Mul);
  check_var(b, OpKind::Mul);
  const Matrix& x = val(a.id);
  const Matrix& y = val(b.id);
  Node n;
  n.kind = OpKind::Mul;
  n.a = a.id;
  n.b = b.id;
  if (x.rows() == y.rows() && x.cols() == y.cols()) {
    n.value = x.cwiseProduct(y);
  } else if (x.size() == 1) {
    n.value = x(0, 0) * y;
  } else if (y.size() == 1) {
    n.value = y(0, 0) * x;
  } else {
    shape_error(OpKind::Mul, x, y);
  }
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  return push(std::move(n));
}

Var Tape::scale(Var x, double factor) {
  check_var(x, OpKind::Scale);
  Node n;
  n.kind = OpKind::Scale;
  n.a = x.id;
  n.scalar = factor;
  n.value = factor * val(x.id);
  n.needs_grad = nodes_[x.id].needs_grad;
  return push(std::move(n));
}

Var Tape::add_scalar(Var x, double value) {
  check_var(x, OpKind::AddScalar);
  Node n;
  n.kind = OpKind::AddScalar;
  n.a = x.id;
  n.scalar = value;
  n.value = val(x.id).array() + value;
  n.needs_grad = nodes_[x.id].needs_grad;
  return push(std::move(n));
}

Var Tape::swish(Var x) {
  check_var(x, OpKind::Swish);
  Node n;
  n.kind = OpKind::Swish;
  n.a = x.id;
  n.value = kernels::swish(val(x.id));
  n.needs_grad = nodes_[x.id].needs_grad;
  return push(std::move(n));
}

Var Tape::relu(Var x) {
  check_var(x, OpKind::Relu);
  Node n;
  n.kind = OpKind::Relu;
  n.a = x.id;
  n.value = kernels::relu(val(x.id));
  n.needs_grad = nodes_[x.id].needs_grad;
  return push(std::move(n));
}

Var Tape::abs(Var x) {
  check_var(x, OpKind::Abs);
  Node n;
  n.kind = OpKind::Abs;
  n.a = x.id;
  n.value = val(x.id).cwiseAbs();
  n.needs_grad = nodes_[x.id].needs_grad;
  return push(std::move(n));
}

Var Tape::square(Var x) {
  check_var(x, OpKind::Square);
  Node n;
  n.kind = OpKind::Square;
  n.a = x.id;
  n.value = val(x.id).array().square();
  n.needs_grad = nodes_[x.id].needs_grad;
  return push(std::move(n));
}

Var Tape::sqrt(Var x) {
  check_var(x, OpKind::Sqrt);
  const Matrix& xv = val(x.id);
  if ((xv.array() < 0.0).any()) {
    throw DimensionError("sqrt: negative operand");
  }
  Node n;
  n.kind = OpKind::Sqrt;
  n.a = x.id;
  n.value = xv.array().sqrt();
  n.needs_grad = nodes_[x.id].needs_grad;
  return push(std::move(n));
}

Var Tape::concat_cols(Var a, Var b) {
  check_var(a, OpKind::ConcatCols);
  check_var(b, OpKind::ConcatCols);
  const Matrix& x = val(a.id);
  const Matrix& y = val(b.id);
  if (x.rows() != y.rows()) shape_error(OpKind::ConcatCols, x, y);
  Node n;
  n.kind = OpKind::ConcatCols;
  n.a = a.id;
  n.b = b.id;
  n.value.resize(x.rows(), x.cols() + y.cols());
  n.value << x, y;
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  return push(std::move(n));
}

Var Tape::slice_cols(Var x, std::size_t begin, std::size_t count) {
  check_var(x, OpKind::SliceCols);
  const Matrix& xv = val(x.id);
  if (begin + count > static_cast<std::size_t>(xv.cols()) || count == 0) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + shape(xv));
  }
  Node n;
  n.kind = OpKind::SliceCols;
  n.a = x.id;
  n.begin = begin;
  n.value = xv.middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
  n.needs_grad = nodes_[x.id].needs_grad;
  return push(std::move(n));
}

Var Tape::row_sum(Var x) {
  check_var(x, OpKind::RowSum);
  Node n;
  n.kind = OpKind::RowSum;
  n.a = x.id;
  n.value = val(x.id).rowwise().sum();
  n.needs_grad = nodes_[x.id].needs_grad;
  return push(std::move(n));
}

Var Tape::row_max(Var x) {
  check_var(x, OpKind::RowMax);
  const Matrix& xv = val(x.id);
  if (xv.cols() == 0) throw DimensionError("row_max: empty rows");
  Node n;
  n.kind = OpKind::RowMax;
  n.a = x.id;
  n.value.resize(xv.rows(), 1);
  n.argmax.resize(static_cast<std::size_t>(xv.rows()));
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < xv.cols(); ++c) {
      if (xv(r, c) > xv(r, best)) best = c;
    }
    n.argmax[static_cast<std::size_t>(r)] = static_cast<std::size_t>(best);
    n.value(r, 0) = xv(r, best);
  }
  n.needs_grad = nodes_[x.id].needs_grad;
  return push(std::move(n));
}

Var Tape::sum(Var x) {
  check_var(x, OpKind::Sum);
  Node n;
  n.kind = OpKind::Sum;
  n.a = x.id;
  n.value = Matrix::Constant(1, 1, val(x.id).sum());
  n.needs_grad = nodes_[x.id].needs_grad;
  return push(std::move(n));
}

Var Tape::log_softmax_rows(Var x) {
  check_var(x, OpKind::LogSoftmaxRows);
  Node n;
  n.kind = OpKind::LogSoftmaxRows;
  n.a = x.id;
  n.value = kernels::log_softmax_rows(val(x.id));
  n.needs_grad = nodes_[x.id].needs_grad;
  return push(std::move(n));
}

void Tape::accumulate(std::vector<Matrix>& grads, std::uint32_t id, const Matrix& g) const {
  if (!nodes_[id].needs_grad) return;
  if (grads[id].size() == 0) {
    grads[id] = g;
  } else {
    grads[id] += g;
  }
}

Gradients Tape::backward(Var output, const Matrix& output_adjoint) {
  if (consumed_) throw UsageError("backward called twice on the same tape");
  check_var(output, OpKind::Leaf);
  const Matrix& out = val(output.id);
  if (out.rows() != output_adjoint.rows() || out.cols() != output_adjoint.cols()) {
    throw DimensionError("backward: adjoint shape " + shape(output_adjoint) +
                         " does not match output shape " + shape(out));
  }
  consumed_ = true;
  visit_order_.clear();

  std::vector<Matrix> grads(nodes_.size());
  if (nodes_[output.id].needs_grad) grads[output.id] = output_adjoint;

  for (std::int64_t i = static_cast<std::int64_t>(output.id); i >= 0; --i) {
    const auto id = static_cast<std::uint32_t>(i);
    const Node& n = nodes_[id];
    if (n.kind == OpKind::Leaf || !n.needs_grad || grads[id].size() == 0) continue;
    visit_order_.push_back(id);
    const Matrix& g = grads[id];
    switch (n.kind) {
      case OpKind::Leaf:
        break;
      case OpKind::MatMul: {
        if (nodes_[n.a].needs_grad) {
          Matrix ga(g.rows(), val(n.b).rows());
          ga.noalias() = g * val(n.b).transpose();
          accumulate(grads, n.a, ga);
        }
        if (nodes_[n.b].needs_grad) {
          Matrix gb(val(n.a).cols(), g.cols());
          gb.noalias() = val(n.a).transpose() * g;
          accumulate(grads, n.b, gb);
        }
        break;
      }
      case OpKind::AddBias:
        accumulate(grads, n.a, g);
        if (nodes_[n.b].needs_grad) {
          Matrix gb = g.colwise().sum();
          accumulate(grads, n.b, gb);
        }
        break;
      case OpKind::Add:
        accumulate(grads, n.a, g);
        accumulate(grads, n.b, g);
        break;
      case OpKind::Sub:
        accumulate(grads, n.a, g);
        if (nodes_[n.b].needs_grad) accumulate(grads, n.b, -g);
        break;
      case OpKind::Mul: {
        const Matrix& x = val(n.a);
        const Matrix& y = val(n.b);
        if (x.rows() == y.rows() && x.cols() == y.cols()) {
          if (nodes_[n.a].needs_grad) accumulate(grads, n.a, g.cwiseProduct(y));
          if (nodes_[n.b].needs_grad) accumulate(grads, n.b, g.cwiseProduct(x));
        } else if (x.size() == 1) {
          if (nodes_[n.a].needs_grad) {
            accumulate(grads, n.a, Matrix::Constant(1, 1, g.cwiseProduct(y).sum()));
          }
          if (nodes_[n.b].needs_grad) accumulate(grads, n.b, x(0, 0) * g);
        } else {
          if (nodes_[n.a].needs_grad) accumulate(grads, n.a, y(0, 0) * g);
          if (nodes_[n.b].needs_grad) {
            accumulate(grads, n.b, Matrix::Constant(1, 1, g.cwiseProduct(x).sum()));
          }
        }
        break;
      }
      case OpKind::Scale:
        accumulate(grads, n.a, n.scalar * g);
        break;
      case OpKind::AddScalar:
        accumulate(grads, n.a, g);
        break;
      case OpKind::Swish: {
        const Matrix& x = val(n.a);
        Matrix d = x.unaryExpr([](double v) {
          const double s = kernels::sigmoid(v);
          return s * (1.0 + v * (1.0 - s));
        });
        accumulate(grads, n.a, g.cwiseProduct(d));
        break;
      }
      case OpKind::Relu: {
        const Matrix& x = val(n.a);
        Matrix d = x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
        accumulate(grads, n.a, g.cwiseProduct(d));
        break;
      }
      case OpKind::Abs: {
        const Matrix& x = val(n.a);
        Matrix d = x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
        accumulate(grads, n.a, g.cwiseProduct(d));
        break;
      }
      case OpKind::Square:
        accumulate(grads, n.a, 2.0 * g.cwiseProduct(val(n.a)));
        break;
      case OpKind::Sqrt: {
        Matrix d = n.value.unaryExpr([](double s) { return s > 0.0 ? 0.5 / s : 0.0; });
        accumulate(grads, n.a, g.cwiseProduct(d));
        break;
      }
      case OpKind::ConcatCols: {
        const Eigen::Index left = val(n.a).cols();
        const Eigen::Index right = val(n.b).cols();
        if (nodes_[n.a].needs_grad) accumulate(grads, n.a, g.leftCols(left));
        if (nodes_[n.b].needs_grad) accumulate(grads, n.b, g.rightCols(right));
        break;
      }
      case OpKind::SliceCols: {
        const Matrix& x = val(n.a);
        Matrix full = Matrix::Zero(x.rows(), x.cols());
        full.middleCols(static_cast<Eigen::Index>(n.begin), g.cols()) = g;
        accumulate(grads, n.a, full);
        break;
      }
      case OpKind::RowSum: {
        const Matrix& x = val(n.a);
        Matrix full = g.col(0).replicate(1, x.cols());
        accumulate(grads, n.a, full);
        break;
      }
      case OpKind::RowMax: {
        const Matrix& x = val(n.a);
        Matrix full = Matrix::Zero(x.rows(), x.cols());
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
          full(r, static_cast<Eigen::Index>(n.argmax[static_cast<std::size_t>(r)])) = g(r, 0);
        }
        accumulate(grads, n.a, full);
        break;
      }
      case OpKind::Sum: {
        const Matrix& x = val(n.a);
        accumulate(grads, n.a, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
        break;
      }
      case OpKind::LogSoftmaxRows: {
        // d/dx_j of sum_i g_i (x_i - lse) = g_j - softmax_j * sum_i g_i
        Matrix soft = n.value.array().exp();
        Matrix gsum = g.rowwise().sum();
        Matrix full = g - soft.cwiseProduct(gsum.col(0).replicate(1, g.cols()));
        accumulate(grads, n.a, full);
        break;
      }
    }
  }

  Gradients result;
  result.grads_ = std::move(grads);
  result.zeros_.resize(nodes_.size());
  result.shapes_.reserve(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Matrix& v = val(static_cast<std::uint32_t>(i));
    result.shapes_.emplace_back(v.rows(), v.cols());
  }
  return result;
}

}  // namespace ad
}  // namespace tabguide
