#pragma once

// Dense matrices and a reverse-mode tape for the fixed primitive set used by
// the denoiser and the inference-time losses.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace tabguide {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// True when every entry is finite.
bool all_finite(const Matrix& m);

namespace ad {

/// Forward kernels shared by taped and un-taped evaluation so both produce
/// bit-identical results.
namespace kernels {
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix add_bias(const Matrix& x, const Matrix& bias);
Matrix swish(const Matrix& x);
Matrix relu(const Matrix& x);
Matrix log_softmax_rows(const Matrix& x);
/// Standard sinusoidal embedding: [sin(t f_k), cos(t f_k)], f_k = 10000^(-k/(w/2)).
Matrix sinusoidal_embedding(std::span<const int> steps, std::size_t width);
double sigmoid(double v);
}  // namespace kernels

/// Handle to a node recorded on a Tape.
struct Var {
  std::uint32_t id = 0;
};

enum class OpKind : std::uint8_t {
  Leaf,
  MatMul,
  AddBias,
  Add,
  Sub,
  Mul,
  Scale,
  AddScalar,
  Swish,
  Relu,
  Abs,
  Square,
  Sqrt,
  ConcatCols,
  SliceCols,
  RowSum,
  RowMax,
  Sum,
  LogSoftmaxRows,
};

const char* op_name(OpKind kind);

class Tape;

/// Adjoints produced by one backward pass, indexed by the Var handles of the tape.
class Gradients {
 public:
  /// Gradient of the output with respect to `v`. Zero if `v` did not require a
  /// gradient or does not influence the output.
  const Matrix& of(Var v) const;

 private:
  friend class Tape;
  std::vector<Matrix> grads_;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes_;
  mutable std::vector<Matrix> zeros_;
};

/// Ordered record of primitive operations. Recording builds the forward values
/// eagerly; `backward` replays adjoints in exact reverse recording order and may
/// run at most once.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// Leaf owning its value.
  Var leaf(Matrix value, bool requires_grad);
  /// Leaf referencing external storage (e.g. network weights). The referenced
  /// matrix must outlive the tape.
  Var leaf_ref(const Matrix& value, bool requires_grad);

  Var matmul(Var a, Var b);
  /// Adds a 1×cols bias row to every row of x.
  Var add_bias(Var x, Var bias);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  /// Elementwise product; a 1×1 operand broadcasts against the other.
  Var mul(Var a, Var b);
  Var scale(Var x, double factor);
  Var add_scalar(Var x, double value);
  Var swish(Var x);
  /// Subgradient at 0 is 0.
  Var relu(Var x);
  /// Subgradient at 0 is 0.
  Var abs(Var x);
  Var square(Var x);
  /// Gradient at 0 is defined as 0.
  Var sqrt(Var x);
  Var concat_cols(Var a, Var b);
  Var slice_cols(Var x, std::size_t begin, std::size_t count);
  /// Per-row sum, rows×1.
  Var row_sum(Var x);
  /// Per-row maximum, rows×1; the adjoint goes to the first maximal entry.
  Var row_max(Var x);
  /// Sum of all entries, 1×1.
  Var sum(Var x);
  Var log_softmax_rows(Var x);

  const Matrix& value(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  /// Propagates `output_adjoint` (same shape as `output`) back to every node
  /// that requires a gradient.
  Gradients backward(Var output, const Matrix& output_adjoint);

  /// Visit order of the last backward pass (node ids), for inspection.
  const std::vector<std::uint32_t>& last_backward_order() const { return visit_order_; }

 private:
  struct Node {
    OpKind kind = OpKind::Leaf;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    double scalar = 0.0;
    std::size_t begin = 0;
    bool needs_grad = false;
    Matrix value;
    const Matrix* ref = nullptr;
    std::vector<std::size_t> argmax;
  };

  Var push(Node node);
  const Node& node(Var v) const;
  const Matrix& val(std::uint32_t id) const;
  void check_var(Var v, OpKind op) const;
  void accumulate(std::vector<Matrix>& grads, std::uint32_t id, const Matrix& g) const;

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> visit_order_;
  bool consumed_ = false;
};

}  // namespace ad
}  // namespace tabguide
