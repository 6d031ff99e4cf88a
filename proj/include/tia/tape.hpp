#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tia/tensor.hpp"

namespace tia::ad {

/// Operation kinds recorded on the tape. Listed for dispatch in the gradient
/// check suite and for error messages; the Tape methods are the primitives.
enum class OpKind {
  Matmul,
  Add,
  Sub,
  Mul,
  Scale,
  Neg,
  Relu,
  Exp,
  Log,
  Sigmoid,
  Abs,
  SmoothL1,
  Softmax,
  Sum,
  Mean,
  L2Norm,
  Reshape,
  StackRows,
  SortColumns,
  Grl,
  Detach,
};

const char* op_name(OpKind kind);

/// Gradients produced by one backward pass, keyed by node id. Unreached nodes
/// report zeros of the node's shape.
class GradientMap {
 public:
  const std::vector<double>& at(const Tensor& t) const;
  const std::vector<double>& at_node(int node) const;

 private:
  friend class Tape;
  std::vector<std::vector<double>> grads_;
};

/// Reverse-mode tape over dense tensors. Define-by-run: a tape is built fresh
/// for each step and owns the topological order of its records. Single
/// threaded; independent tapes may run concurrently.
class Tape {
 public:
  Tape();

  /// Registers an off-tape tensor as a leaf node (parameter or constant).
  Tensor leaf(const Tensor& value);
  Tensor leaf(Shape shape, std::vector<double> values);

  // Primitives. Every op validates shapes, records one backward rule and
  // rejects non-finite outputs.
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor add(const Tensor& a, const Tensor& b);  // same shape, or (B,n)+(n)
  Tensor sub(const Tensor& a, const Tensor& b);  // same shape, or (B,n)-(n)
  Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
  Tensor scale(const Tensor& a, double factor);
  Tensor neg(const Tensor& a);
  Tensor relu(const Tensor& a);
  Tensor exp(const Tensor& a);
  /// log with a 1e-12 floor: log(max(x, 1e-12)); flat (zero adjoint) below it.
  Tensor log(const Tensor& a);
  Tensor sigmoid(const Tensor& a);
  Tensor abs(const Tensor& a);
  /// Elementwise smooth-L1 with beta = 1: 0.5 x^2 for |x| < 1, |x| - 0.5 else.
  Tensor smooth_l1(const Tensor& a);
  /// Numerically stable softmax along `axis` (rank 1: axis 0; rank 2: 0 or 1).
  Tensor softmax(const Tensor& a, int axis);
  Tensor sum(const Tensor& a, int axis);
  Tensor mean(const Tensor& a, int axis);
  /// Euclidean norm of each slice along `axis`; subgradient 0 at zero slices.
  Tensor l2norm(const Tensor& a, int axis);
  Tensor reshape(const Tensor& a, Shape shape);
  /// Stacks k same-sized tensors (flattened row-major) into a (k, n) matrix.
  Tensor stack_rows(const std::vector<Tensor>& parts);
  /// Sorts each column ascending; backward routes through the permutation.
  Tensor sort_columns(const Tensor& a);

  /// Gradient reversal: identity forward; backward multiplies the upstream
  /// gradient by -grl_scale. Negative scales are rejected.
  Tensor grl(const Tensor& a, double grl_scale = 1.0);
  /// Identity forward; backward stops here (producers receive zero).
  Tensor detach(const Tensor& a);

  /// Generic dispatch over unary / axis / binary primitives, used by the
  /// gradient check suite to enumerate op kinds.
  Tensor apply(OpKind kind, const std::vector<Tensor>& inputs, int axis = 0,
               double scalar = 1.0);

  /// Reverse pass from a scalar loss (seed gradient 1.0). Visits records in
  /// exact reverse recording order.
  GradientMap backward(const Tensor& loss) const;

  std::size_t num_nodes() const { return node_shapes_.size(); }

  static constexpr double kLogFloor = 1e-12;

 private:
  using GradStore = std::vector<std::vector<double>>;
  // Accumulates input gradients given the op's upstream (output) gradient.
  using BackFn = std::function<void(GradStore&, const std::vector<double>&)>;

  int new_node(const Shape& shape);
  Tensor emit(OpKind kind, Shape shape, std::vector<double> values,
              BackFn backward);
  void check_on_tape(OpKind kind, const Tensor& t) const;
  static void axpy(std::vector<double>& acc, const std::vector<double>& g,
                   double factor = 1.0);

  struct Record {
    OpKind kind;
    BackFn backward;  // empty for leaves / detach
  };

  std::uint32_t id_;
  std::vector<Shape> node_shapes_;
  std::vector<Record> records_;
};

}  // namespace tia::ad
