#pragma once

// Define-by-run reverse-mode automatic differentiation over dense matrices.
//
// A Tape records every operation applied to Tensors created on it. Calling
// backward() on a scalar Tensor walks the recorded nodes in decreasing id
// order and accumulates gradients into every node that depends on a
// trainable leaf. Parameters outlive tapes: a training step builds a fresh
// tape, binds parameters as leaves, and gradients flow straight into
// Parameter::grad.

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace skel {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Matrix value);

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }

  std::string name;
  Matrix value;
  Matrix grad;
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf that never receives gradient.
  Tensor constant(Matrix value);
  // Trainable leaf owning its gradient.
  Tensor variable(Matrix value);
  // Trainable leaf bound to a parameter; gradients accumulate into p.grad.
  Tensor param(Parameter& p);

  // Records an interior node. `inputs` must already be on this tape.
  Tensor record(Matrix value, std::vector<int> inputs, BackwardFn backward);

  // Reverse pass from a 1x1 loss. Interior gradients are reset first; leaf
  // gradients accumulate across calls until zero_grad().
  void backward(const Tensor& loss);
  void zero_grad();

  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad(int id) const;
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  void accumulate(int id, const Matrix& delta);

  std::size_t size() const { return nodes_.size(); }
  std::vector<int> trainable() const;

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool leaf = true;
    Parameter* param = nullptr;
  };

  Matrix& grad_ref(int id);
  void check_owned(const Tensor& t) const;

  std::vector<Node> nodes_;
};

// Primitives. Every binary op checks shapes and throws DimensionError.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor transpose(const Tensor& a);
Tensor inverse(const Tensor& a);
Tensor frobenius_sq(const Tensor& a);
Tensor sum(const Tensor& a);

// a (r x c) plus column vector b (r x 1) added to every column.
Tensor add_colwise(const Tensor& a, const Tensor& b);
// a + factor * I for square a.
Tensor add_identity(const Tensor& a, double factor);
Tensor block(const Tensor& a, Eigen::Index row, Eigen::Index col,
             Eigen::Index rows, Eigen::Index cols);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor concat_cols(const std::vector<Tensor>& parts);

enum class ElementwiseKind { relu, add, sub, hadamard, scale };

// Dispatch form of the elementwise family. `b` is ignored for relu and
// scale; `factor` is used only by scale.
Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor& b = {},
                   double factor = 1.0);

// Pivot threshold used by inverse(): a pivot below this fraction of the
// largest entry magnitude is treated as singular.
inline constexpr double kSingularPivotRatio = 1e-12;

// LU inverse with the same singularity guard as the tape primitive.
Matrix checked_inverse(const Matrix& a);

}  // namespace skel
