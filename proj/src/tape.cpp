#include "skel/tape.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "skel/error.hpp"

namespace skel {

namespace {

std::string shape_of(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_of(a.value()) + " vs " + shape_of(b.value()));
  }
}

Tape& common_tape(const Tensor& a, const Tensor& b) {
  if (!a.valid() || !b.valid()) throw ContractError("tensor is not bound to a tape");
  if (a.tape() != b.tape()) throw ContractError("tensors live on different tapes");
  return *a.tape();
}

Tape& tape_of(const Tensor& a) {
  if (!a.valid()) throw ContractError("tensor is not bound to a tape");
  return *a.tape();
}

}  // namespace

Parameter::Parameter(std::string name_, Matrix value_)
    : name(std::move(name_)), value(std::move(value_)) {
  zero_grad();
}

const Matrix& Tensor::value() const { return tape_->value(id_); }
const Matrix& Tensor::grad() const { return tape_->grad(id_); }

double Tensor::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ContractError("scalar() on non-scalar tensor " + shape_of(v));
  return v(0, 0);
}

Tensor Tape::constant(Matrix value) {
  Node n;
  n.grad = Matrix::Zero(value.rows(), value.cols());
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Tensor Tape::variable(Matrix value) {
  Tensor t = constant(std::move(value));
  nodes_.back().requires_grad = true;
  return t;
}

Tensor Tape::param(Parameter& p) {
  if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Tensor Tape::record(Matrix value, std::vector<int> inputs, BackwardFn backward) {
  Node n;
  const int self = static_cast<int>(nodes_.size());
  for (int in : inputs) {
    if (in < 0 || in >= self) throw ContractError("node input out of topological order");
    n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  }
  n.grad = Matrix::Zero(value.rows(), value.cols());
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  n.leaf = false;
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, self};
}

const Matrix& Tape::grad(int id) const {
  const Node& n = nodes_[id];
  return n.param ? n.param->grad : n.grad;
}

Matrix& Tape::grad_ref(int id) {
  Node& n = nodes_[id];
  return n.param ? n.param->grad : n.grad;
}

void Tape::accumulate(int id, const Matrix& delta) {
  if (!nodes_[id].requires_grad) return;
  grad_ref(id) += delta;
}

void Tape::check_owned(const Tensor& t) const {
  if (t.tape() != this || t.id() < 0 || t.id() >= static_cast<int>(nodes_.size())) {
    throw ContractError("tensor does not belong to this tape");
  }
}

void Tape::backward(const Tensor& loss) {
  check_owned(loss);
  if (loss.value().size() != 1) {
    throw ContractError("backward requires a 1x1 loss, got " + shape_of(loss.value()));
  }
  for (Node& n : nodes_) {
    if (!n.leaf) n.grad.setZero();
  }
  const int root = loss.id();
  if (!nodes_[root].requires_grad) return;
  grad_ref(root)(0, 0) += 1.0;
  for (int id = root; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.leaf || !n.requires_grad || !n.backward) continue;
    // Inputs always have smaller ids, so n.grad is not written during the call.
    n.backward(*this, n.grad);
  }
}

void Tape::zero_grad() {
  for (Node& n : nodes_) {
    if (n.param) {
      n.param->zero_grad();
    } else {
      n.grad.setZero();
    }
  }
}

std::vector<int> Tape::trainable() const {
  std::vector<int> ids;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].leaf && nodes_[i].requires_grad) ids.push_back(static_cast<int>(i));
  }
  return ids;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tape& tape = common_tape(a, b);
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ " + shape_of(a.value()) +
                         " * " + shape_of(b.value()));
  }
  const int ia = a.id(), ib = b.id();
  return tape.record(a.value() * b.value(), {ia, ib}, [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tape& tape = common_tape(a, b);
  require_same_shape("add", a, b);
  const int ia = a.id(), ib = b.id();
  return tape.record(a.value() + b.value(), {ia, ib}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tape& tape = common_tape(a, b);
  require_same_shape("sub", a, b);
  const int ia = a.id(), ib = b.id();
  return tape.record(a.value() - b.value(), {ia, ib}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  Tape& tape = common_tape(a, b);
  require_same_shape("hadamard", a, b);
  const int ia = a.id(), ib = b.id();
  return tape.record(a.value().cwiseProduct(b.value()), {ia, ib},
                     [ia, ib](Tape& t, const Matrix& g) {
                       if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
                       if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
                     });
}

Tensor scale(const Tensor& a, double factor) {
  Tape& tape = tape_of(a);
  const int ia = a.id();
  return tape.record(a.value() * factor, {ia},
                     [ia, factor](Tape& t, const Matrix& g) { t.accumulate(ia, g * factor); });
}

Tensor relu(const Tensor& a) {
  Tape& tape = tape_of(a);
  const int ia = a.id();
  return tape.record(a.value().cwiseMax(0.0), {ia}, [ia](Tape& t, const Matrix& g) {
    // Subgradient 0 at exactly 0.
    const Matrix mask = (t.value(ia).array() > 0.0).cast<double>().matrix();
    t.accumulate(ia, g.cwiseProduct(mask));
  });
}

Tensor transpose(const Tensor& a) {
  Tape& tape = tape_of(a);
  const int ia = a.id();
  return tape.record(a.value().transpose(), {ia},
                     [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g.transpose()); });
}

Matrix checked_inverse(const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("inverse: non-square " + shape_of(a));
  if (a.size() == 0) return a;
  if (!a.allFinite()) throw SingularityError("inverse: matrix has non-finite entries");
  const double max_abs = a.cwiseAbs().maxCoeff();
  if (max_abs == 0.0) throw SingularityError("inverse: zero matrix");
  Eigen::PartialPivLU<Matrix> lu(a);
  const double min_pivot = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
  if (min_pivot < kSingularPivotRatio * max_abs) {
    std::ostringstream os;
    os << "inverse: near-singular " << shape_of(a) << " matrix (pivot " << min_pivot
       << ", max entry " << max_abs << ")";
    throw SingularityError(os.str());
  }
  return lu.inverse();
}

Tensor inverse(const Tensor& a) {
  Tape& tape = tape_of(a);
  const int ia = a.id();
  Matrix inv = checked_inverse(a.value());
  const int self = static_cast<int>(tape.size());
  return tape.record(std::move(inv), {ia}, [ia, self](Tape& t, const Matrix& g) {
    const Matrix& inv_t = t.value(self);
    t.accumulate(ia, -inv_t.transpose() * g * inv_t.transpose());
  });
}

Tensor frobenius_sq(const Tensor& a) {
  Tape& tape = tape_of(a);
  const int ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().squaredNorm();
  return tape.record(std::move(out), {ia}, [ia](Tape& t, const Matrix& g) {
    t.accumulate(ia, (2.0 * g(0, 0)) * t.value(ia));
  });
}

Tensor sum(const Tensor& a) {
  Tape& tape = tape_of(a);
  const int ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const Eigen::Index r = a.rows(), c = a.cols();
  return tape.record(std::move(out), {ia}, [ia, r, c](Tape& t, const Matrix& g) {
    t.accumulate(ia, Matrix::Constant(r, c, g(0, 0)));
  });
}

Tensor add_colwise(const Tensor& a, const Tensor& b) {
  Tape& tape = common_tape(a, b);
  if (b.cols() != 1 || b.rows() != a.rows()) {
    throw DimensionError("add_colwise: expected column of " + std::to_string(a.rows()) +
                         " rows, got " + shape_of(b.value()));
  }
  const int ia = a.id(), ib = b.id();
  Matrix out = a.value().colwise() + b.value().col(0);
  return tape.record(std::move(out), {ia, ib}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    if (t.requires_grad(ib)) t.accumulate(ib, g.rowwise().sum());
  });
}

Tensor add_identity(const Tensor& a, double factor) {
  Tape& tape = tape_of(a);
  if (a.rows() != a.cols()) throw DimensionError("add_identity: non-square " + shape_of(a.value()));
  const int ia = a.id();
  Matrix out = a.value();
  out.diagonal().array() += factor;
  return tape.record(std::move(out), {ia}, [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g); });
}

Tensor block(const Tensor& a, Eigen::Index row, Eigen::Index col, Eigen::Index rows,
             Eigen::Index cols) {
  Tape& tape = tape_of(a);
  if (row < 0 || col < 0 || rows < 0 || cols < 0 || row + rows > a.rows() ||
      col + cols > a.cols()) {
    throw DimensionError("block: window exceeds " + shape_of(a.value()));
  }
  const int ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return tape.record(a.value().block(row, col, rows, cols), {ia},
                     [ia, r, c, row, col, rows, cols](Tape& t, const Matrix& g) {
                       Matrix d = Matrix::Zero(r, c);
                       d.block(row, col, rows, cols) = g;
                       t.accumulate(ia, d);
                     });
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  return block(a, 0, start, a.rows(), count);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  Tape& tape = tape_of(parts.front());
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> widths;
  ids.reserve(parts.size());
  widths.reserve(parts.size());
  for (const Tensor& p : parts) {
    if (p.tape() != &tape) throw ContractError("concat_cols: tensors live on different tapes");
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + std::to_string(rows) + " vs " +
                           shape_of(p.value()));
    }
    ids.push_back(p.id());
    widths.push_back(p.cols());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Tensor& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  auto inputs = ids;
  return tape.record(std::move(out), std::move(inputs),
                     [ids, widths](Tape& t, const Matrix& g) {
                       Eigen::Index off = 0;
                       for (std::size_t k = 0; k < ids.size(); ++k) {
                         if (t.requires_grad(ids[k])) t.accumulate(ids[k], g.middleCols(off, widths[k]));
                         off += widths[k];
                       }
                     });
}

Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor& b, double factor) {
  switch (kind) {
    case ElementwiseKind::relu: return relu(a);
    case ElementwiseKind::add: return add(a, b);
    case ElementwiseKind::sub: return sub(a, b);
    case ElementwiseKind::hadamard: return hadamard(a, b);
    case ElementwiseKind::scale: return scale(a, factor);
  }
  throw ContractError("elementwise: unknown kind");
}

}  // namespace skel
