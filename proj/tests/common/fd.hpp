#pragma once

// Central finite-difference oracle for tape gradients.

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <vector>

#include "skel/tape.hpp"

namespace skel::testing {

using ScalarFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

// Reverse-mode gradients of fn at `inputs`.
inline std::vector<Matrix> tape_gradients(const ScalarFn& fn, const std::vector<Matrix>& inputs) {
  Tape tape;
  std::vector<Tensor> leaves;
  for (const auto& m : inputs) leaves.push_back(tape.variable(m));
  tape.backward(fn(tape, leaves));
  std::vector<Matrix> out;
  for (const auto& t : leaves) out.push_back(t.grad());
  return out;
}

inline double evaluate(const ScalarFn& fn, const std::vector<Matrix>& inputs) {
  Tape tape;
  std::vector<Tensor> leaves;
  for (const auto& m : inputs) leaves.push_back(tape.constant(m));
  return fn(tape, leaves).scalar();
}

inline std::vector<Matrix> fd_gradients(const ScalarFn& fn, std::vector<Matrix> inputs, double h = 1e-6) {
  std::vector<Matrix> out;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Matrix g(inputs[k].rows(), inputs[k].cols());
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double keep = inputs[k](i);
      inputs[k](i) = keep + h;
      const double up = evaluate(fn, inputs);
      inputs[k](i) = keep - h;
      const double down = evaluate(fn, inputs);
      inputs[k](i) = keep;
      g(i) = (up - down) / (2.0 * h);
    }
    out.push_back(g);
  }
  return out;
}

// max over inputs of |g - fd|_F / max(|fd|_F, floor)
inline double gradient_error(const ScalarFn& fn, const std::vector<Matrix>& inputs, double h = 1e-6,
                             double floor = 1e-8) {
  const auto g = tape_gradients(fn, inputs);
  const auto fd = fd_gradients(fn, inputs, h);
  double worst = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    worst = std::max(worst, (g[k] - fd[k]).norm() / std::max(fd[k].norm(), floor));
  }
  return worst;
}

// Scalar read-out <W, X> with a fixed random weight, so every entry of a
// matrix-valued op reaches the loss with a distinct factor.
inline Tensor readout(Tape& tape, const Tensor& x, unsigned seed = 7) {
  std::srand(seed);
  Matrix w = Matrix::Random(x.rows(), x.cols());
  return sum(hadamard(tape.constant(w), x));
}

}  // namespace skel::testing
