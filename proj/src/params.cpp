#include "skel/params.hpp"

#include <algorithm>
#include <cmath>

#include "skel/error.hpp"
#include "skel/linalg.hpp"

namespace skel {

namespace {

void require_square_param(const Parameter& p, Eigen::Index n, const char* what) {
  if (p.value.rows() != n || p.value.cols() != n) {
    throw DimensionError(std::string(what) + " must be " + std::to_string(n) + "x" +
                         std::to_string(n) + ", got " + std::to_string(p.value.rows()) + "x" +
                         std::to_string(p.value.cols()));
  }
}

void require_positive_epsilon(double eps) {
  if (!(eps > 0.0)) throw ContractError("stability epsilon must be positive");
}

}  // namespace

StableDTParams::StableDTParams(Matrix l_, Matrix r_, double epsilon_)
    : l("L", std::move(l_)), r("R", std::move(r_)), epsilon(epsilon_) {}

StableCTParams::StableCTParams(Matrix wn_, Matrix wq_, Matrix wr_, double epsilon_)
    : wn("Wn", std::move(wn_)), wq("Wq", std::move(wq_)), wr("Wr", std::move(wr_)),
      epsilon(epsilon_) {}

SOCParams::SOCParams(Matrix s_, Matrix o_, Matrix c_)
    : s("S", std::move(s_)), o("O", std::move(o_)), c("C", std::move(c_)) {}

Tensor build_stable_dt(Tape& tape, StableDTParams& p) {
  const Eigen::Index n = p.dim();
  require_square_param(p.r, n, "R");
  require_square_param(p.l, 2 * n, "L");
  require_positive_epsilon(p.epsilon);
  Tensor l = tape.param(p.l);
  Tensor r = tape.param(p.r);
  Tensor m = add_identity(matmul(l, transpose(l)), p.epsilon);
  Tensor m11 = block(m, 0, 0, n, n);
  Tensor m21 = block(m, n, 0, n, n);
  Tensor m22 = block(m, n, n, n, n);
  Tensor inner = add(add(m11, m22), sub(r, transpose(r)));
  return scale(matmul(inverse(inner), m21), 2.0);
}

Tensor build_stable_ct(Tape& tape, StableCTParams& p) {
  const Eigen::Index n = p.dim();
  require_square_param(p.wn, n, "Wn");
  require_square_param(p.wq, n, "Wq");
  require_square_param(p.wr, n, "Wr");
  require_positive_epsilon(p.epsilon);
  Tensor wn = tape.param(p.wn);
  Tensor wq = tape.param(p.wq);
  Tensor wr = tape.param(p.wr);
  Tensor lhs = add_identity(matmul(wn, transpose(wn)), p.epsilon);
  Tensor rhs = add(scale(add_identity(matmul(wq, transpose(wq)), p.epsilon), -1.0),
                   scale(sub(wr, transpose(wr)), 0.5));
  return matmul(inverse(lhs), rhs);
}

Tensor build_soc(Tape& tape, SOCParams& p) {
  const Eigen::Index n = p.dim();
  require_square_param(p.o, n, "O");
  require_square_param(p.c, n, "C");
  Tensor s = tape.param(p.s);
  Tensor o = tape.param(p.o);
  Tensor c = tape.param(p.c);
  return matmul(matmul(inverse(s), matmul(o, c)), s);
}

Tensor build_lkis(const Tensor& y1, const Tensor& y2, double ridge) {
  if (!(ridge >= 0.0)) throw ContractError("build_lkis: ridge must be non-negative");
  if (y1.rows() != y2.rows() || y1.cols() != y2.cols()) {
    throw DimensionError("build_lkis: snapshot matrices differ in shape");
  }
  if (y2.cols() < 1) throw ContractError("build_lkis: need at least one snapshot pair");
  Tensor y2t = transpose(y2);
  Tensor gram = add_identity(matmul(y2, y2t), ridge);
  return matmul(matmul(y1, y2t), inverse(gram));
}

void project_soc(SOCParams& p) {
  const Eigen::Index n = p.dim();
  {
    Eigen::JacobiSVD<Matrix> svd(p.o.value, Eigen::ComputeFullU | Eigen::ComputeFullV);
    p.o.value = svd.matrixU() * svd.matrixV().transpose();
  }
  {
    const Matrix sym = 0.5 * (p.c.value + p.c.value.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    const Vector clipped = es.eigenvalues().cwiseMax(0.0).cwiseMin(1.0);
    Matrix c = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
    p.c.value = 0.5 * (c + c.transpose());
  }
  {
    Eigen::JacobiSVD<Matrix> svd(p.s.value, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vector& sv = svd.singularValues();
    if (n > 0 && sv(n - 1) < kSocMinSingular) {
      const Vector floored = sv.cwiseMax(kSocMinSingular);
      p.s.value = svd.matrixU() * floored.asDiagonal() * svd.matrixV().transpose();
    }
  }
}

Matrix stable_dt_operator(const Matrix& l, const Matrix& r, double epsilon) {
  StableDTParams p(l, r, epsilon);
  Tape tape;
  return build_stable_dt(tape, p).value();
}

Matrix stable_ct_operator(const Matrix& wn, const Matrix& wq, const Matrix& wr, double epsilon) {
  StableCTParams p(wn, wq, wr, epsilon);
  Tape tape;
  return build_stable_ct(tape, p).value();
}

Matrix soc_operator(const Matrix& s, const Matrix& o, const Matrix& c) {
  SOCParams p(s, o, c);
  Tape tape;
  return build_soc(tape, p).value();
}

Matrix dmd_operator(const Matrix& y1, const Matrix& y2, double ridge) {
  Tape tape;
  return build_lkis(tape.constant(y1), tape.constant(y2), ridge).value();
}

BlockCertificate block_certificate(const StableDTParams& p) {
  const Eigen::Index n = p.dim();
  const Matrix& l = p.l.value;
  const Matrix m = l * l.transpose() + p.epsilon * Matrix::Identity(2 * n, 2 * n);
  BlockCertificate cert;
  cert.e = 0.5 * (m.topLeftCorner(n, n) + m.bottomRightCorner(n, n) + p.r.value -
                  p.r.value.transpose());
  cert.f = m.bottomLeftCorner(n, n);
  cert.p = m.bottomRightCorner(n, n);
  cert.m = m;
  return cert;
}

StableDTParams recover_stable_dt(const Matrix& target, double epsilon) {
  require_positive_epsilon(epsilon);
  if (target.rows() != target.cols()) throw DimensionError("recover_stable_dt: non-square target");
  const Eigen::Index n = target.rows();
  const Matrix p = solve_dlyap(target, Matrix::Identity(n, n));
  // E = P, F = P A: the Schur complement of M is P - A^T P A = I > 0.
  Matrix m(2 * n, 2 * n);
  m.topLeftCorner(n, n) = p;
  m.topRightCorner(n, n) = (p * target).transpose();
  m.bottomLeftCorner(n, n) = p * target;
  m.bottomRightCorner(n, n) = p;
  m = 0.5 * (m + m.transpose());
  // A is invariant under M -> c M; pick c so that lambda_min(c M) = 1.
  const double lmin = min_symmetric_eigenvalue(m);
  if (!(lmin > 0.0)) throw InfeasibleError("recover_stable_dt: block matrix is not positive definite");
  m /= lmin;
  m.diagonal().array() -= epsilon;
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw InfeasibleError("recover_stable_dt: Cholesky failed");
  return StableDTParams(llt.matrixL(), Matrix::Zero(n, n), epsilon);
}

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  // Fill column-major so the draw order is fixed.
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  }
  return m;
}

StableDTParams random_stable_dt(Eigen::Index n, std::mt19937_64& rng, double bound, double epsilon) {
  Matrix l = uniform_matrix(2 * n, 2 * n, rng, bound);
  Matrix r = uniform_matrix(n, n, rng, bound);
  return StableDTParams(std::move(l), std::move(r), epsilon);
}

StableCTParams random_stable_ct(Eigen::Index n, std::mt19937_64& rng, double bound, double epsilon) {
  Matrix wn = uniform_matrix(n, n, rng, bound);
  Matrix wq = uniform_matrix(n, n, rng, bound);
  Matrix wr = uniform_matrix(n, n, rng, bound);
  return StableCTParams(std::move(wn), std::move(wq), std::move(wr), epsilon);
}

SOCParams random_soc(Eigen::Index n, std::mt19937_64& rng, double bound) {
  const Matrix eye = Matrix::Identity(n, n);
  SOCParams p(eye + uniform_matrix(n, n, rng, bound), eye + uniform_matrix(n, n, rng, bound),
              0.5 * eye + uniform_matrix(n, n, rng, bound));
  project_soc(p);
  return p;
}

}  // namespace skel
