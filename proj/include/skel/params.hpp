#pragma once

// Operator parameterizations. Each builder returns the N x N operator as a
// tensor on the caller's tape so the objective can differentiate through it.

#include <random>

#include "skel/tape.hpp"

namespace skel {

inline constexpr double kDefaultStabilityEpsilon = 1e-8;

/// Unconstrained discrete-time parameters: L (2N x 2N) and R (N x N) map to
///   A = 2 (M11 + M22 + R - R^T)^-1 M21,   M = L L^T + eps I,
/// which is Schur stable for every finite (L, R), and every Schur-stable
/// matrix is reachable.
struct StableDTParams {
  Parameter l;
  Parameter r;
  double epsilon = kDefaultStabilityEpsilon;

  StableDTParams() = default;
  StableDTParams(Matrix l, Matrix r, double epsilon = kDefaultStabilityEpsilon);
  Eigen::Index dim() const { return r.value.rows(); }
};

/// Unconstrained continuous-time parameters mapping to a Hurwitz matrix
///   A = (Wn Wn^T + eps I)^-1 (-Wq Wq^T - eps I + (Wr - Wr^T) / 2).
struct StableCTParams {
  Parameter wn;
  Parameter wq;
  Parameter wr;
  double epsilon = kDefaultStabilityEpsilon;

  StableCTParams() = default;
  StableCTParams(Matrix wn, Matrix wq, Matrix wr, double epsilon = kDefaultStabilityEpsilon);
  Eigen::Index dim() const { return wn.value.rows(); }
};

/// Constrained baseline A = S^-1 O C S with O orthogonal and C symmetric PSD
/// with spectral norm at most 1. Feasibility is restored by project_soc().
struct SOCParams {
  Parameter s;
  Parameter o;
  Parameter c;

  SOCParams() = default;
  SOCParams(Matrix s, Matrix o, Matrix c);
  Eigen::Index dim() const { return s.value.rows(); }
};

// Floor applied to the singular values of S during projection.
inline constexpr double kSocMinSingular = 1e-6;

/// E, F, P of the block characterization: M = [[E + E^T - P, F^T], [F, P]]
/// is positive definite iff E^-1 F is Schur stable.
struct BlockCertificate {
  Matrix e;
  Matrix f;
  Matrix p;
  Matrix m;
};

Tensor build_stable_dt(Tape& tape, StableDTParams& p);
Tensor build_stable_ct(Tape& tape, StableCTParams& p);
Tensor build_soc(Tape& tape, SOCParams& p);

/// Ridge-regularized DMD operator A = Y1 Y2^T (Y2 Y2^T + ridge I)^-1.
/// With ridge = 0 and full-row-rank Y2 this is the least-squares Y1 Y2^+.
Tensor build_lkis(const Tensor& y1, const Tensor& y2, double ridge);

// Polar projection of O, eigenvalue clipping of C to [0, 1], and a
// singular-value floor on S. Operates on the parameter values in place.
void project_soc(SOCParams& p);

// Value-only conveniences (scratch tape).
Matrix stable_dt_operator(const Matrix& l, const Matrix& r, double epsilon);
Matrix stable_ct_operator(const Matrix& wn, const Matrix& wq, const Matrix& wr, double epsilon);
Matrix soc_operator(const Matrix& s, const Matrix& o, const Matrix& c);
Matrix dmd_operator(const Matrix& y1, const Matrix& y2, double ridge);

/// The block certificate realized by (L, R): E = (M11 + M22 + R - R^T) / 2,
/// F = M21, P = M22.
BlockCertificate block_certificate(const StableDTParams& p);

/// Inverse of build_stable_dt for a Schur-stable target: solves
/// P - A^T P A = I, sets E = P, F = P A, rescales so that the block matrix
/// clears epsilon, and factors M - eps I by Cholesky. Throws
/// InfeasibleError when the target is not Schur stable.
StableDTParams recover_stable_dt(const Matrix& target, double epsilon = kDefaultStabilityEpsilon);

// Fresh parameters with entries drawn uniformly from [-bound, bound].
StableDTParams random_stable_dt(Eigen::Index n, std::mt19937_64& rng, double bound = 0.1,
                                double epsilon = kDefaultStabilityEpsilon);
StableCTParams random_stable_ct(Eigen::Index n, std::mt19937_64& rng, double bound = 0.1,
                                double epsilon = kDefaultStabilityEpsilon);
// Starts from a feasible point near 0.5 I and projects.
SOCParams random_soc(Eigen::Index n, std::mt19937_64& rng, double bound = 0.1);

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double bound);

}  // namespace skel
