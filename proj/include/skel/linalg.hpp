#pragma once

#include <Eigen/Dense>

#include <complex>

#include "skel/tape.hpp"

namespace skel {

using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

/// Eigendecomposition a = V diag(lambdas) V^-1 of a real square matrix.
///
/// Columns of `vectors` have unit 2-norm. Complex-conjugate eigenvalue pairs
/// are stored adjacently with the positive imaginary part first.
struct EigenDecomposition {
  ComplexMatrix vectors;
  ComplexVector lambdas;
  ComplexMatrix inverse_vectors;
  // ||a V - V diag(lambdas)||_F
  double residual = 0.0;
  // 2-norm condition number of V (infinity when V is singular).
  double condition = 0.0;

  // Thresholds below which the decomposition may replace matrix powers.
  static constexpr double kMaxResidual = 1e-8;
  static constexpr double kMaxCondition = 1e8;

  bool usable() const { return residual < kMaxResidual && condition < kMaxCondition; }
};

// Eigenvalues by Householder reduction to Hessenberg form followed by
// Francis double-shift QR. Throws ConvergenceError after 100*n sweeps.
ComplexVector eigenvalues(const Matrix& a);
EigenDecomposition eig(const Matrix& a);

double spectral_radius(const Matrix& a);
// Largest real part over the spectrum (Hurwitz check for CT operators).
double spectral_abscissa(const Matrix& a);

/// Solves P - A^T P A = Q through the Kronecker system
/// (I - A^T (x) A^T) vec(P) = vec(Q), then symmetrizes.
/// Throws InfeasibleError when rho(A) >= 1.
Matrix solve_dlyap(const Matrix& a, const Matrix& q);

// exp(a) by scaling and squaring with the diagonal (6,6) Pade approximant.
Matrix expm_value(const Matrix& a);

// Number of squarings used for exp(a): max(0, ceil(log2 ||a||_1)).
int expm_squarings(const Matrix& a);

// Diagonal Pade(6,6) numerator coefficients for exp; the denominator uses
// the same coefficients with alternating sign.
inline constexpr double kPade6[7] = {1.0,
                                     1.0 / 2.0,
                                     5.0 / 44.0,
                                     1.0 / 66.0,
                                     1.0 / 792.0,
                                     1.0 / 15840.0,
                                     1.0 / 665280.0};

struct PowerResult {
  Matrix value;
  // True when the eigendecomposition was rejected and the fallback ran.
  bool fallback = false;
  // Largest discarded imaginary magnitude (0 on the fallback path).
  double max_imag = 0.0;
};

// Imaginary residue tolerated before V Lambda^t V^-1 is considered real.
inline constexpr double kMaxImagResidue = 1e-8;

/// a^t via V diag(lambda^t) V^-1 when `ed` is usable, else by repeated
/// multiplication. `ed` must be the decomposition of `a`.
PowerResult matrix_power_fast(const EigenDecomposition& ed, const Matrix& a, long t);

/// exp(a t) via V diag(exp(lambda t)) V^-1 when `ed` is usable, else Pade.
PowerResult matrix_exp_fast(const EigenDecomposition& ed, const Matrix& a, double t);

// Smallest eigenvalue of the symmetric part of a.
double min_symmetric_eigenvalue(const Matrix& a);
double max_symmetric_eigenvalue(const Matrix& a);

}  // namespace skel
