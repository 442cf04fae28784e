#include <gtest/gtest.h>

#include <random>

#include "common/fd.hpp"
#include "skel/error.hpp"
#include "skel/linalg.hpp"
#include "skel/params.hpp"

namespace skel {
namespace {

TEST(StableDT, RandomParametersAreSchurStable) {
  std::mt19937_64 rng(1);
  for (int n : {2, 5, 20}) {
    for (int k = 0; k < 50; ++k) {
      const double bound = k % 2 ? 0.1 : 10.0;
      StableDTParams p = random_stable_dt(n, rng, bound);
      Tape tape;
      EXPECT_LT(spectral_radius(build_stable_dt(tape, p).value()), 1.0);
    }
  }
}

TEST(StableDT, BlockCertificateIsPositiveDefinite) {
  std::mt19937_64 rng(2);
  StableDTParams p = random_stable_dt(4, rng, 1.0);
  BlockCertificate c = block_certificate(p);
  EXPECT_GT(min_symmetric_eigenvalue(c.m), 0.0);
  // A = E^-1 F
  const Matrix a = stable_dt_operator(p.l.value, p.r.value, p.epsilon);
  EXPECT_LT((c.e.inverse() * c.f - a).norm(), 1e-10);
  EXPECT_TRUE(c.p.isApprox(c.p.transpose()));
}

TEST(StableDT, ZeroParametersGiveZeroOperator) {
  StableDTParams p(Matrix::Zero(4, 4), Matrix::Zero(2, 2));
  Tape tape;
  EXPECT_LT(build_stable_dt(tape, p).value().norm(), 1e-12);
}

TEST(StableDT, RejectsBadShapesAndEpsilon) {
  StableDTParams p(Matrix::Zero(3, 3), Matrix::Zero(2, 2));
  Tape tape;
  EXPECT_THROW(build_stable_dt(tape, p), DimensionError);
  StableDTParams q(Matrix::Zero(4, 4), Matrix::Zero(2, 2), 0.0);
  EXPECT_THROW(build_stable_dt(tape, q), ContractError);
}

TEST(StableDT, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  const Matrix l = uniform_matrix(6, 6, rng, 1.0);
  const Matrix r = uniform_matrix(3, 3, rng, 1.0);
  auto fn = [](Tape& t, const std::vector<Tensor>& x) {
    Tensor m = add_identity(matmul(x[0], transpose(x[0])), 1e-8);
    Tensor inner = add(add(block(m, 0, 0, 3, 3), block(m, 3, 3, 3, 3)), sub(x[1], transpose(x[1])));
    return testing::readout(t, scale(matmul(inverse(inner), block(m, 3, 0, 3, 3)), 2.0));
  };
  EXPECT_LT(testing::gradient_error(fn, {l, r}), 1e-5);
}

TEST(StableCT, RandomParametersAreHurwitz) {
  std::mt19937_64 rng(4);
  for (int n : {2, 5, 20}) {
    for (int k = 0; k < 50; ++k) {
      StableCTParams p = random_stable_ct(n, rng, k % 2 ? 0.1 : 10.0);
      Tape tape;
      EXPECT_LT(spectral_abscissa(build_stable_ct(tape, p).value()), 0.0);
    }
  }
}

TEST(Recover, ReconstructsStableTargets) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 20; ++k) {
    Matrix a = uniform_matrix(5, 5, rng, 1.0);
    a *= 0.99 / spectral_radius(a);
    StableDTParams p = recover_stable_dt(a);
    EXPECT_LT((stable_dt_operator(p.l.value, p.r.value, p.epsilon) - a).norm(), 1e-6);
  }
}

TEST(Recover, UnstableTargetIsInfeasible) {
  EXPECT_THROW(recover_stable_dt(Matrix::Identity(3, 3)), InfeasibleError);
}

TEST(Soc, ProjectionRestoresFeasibility) {
  std::mt19937_64 rng(6);
  SOCParams p(uniform_matrix(4, 4, rng, 1.0), uniform_matrix(4, 4, rng, 2.0), uniform_matrix(4, 4, rng, 2.0));
  project_soc(p);
  EXPECT_LT((p.o.value.transpose() * p.o.value - Matrix::Identity(4, 4)).norm(), 1e-12);
  EXPECT_TRUE(p.c.value.isApprox(p.c.value.transpose()));
  EXPECT_GE(min_symmetric_eigenvalue(p.c.value), -1e-12);
  EXPECT_LE(max_symmetric_eigenvalue(p.c.value), 1.0 + 1e-12);
  EXPECT_LE(spectral_radius(soc_operator(p.s.value, p.o.value, p.c.value)), 1.0 + 1e-10);
  Eigen::JacobiSVD<Matrix> svd(p.s.value);
  EXPECT_GE(svd.singularValues().minCoeff(), kSocMinSingular * (1 - 1e-12));
}

TEST(Soc, RandomInitIsFeasible) {
  std::mt19937_64 rng(7);
  SOCParams p = random_soc(6, rng, 0.1);
  EXPECT_LE(spectral_radius(soc_operator(p.s.value, p.o.value, p.c.value)), 1.0 + 1e-10);
}

TEST(Lkis, RecoversGeneratorFromExactSnapshots) {
  std::mt19937_64 rng(8);
  Matrix a = uniform_matrix(3, 3, rng, 1.0);
  a *= 0.9 / spectral_radius(a);
  Matrix y(3, 40);
  y.col(0) = Vector::Ones(3);
  for (int t = 1; t < 40; ++t) y.col(t) = a * y.col(t - 1) + 0.3 * uniform_matrix(3, 1, rng, 1.0);
  // Snapshot pairs (y_t, a y_t) span the space; ridge 0 is exact least squares.
  const Matrix y2 = y;
  const Matrix y1 = a * y;
  EXPECT_LT((dmd_operator(y1, y2, 0.0) - a).norm(), 1e-10);
  Tape tape;
  EXPECT_THROW(build_lkis(tape.constant(y1), tape.constant(y2), -1.0), ContractError);
}

}  // namespace
}  // namespace skel
