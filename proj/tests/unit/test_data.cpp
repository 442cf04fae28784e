#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "skel/data.hpp"
#include "skel/error.hpp"
#include "skel/params.hpp"

namespace skel {
namespace {

TEST(Csv, TwoRowsOneTrajectory) {
  Dataset d = parse_csv("traj_id,t,x0,x1\na,0,1,2\na,0.5,3,4\n");
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].length(), 2);
  EXPECT_EQ(d[0].dim(), 2);
  EXPECT_DOUBLE_EQ(d[0].states(1, 1), 4.0);
  EXPECT_DOUBLE_EQ(d[0].times[1], 0.5);
}

TEST(Csv, ShuffledRowsNormalize) {
  const Dataset sorted = parse_csv("traj_id,t,x0\n1,0,1\n1,1,2\n2,0,5\n2,1,6\n10,0,9\n");
  const Dataset shuffled = parse_csv("traj_id,t,x0\n2,1,6\n10,0,9\n1,1,2\n2,0,5\n1,0,1\n");
  ASSERT_EQ(sorted.size(), shuffled.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    EXPECT_EQ(sorted[i].source_id, shuffled[i].source_id);
    EXPECT_EQ(sorted[i].states, shuffled[i].states);
    EXPECT_EQ(sorted[i].times, shuffled[i].times);
  }
  EXPECT_EQ(sorted[2].source_id, "10");
}

TEST(Csv, RoundTripPreservesValues) {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::spiral_sink;
  spec.n_traj = 3;
  spec.steps = 20;
  spec.noise_std = 0.1;
  const Dataset d = gen_synthetic(spec);
  const auto path = std::filesystem::temp_directory_path() / "skel_roundtrip.csv";
  save_csv(path.string(), d);
  const Dataset back = load_csv(path.string());
  std::filesystem::remove(path);
  ASSERT_EQ(back.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(back[i].states, d[i].states);
    EXPECT_EQ(back[i].times, d[i].times);
  }
}

TEST(Csv, ErrorsCarryLineNumbers) {
  auto message = [](const std::string& text) {
    try {
      parse_csv(text, "f.csv");
    } catch (const ParseError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("traj_id,t,x0\na,0,1\na,1\n").find("f.csv:3"), std::string::npos);
  EXPECT_NE(message("traj_id,t,x0\na,0,1\na,1,zz\n").find("f.csv:3"), std::string::npos);
  EXPECT_NE(message("traj_id,t,x0\na,0,1\na,0,2\n").find("f.csv:3"), std::string::npos);
  EXPECT_NE(message("id,t,x0\na,0,1\n").find("f.csv:1"), std::string::npos);
  EXPECT_THROW(load_csv("/nonexistent/path.csv"), ParseError);
}

Trajectory timed(const Matrix& states, double dt) {
  Trajectory t;
  t.states = states;
  for (Eigen::Index k = 0; k < states.cols(); ++k) t.times.push_back(k * dt);
  return t;
}

TEST(Resample, LinearDataIsExact) {
  Matrix x(1, 6);
  for (int k = 0; k < 6; ++k) x(0, k) = 2.0 * k * 0.1 + 1.0;
  Trajectory r = resample_uniform(timed(x, 0.1), 0.03);
  for (Eigen::Index k = 0; k < r.length(); ++k) EXPECT_NEAR(r.states(0, k), 2.0 * r.times[k] + 1.0, 1e-12);
}

TEST(Resample, OriginalStampsReproduceValues) {
  Matrix x(2, 7);
  for (int k = 0; k < 7; ++k) x.col(k) << std::sin(k * 0.3), std::cos(k * 0.7);
  Trajectory r = resample_uniform(timed(x, 0.25), 0.25);
  ASSERT_EQ(r.length(), 7);
  EXPECT_LT((r.states - x).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Resample, SineAt50HzMatchesAnalytic) {
  const double dt = 0.01;
  Matrix x(1, 201);
  for (int k = 0; k <= 200; ++k) x(0, k) = std::sin(2.0 * std::numbers::pi * k * dt);
  Trajectory r = resample_uniform(timed(x, dt), 0.02);
  double worst = 0.0;
  for (Eigen::Index k = 0; k < r.length(); ++k) {
    worst = std::max(worst, std::abs(r.states(0, k) - std::sin(2.0 * std::numbers::pi * r.times[k])));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Resample, TooFewSamples) {
  EXPECT_THROW(resample_uniform(timed(Matrix::Zero(1, 3), 0.1), 0.1), ContractError);
}

TEST(Velocity, ConstantLinearQuadratic) {
  Trajectory c = augment_velocity(timed(Matrix::Constant(1, 5, 3.0), 0.5));
  EXPECT_EQ(c.dim(), 2);
  EXPECT_LT(c.states.row(1).cwiseAbs().maxCoeff(), 1e-15);

  Matrix lin(1, 5);
  for (int k = 0; k < 5; ++k) lin(0, k) = 2.0 * k * 0.5;
  Trajectory l = augment_velocity(timed(lin, 0.5));
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(l.states(1, k), 2.0, 1e-12);

  Matrix quad(1, 9);
  for (int k = 0; k < 9; ++k) quad(0, k) = std::pow(k * 0.25, 2);
  Trajectory q = augment_velocity(timed(quad, 0.25));
  for (int k = 1; k < 8; ++k) EXPECT_NEAR(q.states(1, k), 2.0 * k * 0.25, 1e-12);
}

TEST(Velocity, RejectsSecondAugmentationAndShortInput) {
  Trajectory once = augment_velocity(timed(Matrix::Zero(1, 4), 0.1));
  EXPECT_THROW(augment_velocity(once), ContractError);
  EXPECT_THROW(augment_velocity(timed(Matrix::Zero(1, 1), 0.1)), ContractError);
}

TEST(Scaler, MapsRangeToUnitInterval) {
  Trajectory t;
  t.states = Matrix(1, 3);
  t.states << 0.0, 10.0, 4.0;
  Scaler s = fit_scaler({t});
  Vector five(1);
  five << 5.0;
  EXPECT_NEAR(s.apply(five)(0), 0.0, 1e-15);
  const Matrix img = s.apply(t.states);
  EXPECT_DOUBLE_EQ(img.minCoeff(), -1.0);
  EXPECT_DOUBLE_EQ(img.maxCoeff(), 1.0);
  Vector x(1);
  x << 123.456;
  EXPECT_NEAR(s.invert(s.apply(x))(0), x(0), 1e-12);
}

TEST(Scaler, RejectsConstantDimension) {
  Trajectory t;
  t.states = Matrix::Ones(2, 3);
  t.states.row(0) << 0, 1, 2;
  EXPECT_THROW(fit_scaler({t}), ContractError);
}

TEST(Synthetic, TanhFixedPointAndContraction) {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::tanh_contraction;
  EXPECT_EQ(synthetic_step(spec, Vector::Zero(2)), Vector::Zero(2));
  spec.n_traj = 2;
  spec.steps = 50;
  const Dataset d = gen_synthetic(spec);
  for (int t = 0; t + 1 < 50; ++t) {
    const double gap = (d[0].states.col(t) - d[1].states.col(t)).norm();
    const double next = (d[0].states.col(t + 1) - d[1].states.col(t + 1)).norm();
    EXPECT_LE(next, 0.75 * gap + 1e-15);
  }
}

TEST(Synthetic, LinearSinkDmdRecoversGenerator) {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::linear_sink;
  spec.dim = 3;
  spec.n_traj = 4;
  spec.steps = 50;
  const Dataset d = gen_synthetic(spec);
  Matrix y1(3, 4 * 49), y2(3, 4 * 49);
  for (int k = 0; k < 4; ++k) {
    y2.middleCols(k * 49, 49) = d[k].states.leftCols(49);
    y1.middleCols(k * 49, 49) = d[k].states.rightCols(49);
  }
  EXPECT_LT((dmd_operator(y1, y2, 0.0) - linear_sink_matrix(3)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Synthetic, SpiralVelocityIsDifference) {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::spiral_sink;
  spec.n_traj = 1;
  spec.steps = 10;
  const Dataset d = gen_synthetic(spec);
  ASSERT_EQ(d[0].dim(), 4);
  for (int t = 1; t < 10; ++t) {
    const Vector v = (d[0].states.col(t).head(2) - d[0].states.col(t - 1).head(2)) / spec.dt;
    EXPECT_LT((v - d[0].states.col(t).tail(2)).norm(), 1e-10);
  }
}

TEST(Synthetic, SameSeedSameData) {
  SyntheticSpec spec;
  spec.noise_std = 0.01;
  EXPECT_EQ(format_csv(gen_synthetic(spec)), format_csv(gen_synthetic(spec)));
  SyntheticSpec other = spec;
  other.seed = 2;
  EXPECT_NE(format_csv(gen_synthetic(spec)), format_csv(gen_synthetic(other)));
}

TEST(Loocv, Folds) {
  SplitPlan p = loocv(3);
  ASSERT_EQ(p.folds.size(), 3u);
  std::vector<int> train_count(3, 0);
  for (std::size_t k = 0; k < 3; ++k) {
    ASSERT_EQ(p.folds[k].test.size(), 1u);
    EXPECT_EQ(p.folds[k].test[0], k);
    for (auto i : p.folds[k].train) ++train_count[i];
  }
  for (int c : train_count) EXPECT_EQ(c, 2);
  EXPECT_THROW(loocv(1), ContractError);
}

}  // namespace
}  // namespace skel
