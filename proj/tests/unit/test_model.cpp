#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "common/fd.hpp"
#include "skel/error.hpp"
#include "skel/model.hpp"

namespace skel {

void PrintTo(Method m, std::ostream* os) { *os << to_string(m); }

namespace {

ModelSpec small_spec(Method method = Method::skel, TimeMode mode = TimeMode::discrete,
                     LeftInverseKind inv = LeftInverseKind::network) {
  ModelSpec s;
  s.state_dim = 2;
  s.embedding_dim = 5;
  s.hidden = {8, 6};
  s.method = method;
  s.time_mode = mode;
  s.left_inverse = inv;
  return s;
}

// Sets every parameter to a random value so the zero last layer is not zero.
void perturb(KoopmanModel& m, std::mt19937_64& rng) {
  for (Parameter* p : m.parameters()) {
    p->value = uniform_matrix(p->value.rows(), p->value.cols(), rng, 0.3);
  }
}

TEST(Mlp, ParameterCount) {
  Mlp net({2, 50, 50, 18});
  EXPECT_EQ(net.parameter_count(), std::size_t(2 * 50 + 50 + 50 * 50 + 50 + 50 * 18 + 18));
}

TEST(Mlp, ReluHiddenIdentityOutput) {
  Mlp net({1, 2, 1});
  net.weights()[0].value << 1.0, -1.0;
  net.biases()[0].value << 0.0, 0.0;
  net.weights()[1].value << 2.0, 3.0;
  net.biases()[1].value << 0.5;
  Tape tape;
  Matrix x(1, 2);
  x << 1.5, -2.0;
  const Matrix y = net.evaluate(tape, tape.constant(x)).value();
  EXPECT_DOUBLE_EQ(y(0, 0), 2.0 * 1.5 + 0.5);
  EXPECT_DOUBLE_EQ(y(0, 1), 3.0 * 2.0 + 0.5);
}

TEST(Model, FreshEmbeddingIsLiftedState) {
  std::mt19937_64 rng(1);
  KoopmanModel m = make_model(small_spec(), rng);
  const Matrix x = uniform_matrix(2, 7, rng, 1.0);
  EXPECT_EQ(phi_value(m, x), lift_matrix(2, 5) * x);
  EXPECT_EQ(m.parameters().front()->name, "obs.W0");
}

TEST(Model, ProjectionLeftInverseIsExact) {
  std::mt19937_64 rng(2);
  KoopmanModel m = make_model(small_spec(Method::skel, TimeMode::discrete, LeftInverseKind::projection), rng);
  perturb(m, rng);
  const Matrix x = uniform_matrix(2, 9, rng, 1.0);
  const Matrix z = phi_value(m, x);
  EXPECT_EQ(z.topRows(2), x);
  EXPECT_EQ(phi_left_value(m, z), x);
}

TEST(Model, RejectsBadSpecs) {
  std::mt19937_64 rng(3);
  ModelSpec s = small_spec();
  s.embedding_dim = 1;
  EXPECT_THROW(make_model(s, rng), ContractError);
  EXPECT_THROW(make_model(small_spec(Method::soc, TimeMode::continuous), rng), ContractError);
}

TEST(Model, TapeAndValuePathsAgree) {
  std::mt19937_64 rng(4);
  KoopmanModel m = make_model(small_spec(), rng);
  perturb(m, rng);
  const Matrix x = uniform_matrix(2, 4, rng, 1.0);
  Tape tape;
  const Tensor z = phi(tape, m, tape.constant(x));
  EXPECT_LT((z.value() - phi_value(m, x)).norm(), 1e-14);
  EXPECT_LT((phi_left(tape, m, z).value() - phi_left_value(m, z.value())).norm(), 1e-14);
  EXPECT_LT((operator_tensor(tape, m).value() - operator_value(m)).norm(), 1e-14);
}

TEST(Rollout, PowersOfOperator) {
  std::mt19937_64 rng(5);
  const Matrix a = uniform_matrix(3, 3, rng, 0.5);
  const Matrix z0 = uniform_matrix(3, 1, rng, 1.0);
  Tape tape;
  const auto zs = rollout_z(tape.constant(a), tape.constant(z0), 4);
  ASSERT_EQ(zs.size(), 5u);
  Matrix expect = z0;
  for (int t = 0; t <= 4; ++t) {
    EXPECT_LT((zs[t].value() - expect).norm(), 1e-14);
    expect = a * expect;
  }
}

TEST(Expm, TapeValueMatchesValuePath) {
  std::mt19937_64 rng(6);
  const Matrix a = uniform_matrix(4, 4, rng, 3.0);
  Tape tape;
  EXPECT_LT((expm(tape.constant(a), 0.7).value() - expm_value(a * 0.7)).norm(), 1e-12);
}

TEST(Expm, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  for (double bound : {0.2, 3.0}) {
    const Matrix a = uniform_matrix(3, 3, rng, bound);
    auto fn = [](Tape& t, const std::vector<Tensor>& x) { return testing::readout(t, expm(x[0], 0.9)); };
    EXPECT_LT(testing::gradient_error(fn, {a}), 1e-6);
  }
}

TEST(Expm, MemoReusesNodes) {
  Tape tape;
  ExpmMemo memo(tape.constant(Matrix::Identity(2, 2) * -0.5));
  const Tensor first = memo.at(0.3);
  const std::size_t size = tape.size();
  EXPECT_EQ(memo.at(0.3).id(), first.id());
  EXPECT_EQ(tape.size(), size);
  EXPECT_NEAR(memo.at(2.0).value()(0, 0), std::exp(-1.0), 1e-13);
}

TEST(Simulate, EmbeddingFollowsOperator) {
  std::mt19937_64 rng(8);
  KoopmanModel m = make_model(small_spec(), rng);
  perturb(m, rng);
  Vector x0(2);
  x0 << 0.3, -0.4;
  const Simulation sim = simulate(m, x0, 6);
  const Matrix a = operator_value(m);
  ASSERT_EQ(sim.states.cols(), 7);
  for (int t = 1; t <= 6; ++t) {
    EXPECT_LT((sim.embedding.col(t) - a * sim.embedding.col(t - 1)).norm(), 1e-14);
  }
  EXPECT_LT((sim.states - phi_left_value(m, sim.embedding)).norm(), 1e-14);
  EXPECT_THROW(simulate(m, Vector::Zero(3), 2), DimensionError);
}

TEST(Simulate, StableModelDecaysToDecodedOrigin) {
  std::mt19937_64 rng(9);
  KoopmanModel m = make_model(small_spec(Method::skel, TimeMode::discrete, LeftInverseKind::projection), rng);
  Vector x0(2);
  x0 << 0.9, -0.8;
  const Simulation sim = simulate(m, x0, 2000);
  EXPECT_LT((sim.states.col(0) - x0).norm(), 1e-15);
  EXPECT_LT(sim.embedding.col(2000).norm(), 1e-3 * sim.embedding.col(0).norm());
}

TEST(Simulate, ContinuousStampsMatchUniformSteps) {
  std::mt19937_64 rng(10);
  KoopmanModel m = make_model(small_spec(Method::skel, TimeMode::continuous), rng);
  perturb(m, rng);
  Vector x0(2);
  x0 << 0.1, 0.2;
  std::vector<double> times;
  for (int k = 0; k <= 10; ++k) times.push_back(1.0 + 0.05 * k);
  const Simulation a = simulate(m, x0, 10, 0.05);
  const Simulation b = simulate_at(m, x0, times);
  EXPECT_LT((a.states - b.states).cwiseAbs().maxCoeff(), 1e-10);
  std::mt19937_64 rng2(10);
  KoopmanModel dt = make_model(small_spec(), rng2);
  EXPECT_THROW(simulate_at(dt, x0, times), ContractError);
}

class JsonRoundTrip : public ::testing::TestWithParam<Method> {};

TEST_P(JsonRoundTrip, SimulationIsIdentical) {
  std::mt19937_64 rng(11);
  KoopmanModel m = make_model(small_spec(GetParam()), rng);
  perturb(m, rng);
  Vector lo(2), hi(2);
  lo << -2.0, 0.5;
  hi << 3.0, 4.0;
  m.scaler = Scaler(lo, hi);
  if (auto* op = std::get_if<LkisOperator>(&m.op)) op->a = uniform_matrix(5, 5, rng, 0.2);
  const auto path = std::filesystem::temp_directory_path() / "skel_model_roundtrip.json";
  save_model(path.string(), m);
  const KoopmanModel back = load_model(path.string());
  std::filesystem::remove(path);
  Vector x0(2);
  x0 << 1.0, 2.0;
  EXPECT_EQ(simulate(m, x0, 20).states, simulate(back, x0, 20).states);
  EXPECT_EQ(back.parameters().size(), m.parameters().size());
}

INSTANTIATE_TEST_SUITE_P(Methods, JsonRoundTrip, ::testing::Values(Method::skel, Method::soc, Method::lkis),
                         [](const ::testing::TestParamInfo<Method>& info) { return to_string(info.param); });

TEST(Json, ShapeMismatchIsRejected) {
  std::mt19937_64 rng(12);
  KoopmanModel m = make_model(small_spec(), rng);
  nlohmann::json doc = model_to_json(m);
  doc["params"]["op.R"]["shape"] = {4, 4};
  EXPECT_THROW(model_from_json(doc), std::exception);
  EXPECT_THROW(load_model("/nonexistent/model.json"), std::exception);
}

TEST(Enums, RoundTrip) {
  for (Method m : {Method::skel, Method::soc, Method::lkis}) EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_EQ(parse_time_mode("continuous"), TimeMode::continuous);
  EXPECT_EQ(parse_left_inverse("projection"), LeftInverseKind::projection);
  EXPECT_THROW(parse_method("bogus"), std::exception);
}

}  // namespace
}  // namespace skel
