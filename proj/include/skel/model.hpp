#pragma once

// Koopman model: observable map phi, approximate left inverse phi^L, and a
// linear operator on the embedding,
//
//   z(0) = phi(x0),  z(t) = A z(t-1),  x_hat(t) = phi^L(z(t)).
//
// All state-space quantities on the tape are in scaled coordinates; the
// model's Scaler converts raw states at the simulate() boundary.

#include <json.hpp>

#include <map>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "skel/data.hpp"
#include "skel/linalg.hpp"
#include "skel/params.hpp"
#include "skel/tape.hpp"

namespace skel {

enum class TimeMode { discrete, continuous };
enum class Method { skel, soc, lkis };
enum class LeftInverseKind { network, projection };

std::string to_string(TimeMode m);
std::string to_string(Method m);
std::string to_string(LeftInverseKind k);
TimeMode parse_time_mode(const std::string& s);
Method parse_method(const std::string& s);
LeftInverseKind parse_left_inverse(const std::string& s);

/// Fully connected network, ReLU on hidden layers, identity output.
/// Inputs and outputs are column batches (dim x B).
class Mlp {
 public:
  Mlp() = default;
  // Zero-valued parameters with the given layer widths.
  explicit Mlp(std::vector<int> dims);

  /// Weights uniform in +-1/sqrt(fan_in), biases uniform in +-bias_bound.
  /// With `zero_last` the output layer starts at exactly zero.
  void initialize(std::mt19937_64& rng, bool zero_last, double bias_bound);

  // Parameters bound as trainable leaves.
  Tensor forward(Tape& tape, const Tensor& x);
  // Parameters bound as constants.
  Tensor evaluate(Tape& tape, const Tensor& x) const;

  int in_dim() const { return dims_.empty() ? 0 : dims_.front(); }
  int out_dim() const { return dims_.empty() ? 0 : dims_.back(); }
  const std::vector<int>& dims() const { return dims_; }
  std::size_t parameter_count() const;
  bool empty() const { return weights_.empty(); }

  std::vector<Parameter>& weights() { return weights_; }
  std::vector<Parameter>& biases() { return biases_; }
  const std::vector<Parameter>& weights() const { return weights_; }
  const std::vector<Parameter>& biases() const { return biases_; }

  void set_prefix(const std::string& prefix);

 private:
  template <typename Bind>
  Tensor run(Tape& tape, const Tensor& x, Bind bind) const;

  std::vector<int> dims_;
  std::vector<Parameter> weights_;
  std::vector<Parameter> biases_;
};

/// Operator of an LKIS model. The operator is a function of the training
/// snapshots; after training the last snapshot-derived value is frozen here.
struct LkisOperator {
  Matrix a;
  double ridge = 1e-9;
};

using OperatorParams = std::variant<StableDTParams, StableCTParams, SOCParams, LkisOperator>;

struct ModelSpec {
  int state_dim = 2;
  int embedding_dim = 20;
  std::vector<int> hidden = {50, 50};
  TimeMode time_mode = TimeMode::discrete;
  Method method = Method::skel;
  LeftInverseKind left_inverse = LeftInverseKind::network;
  double epsilon = kDefaultStabilityEpsilon;
  double ridge = 1e-9;
  // Uniform bound for operator parameters and network biases.
  double init_bound = 0.1;
};

struct KoopmanModel {
  int n = 0;
  int embedding_dim = 0;
  TimeMode time_mode = TimeMode::discrete;
  Method method = Method::skel;
  LeftInverseKind left_inverse_kind = LeftInverseKind::network;
  Mlp observables;
  Mlp left_inverse;
  OperatorParams op;
  Scaler scaler;

  // Every trainable parameter, in a fixed order.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
};

KoopmanModel make_model(const ModelSpec& spec, std::mt19937_64& rng);

// C = [I_n; 0] of shape N x n.
Matrix lift_matrix(int n, int embedding_dim);

/// phi(x) = C x + net(x) for a batch of scaled states (n x B). With the
/// projection left inverse the network fills only rows n..N-1.
Tensor phi(Tape& tape, KoopmanModel& model, const Tensor& x);
Tensor phi_const(Tape& tape, const KoopmanModel& model, const Tensor& x);

// Left inverse for a batch of embeddings (N x B).
Tensor phi_left(Tape& tape, KoopmanModel& model, const Tensor& z);
Tensor phi_left_const(Tape& tape, const KoopmanModel& model, const Tensor& z);

// Operator as a tape tensor built from trainable parameters. LKIS models
// return their frozen operator as a constant.
Tensor operator_tensor(Tape& tape, KoopmanModel& model);
Matrix operator_value(const KoopmanModel& model);

// Value-only helpers on scaled coordinates.
Matrix phi_value(const KoopmanModel& model, const Matrix& x);
Matrix phi_left_value(const KoopmanModel& model, const Matrix& z);

/// (z0, A z0, ..., A^T z0) by T sequential products.
std::vector<Tensor> rollout_z(const Tensor& a, const Tensor& z0, int steps);

/// exp(A t) by scaling and squaring on the diagonal (6,6) Pade
/// approximant, built from tape primitives so gradients reach A.
Tensor expm(const Tensor& a, double t);

/// exp(A t) per unique t, sharing the powers of A across calls.
class ExpmMemo {
 public:
  explicit ExpmMemo(Tensor a) : a_(a) {}
  Tensor at(double t);

 private:
  Tensor a_;
  // a_^1 .. a_^6, built on first use.
  std::vector<Tensor> powers_;
  std::map<double, Tensor> cache_;
};

struct Simulation {
  // Raw-state predictions, n x (steps + 1).
  Matrix states;
  // Embedding trajectory, N x (steps + 1).
  Matrix embedding;
};

/// Discrete-time simulation from a raw initial state. For continuous-time
/// models each step advances by `dt`.
Simulation simulate(const KoopmanModel& model, const Vector& x0, int horizon, double dt = 1.0);

/// Continuous-time simulation at the given stamps (relative to times[0]).
Simulation simulate_at(const KoopmanModel& model, const Vector& x0, const std::vector<double>& times);

nlohmann::json model_to_json(const KoopmanModel& model);
KoopmanModel model_from_json(const nlohmann::json& doc);
void save_model(const std::string& path, const KoopmanModel& model);
KoopmanModel load_model(const std::string& path);

}  // namespace skel
