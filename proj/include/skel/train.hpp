#pragma once

// Losses, optimizers and the full-batch training loop.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "skel/model.hpp"

namespace skel {

struct TrainConfig {
  double alpha = 1e3;
  double epsilon = kDefaultStabilityEpsilon;
  double lr = 1e-3;
  int epochs = 5000;
  int embedding_dim = 20;
  std::vector<int> hidden = {50, 50};
  Method method = Method::skel;
  TimeMode time_mode = TimeMode::discrete;
  LeftInverseKind left_inverse = LeftInverseKind::network;
  double ridge = 1e-9;
  double init_bound = 0.1;
  std::uint64_t seed = 0;
  // Replace the embedding simulation error by the error of decoded states.
  bool sim_in_state_space = false;
};

// Throws ContractError on out-of-range fields.
void validate(const TrainConfig& cfg, int state_dim);
ModelSpec model_spec(const TrainConfig& cfg, int state_dim);

/// J_se = (1/T) sum_{t=0..T} |z_data(t) - A^t z_data(0)|^2 for an embedded
/// trajectory z_data (N x (T+1)).
Tensor loss_sim(const Tensor& a, const Tensor& z_data);

/// Continuous-time J_se with z(t_k) = exp(A (t_k - t_0)) z_data(0).
Tensor loss_sim_ct(ExpmMemo& expm_a, const Tensor& z_data, const std::vector<double>& times);

/// Mean over the T+1 samples of |x - phi^L(z)|^2.
Tensor loss_rec(Tape& tape, KoopmanModel& model, const Tensor& x, const Tensor& z_data);

struct ObjectiveTerms {
  Tensor total;
  Tensor a;
  double j_se = 0.0;
  double j_rec = 0.0;
};

/// Mean over trajectories of J_se + alpha J_rec on scaled data. LKIS builds
/// its operator from the current embedded snapshot pairs on the same tape.
ObjectiveTerms objective(Tape& tape, KoopmanModel& model, const Dataset& scaled, const TrainConfig& cfg);

// Ridge-regularized DMD operator of the embedded snapshot pairs (values only).
Matrix lkis_operator_value(const KoopmanModel& model, const Dataset& scaled, double ridge);

class AdamState {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  /// One bias-corrected update of every parameter from its accumulated
  /// gradient, then zeroes the gradients. A non-finite gradient throws
  /// NumericalError before anything is modified.
  void step(const std::vector<Parameter*>& params, double lr);
  long steps() const { return t_; }

 private:
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long t_ = 0;
};

// Throws NumericalError naming the first parameter with a non-finite gradient.
void check_gradients(const std::vector<Parameter*>& params, long step);

// Plain gradient step used by the projected baseline.
void gradient_step(const std::vector<Parameter*>& params, double lr);

struct LogRow {
  int epoch = 0;
  double j_se = 0.0;
  double j_rec = 0.0;
  double total = 0.0;
  double spectral_radius = 0.0;
  double wall_ms = 0.0;
};

struct TrainingLog {
  std::vector<LogRow> rows;
  bool aborted = false;
  std::string abort_reason;
  int best_epoch = -1;
  double best_loss = 0.0;
};

std::string format_log_csv(const TrainingLog& log);
void save_log_csv(const std::string& path, const TrainingLog& log);

struct FitResult {
  KoopmanModel model;
  TrainingLog log;
};

using EpochCallback = std::function<void(const LogRow&)>;

/// Fits a scaler on `train` (raw states), then runs cfg.epochs full-batch
/// steps and returns the parameters with the lowest training objective.
/// For continuous time every trajectory must carry time stamps.
FitResult fit(const Dataset& train, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Stability measure of an operator: spectral radius (discrete) or spectral
// abscissa (continuous).
double stability_measure(const Matrix& a, TimeMode mode);

}  // namespace skel
