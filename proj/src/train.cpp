#include "skel/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

#include "skel/error.hpp"

namespace skel {

void validate(const TrainConfig& cfg, int state_dim) {
  if (!(cfg.alpha >= 0.0)) throw ContractError("train config: alpha must be >= 0");
  if (!(cfg.lr > 0.0)) throw ContractError("train config: lr must be > 0");
  if (!(cfg.epsilon > 0.0)) throw ContractError("train config: epsilon must be > 0");
  if (cfg.epochs < 0) throw ContractError("train config: epochs must be >= 0");
  if (!(cfg.ridge >= 0.0)) throw ContractError("train config: ridge must be >= 0");
  if (cfg.embedding_dim < state_dim) {
    throw ContractError("train config: embedding_dim (" + std::to_string(cfg.embedding_dim) +
                        ") must be >= state dimension (" + std::to_string(state_dim) + ")");
  }
  for (int h : cfg.hidden) {
    if (h < 1) throw ContractError("train config: hidden widths must be positive");
  }
  if (cfg.time_mode == TimeMode::continuous && cfg.method != Method::skel) {
    throw ContractError("train config: continuous time requires method skel");
  }
}

ModelSpec model_spec(const TrainConfig& cfg, int state_dim) {
  ModelSpec spec;
  spec.state_dim = state_dim;
  spec.embedding_dim = cfg.embedding_dim;
  spec.hidden = cfg.hidden;
  spec.time_mode = cfg.time_mode;
  spec.method = cfg.method;
  spec.left_inverse = cfg.left_inverse;
  spec.epsilon = cfg.epsilon;
  spec.ridge = cfg.ridge;
  spec.init_bound = cfg.init_bound;
  return spec;
}

Tensor loss_sim(const Tensor& a, const Tensor& z_data) {
  const Eigen::Index len = z_data.cols();
  if (len < 2) throw ContractError("loss_sim: trajectory needs at least two samples");
  auto z = rollout_z(a, slice_cols(z_data, 0, 1), static_cast<int>(len - 1));
  return scale(frobenius_sq(sub(z_data, concat_cols(z))), 1.0 / static_cast<double>(len - 1));
}

Tensor loss_sim_ct(ExpmMemo& expm_a, const Tensor& z_data, const std::vector<double>& times) {
  const Eigen::Index len = z_data.cols();
  if (len < 2) throw ContractError("loss_sim_ct: trajectory needs at least two samples");
  if (static_cast<Eigen::Index>(times.size()) != len) {
    throw DimensionError("loss_sim_ct: one time stamp per sample required");
  }
  Tensor z0 = slice_cols(z_data, 0, 1);
  std::vector<Tensor> z;
  z.reserve(times.size());
  for (double t : times) z.push_back(matmul(expm_a.at(t - times.front()), z0));
  return scale(frobenius_sq(sub(z_data, concat_cols(z))), 1.0 / static_cast<double>(len - 1));
}

Tensor loss_rec(Tape& tape, KoopmanModel& model, const Tensor& x, const Tensor& z_data) {
  if (x.cols() < 1) throw ContractError("loss_rec: empty trajectory");
  Tensor back = phi_left(tape, model, z_data);
  return scale(frobenius_sq(sub(x, back)), 1.0 / static_cast<double>(x.cols()));
}

namespace {

void require_timed(const Trajectory& traj) {
  if (!traj.timed()) {
    throw ContractError("continuous-time training needs time stamps (trajectory '" + traj.source_id + "')");
  }
}

// Simulation error of decoded states, (1/T) sum |x_t - phi^L(A^t z_0)|^2.
Tensor loss_sim_state(Tape& tape, KoopmanModel& model, const Tensor& x, const std::vector<Tensor>& z) {
  Tensor decoded = phi_left(tape, model, concat_cols(z));
  return scale(frobenius_sq(sub(x, decoded)), 1.0 / static_cast<double>(x.cols() - 1));
}

}  // namespace

ObjectiveTerms objective(Tape& tape, KoopmanModel& model, const Dataset& scaled, const TrainConfig& cfg) {
  if (scaled.empty()) throw ContractError("objective: empty dataset");
  std::vector<Tensor> xs, zs;
  for (const auto& traj : scaled) {
    if (traj.dim() != model.n) throw DimensionError("objective: trajectory dimension differs from model");
    if (traj.length() < 2) throw ContractError("objective: trajectory needs at least two samples");
    if (model.time_mode == TimeMode::continuous) require_timed(traj);
    xs.push_back(tape.constant(traj.states));
    zs.push_back(phi(tape, model, xs.back()));
  }

  Tensor a;
  if (model.method == Method::lkis) {
    std::vector<Tensor> y1, y2;
    for (const auto& z : zs) {
      y2.push_back(slice_cols(z, 0, z.cols() - 1));
      y1.push_back(slice_cols(z, 1, z.cols() - 1));
    }
    a = build_lkis(concat_cols(y1), concat_cols(y2), std::get<LkisOperator>(model.op).ridge);
  } else {
    a = operator_tensor(tape, model);
  }

  std::optional<ExpmMemo> memo;
  if (model.time_mode == TimeMode::continuous) memo.emplace(a);

  ObjectiveTerms out;
  out.a = a;
  Tensor total;
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    Tensor j_se;
    if (cfg.sim_in_state_space) {
      std::vector<Tensor> z;
      if (memo) {
        Tensor z0 = slice_cols(zs[i], 0, 1);
        for (double t : scaled[i].times) z.push_back(matmul(memo->at(t - scaled[i].times.front()), z0));
      } else {
        z = rollout_z(a, slice_cols(zs[i], 0, 1), static_cast<int>(zs[i].cols() - 1));
      }
      j_se = loss_sim_state(tape, model, xs[i], z);
    } else if (memo) {
      j_se = loss_sim_ct(*memo, zs[i], scaled[i].times);
    } else {
      j_se = loss_sim(a, zs[i]);
    }
    Tensor j_rec = loss_rec(tape, model, xs[i], zs[i]);
    out.j_se += j_se.scalar();
    out.j_rec += j_rec.scalar();
    Tensor term = add(j_se, scale(j_rec, cfg.alpha));
    total = total.valid() ? add(total, term) : term;
  }
  const double inv = 1.0 / static_cast<double>(scaled.size());
  out.total = scale(total, inv);
  out.j_se *= inv;
  out.j_rec *= inv;
  return out;
}

Matrix lkis_operator_value(const KoopmanModel& model, const Dataset& scaled, double ridge) {
  std::vector<Matrix> z;
  Eigen::Index pairs = 0;
  for (const auto& traj : scaled) {
    z.push_back(phi_value(model, traj.states));
    pairs += traj.length() - 1;
  }
  Matrix y1(model.embedding_dim, pairs), y2(model.embedding_dim, pairs);
  Eigen::Index col = 0;
  for (const auto& zi : z) {
    const Eigen::Index m = zi.cols() - 1;
    y2.middleCols(col, m) = zi.leftCols(m);
    y1.middleCols(col, m) = zi.rightCols(m);
    col += m;
  }
  return dmd_operator(y1, y2, ridge);
}

void check_gradients(const std::vector<Parameter*>& params, long step) {
  for (const Parameter* p : params) {
    if (!p->grad.allFinite()) {
      throw NumericalError("non-finite gradient in parameter '" + p->name + "' at step " + std::to_string(step));
    }
  }
}

void AdamState::step(const std::vector<Parameter*>& params, double lr) {
  check_gradients(params, t_ + 1);
  if (m_.empty()) {
    for (const Parameter* p : params) {
      m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (m_.size() != params.size()) throw ContractError("AdamState: parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    m_[i] = beta1 * m_[i] + (1.0 - beta1) * p.grad;
    v_[i] = beta2 * v_[i] + (1.0 - beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
    p.zero_grad();
  }
}

void gradient_step(const std::vector<Parameter*>& params, double lr) {
  for (Parameter* p : params) {
    p->value -= lr * p->grad;
    p->zero_grad();
  }
}

std::string format_log_csv(const TrainingLog& log) {
  std::ostringstream os;
  os << "epoch,J_se,J_rec,total,spectral_radius,wall_ms\n";
  for (const auto& r : log.rows) {
    os << r.epoch << ',' << format_double(r.j_se) << ',' << format_double(r.j_rec) << ','
       << format_double(r.total) << ',' << format_double(r.spectral_radius) << ','
       << format_double(r.wall_ms) << '\n';
  }
  return os.str();
}

void save_log_csv(const std::string& path, const TrainingLog& log) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  out << format_log_csv(log);
}

double stability_measure(const Matrix& a, TimeMode mode) {
  return mode == TimeMode::discrete ? spectral_radius(a) : spectral_abscissa(a);
}

FitResult fit(const Dataset& train, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (train.empty()) throw ContractError("fit: empty training set");
  const int n = static_cast<int>(train.front().dim());
  validate(cfg, n);

  const Scaler scaler = fit_scaler(train);
  const Dataset scaled = scaler.apply(train);

  std::mt19937_64 rng(cfg.seed);
  FitResult result{make_model(model_spec(cfg, n), rng), {}};
  KoopmanModel& model = result.model;
  model.scaler = scaler;
  TrainingLog& log = result.log;

  auto params = model.parameters();
  // SOC: plain projected steps on the operator, Adam on the networks.
  std::vector<Parameter*> adam_params, projected_params;
  for (Parameter* p : params) {
    const bool projected = model.method == Method::soc && p->name.rfind("op.", 0) == 0;
    (projected ? projected_params : adam_params).push_back(p);
  }
  std::vector<Matrix> best(params.size());
  double best_loss = std::numeric_limits<double>::infinity();
  AdamState adam;

  auto keep_if_best = [&](double loss, int epoch) {
    if (loss < best_loss) {
      best_loss = loss;
      log.best_epoch = epoch;
      for (std::size_t i = 0; i < params.size(); ++i) best[i] = params[i]->value;
    }
  };

  // Evaluation e measures the parameters produced by e steps; the last
  // evaluation takes no step.
  for (int epoch = 0; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    try {
      Tape tape;
      ObjectiveTerms terms = objective(tape, model, scaled, cfg);
      const double loss = terms.total.scalar();
      if (!std::isfinite(loss)) {
        throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch));
      }
      keep_if_best(loss, epoch);
      LogRow row;
      row.epoch = epoch;
      row.j_se = terms.j_se;
      row.j_rec = terms.j_rec;
      row.total = loss;
      row.spectral_radius = stability_measure(terms.a.value(), model.time_mode);
      if (epoch < cfg.epochs) {
        tape.backward(terms.total);
        check_gradients(params, epoch + 1);
        adam.step(adam_params, cfg.lr);
        if (!projected_params.empty()) {
          gradient_step(projected_params, cfg.lr);
          project_soc(std::get<SOCParams>(model.op));
        }
      }
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      log.rows.push_back(row);
      if (on_epoch) on_epoch(row);
    } catch (const NumericalError& e) {
      log.aborted = true;
      log.abort_reason = e.what();
      break;
    } catch (const SingularityError& e) {
      log.aborted = true;
      log.abort_reason = std::string("epoch ") + std::to_string(epoch) + ": " + e.what();
      break;
    }
  }

  if (log.best_epoch < 0) {
    throw NumericalError("fit: no finite training loss (" + log.abort_reason + ")");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i]->value = best[i];
    params[i]->zero_grad();
  }
  log.best_loss = best_loss;
  if (auto* lk = std::get_if<LkisOperator>(&model.op)) lk->a = lkis_operator_value(model, scaled, lk->ridge);
  return result;
}

}  // namespace skel
