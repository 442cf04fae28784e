#include "skel/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "skel/error.hpp"

namespace skel {

using nlohmann::json;

std::string to_string(TimeMode m) { return m == TimeMode::discrete ? "discrete" : "continuous"; }

std::string to_string(Method m) {
  switch (m) {
    case Method::skel: return "skel";
    case Method::soc: return "soc";
    case Method::lkis: return "lkis";
  }
  return "unknown";
}

std::string to_string(LeftInverseKind k) {
  return k == LeftInverseKind::network ? "network" : "projection";
}

TimeMode parse_time_mode(const std::string& s) {
  if (s == "discrete") return TimeMode::discrete;
  if (s == "continuous") return TimeMode::continuous;
  throw ContractError("unknown time_mode '" + s + "' (expected discrete|continuous)");
}

Method parse_method(const std::string& s) {
  if (s == "skel") return Method::skel;
  if (s == "soc") return Method::soc;
  if (s == "lkis") return Method::lkis;
  throw ContractError("unknown method '" + s + "' (expected skel|soc|lkis)");
}

LeftInverseKind parse_left_inverse(const std::string& s) {
  if (s == "network") return LeftInverseKind::network;
  if (s == "projection") return LeftInverseKind::projection;
  throw ContractError("unknown left_inverse '" + s + "' (expected network|projection)");
}

Mlp::Mlp(std::vector<int> dims) : dims_(std::move(dims)) {
  if (dims_.size() < 2) throw ContractError("Mlp: need at least input and output widths");
  for (int d : dims_) {
    if (d < 1) throw ContractError("Mlp: layer widths must be positive");
  }
  for (std::size_t k = 0; k + 1 < dims_.size(); ++k) {
    weights_.emplace_back("W" + std::to_string(k), Matrix::Zero(dims_[k + 1], dims_[k]));
    biases_.emplace_back("b" + std::to_string(k), Matrix::Zero(dims_[k + 1], 1));
  }
}

void Mlp::set_prefix(const std::string& prefix) {
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    weights_[k].name = prefix + "W" + std::to_string(k);
    biases_[k].name = prefix + "b" + std::to_string(k);
  }
}

void Mlp::initialize(std::mt19937_64& rng, bool zero_last, double bias_bound) {
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims_[k]));
    weights_[k].value = uniform_matrix(dims_[k + 1], dims_[k], rng, bound);
    biases_[k].value = uniform_matrix(dims_[k + 1], 1, rng, bias_bound);
    if (zero_last && k + 1 == weights_.size()) {
      weights_[k].value.setZero();
      biases_[k].value.setZero();
    }
    weights_[k].zero_grad();
    biases_[k].zero_grad();
  }
}

std::size_t Mlp::parameter_count() const {
  std::size_t count = 0;
  for (std::size_t k = 0; k + 1 < dims_.size(); ++k) {
    count += static_cast<std::size_t>(dims_[k] + 1) * static_cast<std::size_t>(dims_[k + 1]);
  }
  return count;
}

template <typename Bind>
Tensor Mlp::run(Tape& tape, const Tensor& x, Bind bind) const {
  if (x.rows() != in_dim()) {
    throw DimensionError("Mlp: input has " + std::to_string(x.rows()) + " rows, expected " +
                         std::to_string(in_dim()));
  }
  Tensor h = x;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    h = add_colwise(matmul(bind(tape, k, true), h), bind(tape, k, false));
    if (k + 1 < weights_.size()) h = relu(h);
  }
  return h;
}

Tensor Mlp::forward(Tape& tape, const Tensor& x) {
  return run(tape, x, [this](Tape& t, std::size_t k, bool weight) {
    return t.param(weight ? weights_[k] : biases_[k]);
  });
}

Tensor Mlp::evaluate(Tape& tape, const Tensor& x) const {
  return run(tape, x, [this](Tape& t, std::size_t k, bool weight) {
    return t.constant(weight ? weights_[k].value : biases_[k].value);
  });
}

std::vector<Parameter*> KoopmanModel::parameters() {
  std::vector<Parameter*> out;
  for (Mlp* net : {&observables, &left_inverse}) {
    for (std::size_t k = 0; k < net->weights().size(); ++k) {
      out.push_back(&net->weights()[k]);
      out.push_back(&net->biases()[k]);
    }
  }
  std::visit(
      [&out](auto& op) {
        using T = std::decay_t<decltype(op)>;
        if constexpr (std::is_same_v<T, StableDTParams>) {
          out.push_back(&op.l);
          out.push_back(&op.r);
        } else if constexpr (std::is_same_v<T, StableCTParams>) {
          out.push_back(&op.wn);
          out.push_back(&op.wq);
          out.push_back(&op.wr);
        } else if constexpr (std::is_same_v<T, SOCParams>) {
          out.push_back(&op.s);
          out.push_back(&op.o);
          out.push_back(&op.c);
        }
      },
      op);
  return out;
}

std::vector<const Parameter*> KoopmanModel::parameters() const {
  auto mut = const_cast<KoopmanModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

Matrix lift_matrix(int n, int embedding_dim) {
  Matrix c = Matrix::Zero(embedding_dim, n);
  c.topRows(n).setIdentity();
  return c;
}

namespace {

// Operator parameters are stored as "op.L", "op.Wn", ... next to the
// "obs." and "dec." network parameters.
void prefix_operator_names(KoopmanModel& m) {
  const std::size_t nets = 2 * (m.observables.weights().size() + m.left_inverse.weights().size());
  auto params = m.parameters();
  for (std::size_t i = nets; i < params.size(); ++i) {
    if (params[i]->name.rfind("op.", 0) != 0) params[i]->name = "op." + params[i]->name;
  }
}

}  // namespace

KoopmanModel make_model(const ModelSpec& spec, std::mt19937_64& rng) {
  if (spec.state_dim < 1) throw ContractError("make_model: state_dim must be positive");
  if (spec.embedding_dim < spec.state_dim) {
    throw ContractError("make_model: embedding_dim N must be >= state_dim n");
  }
  if (spec.time_mode == TimeMode::continuous && spec.method != Method::skel) {
    throw ContractError("make_model: continuous time is only available for method skel");
  }
  KoopmanModel m;
  m.n = spec.state_dim;
  m.embedding_dim = spec.embedding_dim;
  m.time_mode = spec.time_mode;
  m.method = spec.method;
  m.left_inverse_kind = spec.left_inverse;
  m.scaler = Scaler::identity(spec.state_dim);

  const int net_out = spec.left_inverse == LeftInverseKind::projection
                          ? spec.embedding_dim - spec.state_dim
                          : spec.embedding_dim;
  if (net_out > 0) {
    std::vector<int> dims{spec.state_dim};
    dims.insert(dims.end(), spec.hidden.begin(), spec.hidden.end());
    dims.push_back(net_out);
    m.observables = Mlp(dims);
    m.observables.set_prefix("obs.");
    m.observables.initialize(rng, true, spec.init_bound);
  }
  if (spec.left_inverse == LeftInverseKind::network) {
    std::vector<int> dims{spec.embedding_dim};
    dims.insert(dims.end(), spec.hidden.begin(), spec.hidden.end());
    dims.push_back(spec.state_dim);
    m.left_inverse = Mlp(dims);
    m.left_inverse.set_prefix("dec.");
    m.left_inverse.initialize(rng, false, spec.init_bound);
  }

  const Eigen::Index n = spec.embedding_dim;
  switch (spec.method) {
    case Method::skel:
      if (spec.time_mode == TimeMode::discrete) {
        m.op = random_stable_dt(n, rng, spec.init_bound, spec.epsilon);
      } else {
        m.op = random_stable_ct(n, rng, spec.init_bound, spec.epsilon);
      }
      break;
    case Method::soc: m.op = random_soc(n, rng, spec.init_bound); break;
    case Method::lkis: m.op = LkisOperator{Matrix::Zero(n, n), spec.ridge}; break;
  }
  prefix_operator_names(m);
  return m;
}

namespace {

template <typename Model, typename NetCall>
Tensor phi_impl(Tape& tape, Model& model, const Tensor& x, NetCall net_call) {
  if (x.rows() != model.n) {
    throw DimensionError("phi: state has " + std::to_string(x.rows()) + " rows, expected " +
                         std::to_string(model.n));
  }
  const int big_n = model.embedding_dim;
  Tensor lifted = matmul(tape.constant(lift_matrix(model.n, big_n)), x);
  if (model.observables.empty()) return lifted;
  Tensor net = net_call(x);
  if (model.left_inverse_kind == LeftInverseKind::network) return add(lifted, net);
  Matrix d = Matrix::Zero(big_n, big_n - model.n);
  d.bottomRows(big_n - model.n).setIdentity();
  return add(lifted, matmul(tape.constant(d), net));
}

template <typename Model, typename NetCall>
Tensor phi_left_impl(Tape& tape, Model& model, const Tensor& z, NetCall net_call) {
  if (z.rows() != model.embedding_dim) {
    throw DimensionError("phi_left: embedding has " + std::to_string(z.rows()) +
                         " rows, expected " + std::to_string(model.embedding_dim));
  }
  if (model.left_inverse_kind == LeftInverseKind::projection) {
    return matmul(tape.constant(lift_matrix(model.n, model.embedding_dim).transpose()), z);
  }
  return net_call(z);
}

}  // namespace

Tensor phi(Tape& tape, KoopmanModel& model, const Tensor& x) {
  return phi_impl(tape, model, x, [&](const Tensor& in) { return model.observables.forward(tape, in); });
}

Tensor phi_const(Tape& tape, const KoopmanModel& model, const Tensor& x) {
  return phi_impl(tape, model, x, [&](const Tensor& in) { return model.observables.evaluate(tape, in); });
}

Tensor phi_left(Tape& tape, KoopmanModel& model, const Tensor& z) {
  return phi_left_impl(tape, model, z,
                       [&](const Tensor& in) { return model.left_inverse.forward(tape, in); });
}

Tensor phi_left_const(Tape& tape, const KoopmanModel& model, const Tensor& z) {
  return phi_left_impl(tape, model, z,
                       [&](const Tensor& in) { return model.left_inverse.evaluate(tape, in); });
}

Tensor operator_tensor(Tape& tape, KoopmanModel& model) {
  return std::visit(
      [&tape](auto& op) -> Tensor {
        using T = std::decay_t<decltype(op)>;
        if constexpr (std::is_same_v<T, StableDTParams>) {
          return build_stable_dt(tape, op);
        } else if constexpr (std::is_same_v<T, StableCTParams>) {
          return build_stable_ct(tape, op);
        } else if constexpr (std::is_same_v<T, SOCParams>) {
          return build_soc(tape, op);
        } else {
          return tape.constant(op.a);
        }
      },
      model.op);
}

Matrix operator_value(const KoopmanModel& model) {
  return std::visit(
      [](const auto& op) -> Matrix {
        using T = std::decay_t<decltype(op)>;
        if constexpr (std::is_same_v<T, StableDTParams>) {
          return stable_dt_operator(op.l.value, op.r.value, op.epsilon);
        } else if constexpr (std::is_same_v<T, StableCTParams>) {
          return stable_ct_operator(op.wn.value, op.wq.value, op.wr.value, op.epsilon);
        } else if constexpr (std::is_same_v<T, SOCParams>) {
          return soc_operator(op.s.value, op.o.value, op.c.value);
        } else {
          return op.a;
        }
      },
      model.op);
}

Matrix phi_value(const KoopmanModel& model, const Matrix& x) {
  Tape tape;
  return phi_const(tape, model, tape.constant(x)).value();
}

Matrix phi_left_value(const KoopmanModel& model, const Matrix& z) {
  Tape tape;
  return phi_left_const(tape, model, tape.constant(z)).value();
}

std::vector<Tensor> rollout_z(const Tensor& a, const Tensor& z0, int steps) {
  if (steps < 0) throw ContractError("rollout_z: negative step count");
  if (a.rows() != a.cols() || a.cols() != z0.rows()) {
    throw DimensionError("rollout_z: operator and initial embedding disagree");
  }
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(steps) + 1);
  out.push_back(z0);
  for (int t = 0; t < steps; ++t) out.push_back(matmul(a, out.back()));
  return out;
}

Tensor ExpmMemo::at(double t) {
  if (auto it = cache_.find(t); it != cache_.end()) return it->second;
  Tape& tape = *a_.tape();
  const Eigen::Index n = a_.rows();
  if (a_.cols() != n) throw DimensionError("expm: non-square operator");
  if (powers_.empty()) {
    powers_.push_back(a_);
    for (int k = 2; k <= 6; ++k) powers_.push_back(matmul(powers_.back(), a_));
  }
  const int s = expm_squarings(a_.value() * t);
  const double f = t / std::ldexp(1.0, s);
  Tensor eye = tape.constant(Matrix::Identity(n, n));
  Tensor num = eye, den = eye;
  double fk = 1.0;
  for (int k = 1; k <= 6; ++k) {
    fk *= f;
    Tensor term = scale(powers_[k - 1], kPade6[k] * fk);
    num = add(num, term);
    den = (k % 2) ? sub(den, term) : add(den, term);
  }
  Tensor r = matmul(inverse(den), num);
  for (int i = 0; i < s; ++i) r = matmul(r, r);
  cache_.emplace(t, r);
  return r;
}

Tensor expm(const Tensor& a, double t) {
  ExpmMemo memo(a);
  return memo.at(t);
}

Simulation simulate(const KoopmanModel& model, const Vector& x0, int horizon, double dt) {
  if (horizon < 0) throw ContractError("simulate: negative horizon");
  if (x0.size() != model.n) throw DimensionError("simulate: initial state dimension mismatch");
  const Matrix a = operator_value(model);
  Matrix step = a;
  if (model.time_mode == TimeMode::continuous) step = expm_value(a * dt);
  Simulation sim;
  sim.embedding.resize(model.embedding_dim, horizon + 1);
  sim.embedding.col(0) = phi_value(model, model.scaler.apply(x0));
  for (int t = 1; t <= horizon; ++t) sim.embedding.col(t) = step * sim.embedding.col(t - 1);
  sim.states = model.scaler.invert(phi_left_value(model, sim.embedding));
  return sim;
}

Simulation simulate_at(const KoopmanModel& model, const Vector& x0, const std::vector<double>& times) {
  if (model.time_mode != TimeMode::continuous) {
    throw ContractError("simulate_at: requires a continuous-time model");
  }
  if (times.empty()) throw ContractError("simulate_at: no time stamps");
  if (x0.size() != model.n) throw DimensionError("simulate_at: initial state dimension mismatch");
  const Matrix a = operator_value(model);
  const EigenDecomposition ed = eig(a);
  Simulation sim;
  sim.embedding.resize(model.embedding_dim, static_cast<Eigen::Index>(times.size()));
  const Vector z0 = phi_value(model, model.scaler.apply(x0));
  for (std::size_t k = 0; k < times.size(); ++k) {
    sim.embedding.col(static_cast<Eigen::Index>(k)) =
        matrix_exp_fast(ed, a, times[k] - times.front()).value * z0;
  }
  sim.states = model.scaler.invert(phi_left_value(model, sim.embedding));
  return sim;
}

namespace {

json matrix_to_json(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  }
  return json{{"shape", {m.rows(), m.cols()}}, {"data", data}};
}

Matrix matrix_from_json(const json& j, const std::string& name) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (shape.size() != 2 || static_cast<Eigen::Index>(data.size()) != shape[0] * shape[1]) {
    throw ParseError("model parameter '" + name + "': shape and data length disagree");
  }
  Matrix m(shape[0], shape[1]);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j2 = 0; j2 < m.cols(); ++j2) m(i, j2) = data[i * m.cols() + j2];
  }
  return m;
}

void load_into(Parameter& p, const json& params) {
  if (!params.contains(p.name)) throw ParseError("model file is missing parameter '" + p.name + "'");
  Matrix m = matrix_from_json(params.at(p.name), p.name);
  if (m.rows() != p.value.rows() || m.cols() != p.value.cols()) {
    throw ParseError("model parameter '" + p.name + "' has shape " + std::to_string(m.rows()) + "x" +
                     std::to_string(m.cols()) + ", expected " + std::to_string(p.value.rows()) +
                     "x" + std::to_string(p.value.cols()));
  }
  p.value = std::move(m);
  p.zero_grad();
}

}  // namespace

json model_to_json(const KoopmanModel& model) {
  json meta;
  meta["n"] = model.n;
  meta["N"] = model.embedding_dim;
  meta["time_mode"] = to_string(model.time_mode);
  meta["method"] = to_string(model.method);
  meta["left_inverse"] = to_string(model.left_inverse_kind);
  meta["observables_dims"] = model.observables.dims();
  meta["left_inverse_dims"] = model.left_inverse.dims();
  meta["scaler"] = {{"min", std::vector<double>(model.scaler.min().data(),
                                                 model.scaler.min().data() + model.scaler.dim())},
                    {"max", std::vector<double>(model.scaler.max().data(),
                                                 model.scaler.max().data() + model.scaler.dim())}};
  std::visit(
      [&meta](const auto& op) {
        using T = std::decay_t<decltype(op)>;
        if constexpr (std::is_same_v<T, LkisOperator>) {
          meta["ridge"] = op.ridge;
        } else if constexpr (!std::is_same_v<T, SOCParams>) {
          meta["epsilon"] = op.epsilon;
        }
      },
      model.op);

  json params = json::object();
  for (const Parameter* p : model.parameters()) params[p->name] = matrix_to_json(p->value);
  if (const auto* lk = std::get_if<LkisOperator>(&model.op)) params["op.A"] = matrix_to_json(lk->a);
  return json{{"meta", meta}, {"params", params}};
}

KoopmanModel model_from_json(const json& doc) {
  try {
    const json& meta = doc.at("meta");
    KoopmanModel m;
    m.n = meta.at("n").get<int>();
    m.embedding_dim = meta.at("N").get<int>();
    m.time_mode = parse_time_mode(meta.at("time_mode").get<std::string>());
    m.method = parse_method(meta.at("method").get<std::string>());
    m.left_inverse_kind = parse_left_inverse(meta.value("left_inverse", std::string("network")));
    const auto obs_dims = meta.value("observables_dims", std::vector<int>{});
    const auto dec_dims = meta.value("left_inverse_dims", std::vector<int>{});
    if (!obs_dims.empty()) {
      m.observables = Mlp(obs_dims);
      m.observables.set_prefix("obs.");
    }
    if (!dec_dims.empty()) {
      m.left_inverse = Mlp(dec_dims);
      m.left_inverse.set_prefix("dec.");
    }
    if (m.left_inverse_kind == LeftInverseKind::network && m.left_inverse.empty()) {
      throw ParseError("model file: network left inverse without layer dims");
    }
    const auto& sc = meta.at("scaler");
    const auto lo = sc.at("min").get<std::vector<double>>();
    const auto hi = sc.at("max").get<std::vector<double>>();
    m.scaler = Scaler(Eigen::Map<const Vector>(lo.data(), static_cast<Eigen::Index>(lo.size())),
                      Eigen::Map<const Vector>(hi.data(), static_cast<Eigen::Index>(hi.size())));
    if (m.scaler.dim() != m.n) throw ParseError("model file: scaler dimension differs from n");

    const Eigen::Index big_n = m.embedding_dim;
    const double eps = meta.value("epsilon", kDefaultStabilityEpsilon);
    switch (m.method) {
      case Method::skel:
        if (m.time_mode == TimeMode::discrete) {
          m.op = StableDTParams(Matrix::Zero(2 * big_n, 2 * big_n), Matrix::Zero(big_n, big_n), eps);
        } else {
          m.op = StableCTParams(Matrix::Zero(big_n, big_n), Matrix::Zero(big_n, big_n),
                                Matrix::Zero(big_n, big_n), eps);
        }
        break;
      case Method::soc:
        m.op = SOCParams(Matrix::Zero(big_n, big_n), Matrix::Zero(big_n, big_n), Matrix::Zero(big_n, big_n));
        break;
      case Method::lkis: m.op = LkisOperator{Matrix::Zero(big_n, big_n), meta.value("ridge", 1e-9)}; break;
    }
    prefix_operator_names(m);
    const json& params = doc.at("params");
    for (Parameter* p : m.parameters()) load_into(*p, params);
    if (auto* lk = std::get_if<LkisOperator>(&m.op)) {
      lk->a = matrix_from_json(params.at("op.A"), "op.A");
      if (lk->a.rows() != big_n || lk->a.cols() != big_n) throw ParseError("model file: op.A has wrong shape");
    }
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("model file: ") + e.what());
  }
}

void save_model(const std::string& path, const KoopmanModel& model) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  out << model_to_json(model).dump(2) << "\n";
}

KoopmanModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return model_from_json(doc);
}

}  // namespace skel
