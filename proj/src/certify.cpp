#include "skel/certify.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "skel/error.hpp"

namespace skel {

using nlohmann::json;

namespace {

// Every sample of every trajectory, scaled, as columns.
Matrix stack_scaled(const KoopmanModel& model, const Dataset& raw) {
  Eigen::Index total = 0;
  for (const auto& t : raw) total += t.length();
  Matrix out(model.n, total);
  Eigen::Index col = 0;
  for (const auto& t : raw) {
    if (t.dim() != model.n) throw DimensionError("certify: trajectory dimension differs from model");
    out.middleCols(col, t.length()) = model.scaler.apply(t.states);
    col += t.length();
  }
  return out;
}

// Uniform thinning to at most `cap` columns.
Matrix thin(const Matrix& x, std::size_t cap) {
  const auto total = static_cast<std::size_t>(x.cols());
  if (total <= cap) return x;
  Matrix out(x.rows(), static_cast<Eigen::Index>(cap));
  for (std::size_t k = 0; k < cap; ++k) out.col(static_cast<Eigen::Index>(k)) = x.col(static_cast<Eigen::Index>(k * total / cap));
  return out;
}

double p_norm(const Matrix& p, const Vector& d) { return std::sqrt(std::max(0.0, d.dot(p * d))); }

}  // namespace

std::vector<Matrix> embedding_jacobians(const KoopmanModel& model, const Matrix& scaled_states) {
  const Eigen::Index b = scaled_states.cols();
  std::vector<Matrix> jac(static_cast<std::size_t>(b), Matrix(model.embedding_dim, model.n));
  if (b == 0) return jac;
  Tape tape;
  Tensor x = tape.variable(scaled_states);
  Tensor z = phi_const(tape, model, x);
  for (Eigen::Index i = 0; i < model.embedding_dim; ++i) {
    tape.zero_grad();
    tape.backward(sum(block(z, i, 0, 1, b)));
    const Matrix& g = x.grad();
    for (Eigen::Index k = 0; k < b; ++k) jac[static_cast<std::size_t>(k)].row(i) = g.col(k).transpose();
  }
  return jac;
}

ContractionCertificate certify(const KoopmanModel& model, const Dataset& raw, const CertifyOptions& opts) {
  if (raw.empty()) throw ContractError("certify: empty dataset");
  ContractionCertificate cert;
  cert.time_mode = model.time_mode;
  const Matrix a = operator_value(model);

  if (model.time_mode == TimeMode::continuous) {
    cert.rho = spectral_abscissa(a);
    cert.pass = cert.rho < 0.0;
    if (!cert.pass) cert.reasons.push_back("spectral abscissa >= 0 (not Hurwitz)");
    return cert;
  }

  cert.rho = spectral_radius(a);
  const Eigen::Index big_n = a.rows();
  cert.q = Matrix::Identity(big_n, big_n);
  const bool stable = cert.rho < 1.0;
  if (!stable) cert.reasons.push_back("spectral radius >= 1");

  if (stable) {
    cert.p = solve_dlyap(a, cert.q);
    cert.lyapunov_residual = (cert.p - a.transpose() * cert.p * a - cert.q).norm();
    cert.min_eig_p = min_symmetric_eigenvalue(cert.p);
    cert.beta = 1.0 / max_symmetric_eigenvalue(cert.p);
    if (!(cert.lyapunov_residual < opts.lyapunov_tol)) cert.reasons.push_back("Lyapunov residual above tolerance");
    if (!(cert.min_eig_p > 0.0)) cert.reasons.push_back("P not positive definite");
  }

  const Matrix all = stack_scaled(model, raw);
  const Matrix sampled = thin(all, opts.max_samples);
  cert.samples = static_cast<std::size_t>(sampled.cols());
  cert.min_sv_phi = std::numeric_limits<double>::infinity();
  cert.min_metric_eig = std::numeric_limits<double>::infinity();
  for (const Matrix& jac : embedding_jacobians(model, sampled)) {
    Eigen::JacobiSVD<Matrix> svd(jac);
    cert.min_sv_phi = std::min(cert.min_sv_phi, svd.singularValues()(svd.singularValues().size() - 1));
    if (stable) {
      cert.min_metric_eig = std::min(cert.min_metric_eig, min_symmetric_eigenvalue(jac.transpose() * cert.p * jac));
    }
  }
  if (!(cert.min_sv_phi > opts.min_sv_tol)) cert.reasons.push_back("embedding Jacobian loses column rank");
  if (stable && !(cert.min_metric_eig > 0.0)) cert.reasons.push_back("metric Phi^T P Phi not positive definite");

  for (const auto& t : raw) {
    if (t.length() < 2) continue;
    const Matrix z = phi_value(model, model.scaler.apply(t.states));
    const Matrix r = z.rightCols(z.cols() - 1) - a * z.leftCols(z.cols() - 1);
    cert.d1_residual = std::max(cert.d1_residual, r.colwise().norm().maxCoeff());
  }

  if (stable) {
    cert.pair_ratio_bound = std::sqrt(std::max(0.0, 1.0 - cert.beta));
    cert.pairs_nonincreasing = true;
    // Initial states uniform in the bounding box of the data.
    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const Vector lo = all.rowwise().minCoeff();
    const Vector span = all.rowwise().maxCoeff() - lo;
    Matrix starts(model.n, 2 * opts.pair_count);
    for (Eigen::Index j = 0; j < starts.cols(); ++j) {
      for (Eigen::Index i = 0; i < model.n; ++i) starts(i, j) = lo(i) + span(i) * unit(rng);
    }
    const Matrix z_starts = phi_value(model, starts);
    for (int k = 0; k < opts.pair_count; ++k) {
      Vector d = z_starts.col(2 * k) - z_starts.col(2 * k + 1);
      double prev = p_norm(cert.p, d);
      for (int s = 0; s < opts.pair_steps && prev > 0.0; ++s) {
        d = a * d;
        const double next = p_norm(cert.p, d);
        const double ratio = next / prev;
        cert.max_pair_ratio = std::max(cert.max_pair_ratio, ratio);
        if (next > prev || ratio > cert.pair_ratio_bound + 1e-9) cert.pairs_nonincreasing = false;
        prev = next;
      }
    }
    if (!cert.pairs_nonincreasing) cert.reasons.push_back("P-weighted distance did not contract");
  }
  cert.pass = cert.reasons.empty();
  return cert;
}

json to_json(const ContractionCertificate& cert) {
  auto matrix = [](const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      std::vector<double> r(static_cast<std::size_t>(m.cols()));
      for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
      rows.push_back(r);
    }
    return rows;
  };
  json j;
  j["time_mode"] = to_string(cert.time_mode);
  j["rho"] = cert.rho;
  j["verdict"] = cert.pass ? "pass" : "fail";
  j["reasons"] = cert.reasons;
  if (cert.time_mode == TimeMode::discrete) {
    j["beta"] = cert.beta;
    j["lyapunov_residual"] = cert.lyapunov_residual;
    j["min_eig_P"] = cert.min_eig_p;
    j["min_sv_phi"] = cert.min_sv_phi;
    j["min_metric_eig"] = cert.min_metric_eig;
    j["d1_residual"] = cert.d1_residual;
    j["max_pair_ratio"] = cert.max_pair_ratio;
    j["pair_ratio_bound"] = cert.pair_ratio_bound;
    j["pairs_nonincreasing"] = cert.pairs_nonincreasing;
    j["samples"] = cert.samples;
    j["P"] = matrix(cert.p);
    j["Q"] = matrix(cert.q);
  }
  return j;
}

std::vector<Eigenfunction> extract_eigenfunctions(const KoopmanModel& model, const Dataset& raw) {
  const Matrix a = operator_value(model);
  const EigenDecomposition ed = eig(a);
  if (!ed.usable()) {
    throw ConvergenceError("extract_eigenfunctions: eigendecomposition not usable (residual " +
                           std::to_string(ed.residual) + ", cond " + std::to_string(ed.condition) + ")");
  }
  std::vector<ComplexMatrix> values;
  for (const auto& t : raw) {
    if (t.dim() != model.n) throw DimensionError("extract_eigenfunctions: trajectory dimension differs from model");
    values.push_back(ed.inverse_vectors * phi_value(model, model.scaler.apply(t.states)).cast<std::complex<double>>());
  }
  std::vector<Eigenfunction> out;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    Eigenfunction ef;
    ef.lambda = ed.lambdas(i);
    ef.w = ed.inverse_vectors.row(i).transpose();
    for (const auto& v : values) {
      for (Eigen::Index t = 0; t + 1 < v.cols(); ++t) {
        ef.residual = std::max(ef.residual, std::abs(v(i, t + 1) - ef.lambda * v(i, t)));
      }
    }
    out.push_back(std::move(ef));
  }
  return out;
}

std::complex<double> evaluate(const Eigenfunction& ef, const KoopmanModel& model, const Vector& x) {
  const ComplexVector z = phi_value(model, model.scaler.apply(x)).col(0).cast<std::complex<double>>();
  return ef.w.transpose() * z;
}

void prepare(KklConstruction& kkl) {
  if (!kkl.f || !kkl.f_inv) throw ContractError("kkl: f and f_inv must both be provided");
  if (kkl.x_star.size() == 0) throw ContractError("kkl: fixed point missing");
  if (kkl.truncation_j < 0 || kkl.t_x < 0) throw ContractError("kkl: truncation_j and t_x must be >= 0");
  if (!(kkl.domain_radius > 0.0)) throw ContractError("kkl: domain radius must be positive");
  const Vector& xs = kkl.x_star;
  if (!((kkl.f(xs) - xs).norm() < 1e-10)) throw ContractError("kkl: x_star is not a fixed point of f");
  const Eigen::Index n = xs.size();
  if (kkl.a.size() == 0) {
    const double h = 1e-6 * std::max(1.0, xs.cwiseAbs().maxCoeff());
    kkl.a.resize(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      Vector e = Vector::Zero(n);
      e(j) = h;
      kkl.a.col(j) = (kkl.f(xs + e) - kkl.f(xs - e)) / (2.0 * h);
    }
  }
  if (kkl.a.rows() != n || kkl.a.cols() != n) throw DimensionError("kkl: linearization has wrong shape");
  if (!(spectral_radius(kkl.a) < 1.0)) throw ContractError("kkl: linearization is not Schur stable");
}

namespace {

void check_domain(const KklConstruction& kkl, const Vector& x, int step) {
  const double dist = (x - kkl.x_star).cwiseAbs().maxCoeff();
  if (!(dist <= kkl.domain_radius * (1.0 + 1e-12))) {
    std::ostringstream os;
    os << "kkl: iterate " << step << " left the compact set (distance " << dist << " > " << kkl.domain_radius << ")";
    throw DomainError(os.str());
  }
}

}  // namespace

Vector kkl_series(const KklConstruction& kkl, const Vector& x) {
  const Vector& xs = kkl.x_star;
  check_domain(kkl, x, 0);
  Vector total = Vector::Zero(xs.size());
  Matrix a_pow = Matrix::Identity(xs.size(), xs.size());
  Vector back = x;
  for (int j = 0; j <= kkl.truncation_j; ++j) {
    back = kkl.f_inv(back);
    check_domain(kkl, back, -(j + 1));
    const Vector h = kkl.a * (back - xs) - (kkl.f(back) - xs);
    total += a_pow * h;
    a_pow = a_pow * kkl.a;
  }
  return total;
}

Vector construct_kkl(const KklConstruction& kkl, const Vector& x) {
  check_domain(kkl, x, 0);
  Vector fwd = x;
  for (int k = 0; k < kkl.t_x; ++k) fwd = kkl.f(fwd);
  Vector out = (fwd - kkl.x_star) + kkl_series(kkl, fwd);
  if (kkl.t_x > 0) {
    Eigen::PartialPivLU<Matrix> lu(kkl.a);
    for (int k = 0; k < kkl.t_x; ++k) out = lu.solve(out);
  }
  return out;
}

double kkl_residual(const KklConstruction& kkl, const Vector& x) {
  return (construct_kkl(kkl, kkl.f(x)) - kkl.a * construct_kkl(kkl, x)).norm();
}

double nse(const Matrix& sim, const Matrix& truth) {
  if (sim.rows() != truth.rows() || sim.cols() != truth.cols()) throw DimensionError("nse: shapes differ");
  if (truth.cols() < 1) throw ContractError("nse: empty trajectory");
  const double den = truth.squaredNorm();
  if (!(den > 0.0)) throw ContractError("nse: truth is identically zero");
  return (sim - truth).squaredNorm() / den;
}

Matrix predict(const KoopmanModel& model, const Trajectory& traj) {
  if (traj.length() < 1) throw ContractError("predict: empty trajectory");
  if (model.time_mode == TimeMode::continuous) {
    if (!traj.timed()) throw ContractError("predict: continuous-time model needs time stamps");
    return simulate_at(model, traj.states.col(0), traj.times).states;
  }
  return simulate(model, traj.states.col(0), static_cast<int>(traj.length() - 1)).states;
}

EvalReport evaluate_model(const KoopmanModel& model, const Dataset& raw) {
  if (raw.empty()) throw ContractError("evaluate_model: empty dataset");
  double err = 0.0, den = 0.0, rec = 0.0;
  Eigen::Index samples = 0;
  for (const auto& t : raw) {
    if (t.dim() != model.n) throw DimensionError("evaluate_model: trajectory dimension differs from model");
    err += (predict(model, t) - t.states).squaredNorm();
    den += t.states.squaredNorm();
    const Matrix xs = model.scaler.apply(t.states);
    rec += (phi_left_value(model, phi_value(model, xs)) - xs).squaredNorm();
    samples += t.length();
  }
  if (!(den > 0.0)) throw ContractError("evaluate_model: truth is identically zero");
  EvalReport r;
  r.nse = err / den;
  r.rec_error = rec / static_cast<double>(samples);
  r.rho = stability_measure(operator_value(model), model.time_mode);
  return r;
}

json to_json(const EvalReport& report) {
  return json{{"nse", report.nse}, {"rec_error", report.rec_error}, {"rho", report.rho}};
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

namespace {

double max_pairwise(const std::vector<Vector>& pts) {
  double out = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) out = std::max(out, (pts[i] - pts[j]).norm());
  }
  return out;
}

struct Job {
  std::size_t fold;
  std::size_t method_index;
  std::uint64_t seed;
};

FoldResult run_job(const Dataset& raw, const Fold& fold, const Job& job, const CompareConfig& cfg) {
  FoldResult r;
  r.fold = job.fold;
  r.method = cfg.methods[job.method_index];
  r.seed = job.seed;
  const Trajectory& held = raw[fold.test.front()];
  r.held_out = held.source_id;

  Dataset train;
  for (std::size_t i : fold.train) train.push_back(raw[i]);
  TrainConfig tc = cfg.train;
  tc.method = r.method;
  tc.seed = job.seed;
  try {
    const auto start = std::chrono::steady_clock::now();
    FitResult fitted = fit(train, tc);
    r.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const KoopmanModel& model = fitted.model;
    r.aborted = fitted.log.aborted;
    r.train_loss = fitted.log.best_loss;
    r.rho = stability_measure(operator_value(model), model.time_mode);
    r.nse = nse(predict(model, held), held.states);

    // Perturbed starts in a box around the held-out initial state.
    std::seed_seq seq{job.seed, static_cast<std::uint64_t>(job.fold), static_cast<std::uint64_t>(job.method_index)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> offset(-0.5 * cfg.perturb_width, 0.5 * cfg.perturb_width);
    std::vector<Vector> first, last;
    for (int k = 0; k < cfg.perturb_samples; ++k) {
      Trajectory start = held;
      for (Eigen::Index i = 0; i < held.dim(); ++i) start.states(i, 0) += offset(rng);
      const Matrix sim = predict(model, start);
      first.push_back(sim.col(0));
      last.push_back(sim.col(sim.cols() - 1));
    }
    r.spread_initial = max_pairwise(first);
    r.spread_final = max_pairwise(last);
    r.model = std::make_shared<const KoopmanModel>(model);
  } catch (const Error&) {
    r.aborted = true;
    r.nse = std::numeric_limits<double>::infinity();
    r.train_loss = std::numeric_limits<double>::quiet_NaN();
    r.rho = std::numeric_limits<double>::quiet_NaN();
  }
  r.outlier = !(r.nse <= 1.0);
  return r;
}

}  // namespace

ComparisonReport compare(const Dataset& raw, const CompareConfig& cfg) {
  if (cfg.methods.empty() || cfg.seeds.empty()) throw ContractError("compare: need at least one method and seed");
  const SplitPlan plan = loocv(raw.size());
  std::vector<Job> jobs;
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
      for (std::uint64_t s : cfg.seeds) jobs.push_back({f, m, s});
    }
  }

  ComparisonReport report;
  report.folds.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      try {
        report.folds[k] = run_job(raw, plan.folds[jobs[k].fold], jobs[k], cfg);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  unsigned workers = cfg.workers > 0 ? static_cast<unsigned>(cfg.workers) : std::thread::hardware_concurrency();
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(jobs.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
    MethodSummary s;
    std::vector<double> values;
    for (const auto& r : report.folds) {
      if (r.method != cfg.methods[m]) continue;
      values.push_back(r.nse);
      if (r.outlier) ++s.outliers_gt_1;
      const double limit = cfg.train.time_mode == TimeMode::discrete ? 1.0 : 0.0;
      if (!(r.rho < limit)) ++s.unstable_folds;
    }
    s.median_nse = median(values);
    report.summary.emplace_back(to_string(cfg.methods[m]), s);
  }

  std::vector<double> baseline;
  for (const auto& fold : plan.folds) {
    Vector eq = Vector::Zero(raw.front().dim());
    for (std::size_t i : fold.train) eq += raw[i].states.col(raw[i].length() - 1);
    eq /= static_cast<double>(fold.train.size());
    const Trajectory& held = raw[fold.test.front()];
    baseline.push_back(nse(eq.replicate(1, held.length()), held.states));
  }
  report.baseline_median_nse = median(baseline);
  return report;
}

json to_json(const ComparisonReport& report) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json folds = json::array();
  for (const auto& r : report.folds) {
    folds.push_back({{"fold", r.fold},
                     {"held_out", r.held_out},
                     {"method", to_string(r.method)},
                     {"seed", r.seed},
                     {"nse", num(r.nse)},
                     {"train_loss", num(r.train_loss)},
                     {"rho", num(r.rho)},
                     {"outlier", r.outlier},
                     {"aborted", r.aborted},
                     {"spread_initial", num(r.spread_initial)},
                     {"spread_final", num(r.spread_final)}});
  }
  json summary = json::object();
  for (const auto& [name, s] : report.summary) {
    summary[name] = {{"median_nse", num(s.median_nse)},
                     {"outliers_gt_1", s.outliers_gt_1},
                     {"unstable_folds", s.unstable_folds}};
  }
  return json{{"folds", folds}, {"summary", summary}, {"baseline", {{"equilibrium_median_nse", num(report.baseline_median_nse)}}}};
}

std::string format_comparison_csv(const ComparisonReport& report) {
  std::ostringstream os;
  os << "fold,held_out,method,seed,nse,train_loss,rho,outlier,aborted,spread_initial,spread_final\n";
  for (const auto& r : report.folds) {
    os << r.fold << ',' << r.held_out << ',' << to_string(r.method) << ',' << r.seed << ',' << format_double(r.nse)
       << ',' << format_double(r.train_loss) << ',' << format_double(r.rho) << ',' << (r.outlier ? 1 : 0) << ','
       << (r.aborted ? 1 : 0) << ',' << format_double(r.spread_initial) << ',' << format_double(r.spread_final)
       << '\n';
  }
  return os.str();
}

}  // namespace skel
