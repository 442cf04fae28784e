#pragma once

// Post-hoc certificates for trained models, Koopman eigenfunctions, the
// series construction of an exact embedding for analytic maps, and the
// evaluation metrics used by the comparison study.

#include <complex>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "skel/train.hpp"

namespace skel {

struct CertifyOptions {
  // Smallest admissible singular value of the embedding Jacobian.
  double min_sv_tol = 1e-8;
  // Bound on P - A^T P A - Q in Frobenius norm.
  double lyapunov_tol = 1e-8;
  std::size_t max_samples = 500;
  int pair_count = 100;
  int pair_steps = 100;
  std::uint64_t seed = 0;
};

struct ContractionCertificate {
  TimeMode time_mode = TimeMode::discrete;
  // Spectral radius (discrete) or spectral abscissa (continuous).
  double rho = 0.0;
  Matrix p;
  Matrix q;
  // lambda_min(Q) / lambda_max(P)
  double beta = 0.0;
  double lyapunov_residual = 0.0;
  double min_eig_p = 0.0;
  // Smallest singular value of Phi(x) = d phi / dx over the sampled states.
  double min_sv_phi = 0.0;
  // Smallest eigenvalue of M(x) = Phi^T P Phi over the sampled states.
  double min_metric_eig = 0.0;
  // max |phi(x_{t+1}) - A phi(x_t)| over consecutive samples (scaled units).
  double d1_residual = 0.0;
  // Largest one-step ratio of P-weighted embedding distances over random
  // pairs of initial states, and the bound sqrt(1 - beta) it must respect.
  double max_pair_ratio = 0.0;
  double pair_ratio_bound = 0.0;
  bool pairs_nonincreasing = false;
  std::size_t samples = 0;
  bool pass = false;
  std::vector<std::string> reasons;
};

/// Certificate of a trained model on raw-state data. Discrete-time models
/// get the full Lyapunov and metric checks; continuous-time models only
/// the Hurwitz check. A failing verdict is a value, not an error.
ContractionCertificate certify(const KoopmanModel& model, const Dataset& raw, const CertifyOptions& opts = {});

nlohmann::json to_json(const ContractionCertificate& cert);

/// Jacobian d phi / dx (N x n) at each column of `scaled_states`, by N
/// reverse passes over the whole batch.
std::vector<Matrix> embedding_jacobians(const KoopmanModel& model, const Matrix& scaled_states);

struct Eigenfunction {
  std::complex<double> lambda;
  // Left eigenvector: phi_lambda(x) = w^T phi(x).
  ComplexVector w;
  // max over consecutive samples of |phi_lambda(x_{t+1}) - lambda phi_lambda(x_t)|
  double residual = 0.0;
};

/// Eigenfunctions from the left eigenvectors (rows of V^-1) of the model
/// operator. Throws ConvergenceError when the eigendecomposition is not
/// usable.
std::vector<Eigenfunction> extract_eigenfunctions(const KoopmanModel& model, const Dataset& raw);

// phi_lambda at a raw state.
std::complex<double> evaluate(const Eigenfunction& ef, const KoopmanModel& model, const Vector& x);

using MapFn = std::function<Vector(const Vector&)>;

/// Series embedding of an invertible map f with a Schur-stable fixed point:
///   T(x) = sum_{j=0..J} A^j H(f^{-(j+1)}(x)),  H(x) = A x - f(x),
/// in coordinates centered at x_star, so that x + T(x) intertwines f with
/// A up to the truncation tail. `t_x` forward iterations precede the
/// series: phi(x) = A^{-t_x} [X + T(X)], X = f^{t_x}(x).
struct KklConstruction {
  MapFn f;
  MapFn f_inv;
  Vector x_star;
  // Linearization df/dx at x_star; estimated by central differences when empty.
  Matrix a;
  int truncation_j = 20;
  int t_x = 0;
  // Backward iterates must stay in the box |x - x_star|_inf <= domain_radius.
  double domain_radius = 1.0;
};

// Checks the fixed point and stability, filling `a` when empty.
void prepare(KklConstruction& kkl);

Vector kkl_series(const KklConstruction& kkl, const Vector& x);
Vector construct_kkl(const KklConstruction& kkl, const Vector& x);
// |phi(f(x)) - A phi(x)|
double kkl_residual(const KklConstruction& kkl, const Vector& x);

/// Normalized simulation error sum |sim - truth|^2 / sum |truth|^2.
double nse(const Matrix& sim, const Matrix& truth);

struct EvalReport {
  double nse = 0.0;
  // Mean |x - phi^L(phi(x))|^2 in scaled units.
  double rec_error = 0.0;
  double rho = 0.0;
};

// Simulates every trajectory from its first sample; NSE pools all samples.
EvalReport evaluate_model(const KoopmanModel& model, const Dataset& raw);
nlohmann::json to_json(const EvalReport& report);

// Raw-state prediction of a trajectory from its first sample, one column
// per sample (uses the stamps for continuous-time models).
Matrix predict(const KoopmanModel& model, const Trajectory& traj);

struct CompareConfig {
  TrainConfig train;
  std::vector<Method> methods = {Method::skel, Method::soc, Method::lkis};
  std::vector<std::uint64_t> seeds = {0};
  int workers = 0;  // 0: hardware concurrency
  // Perturbation study: initial conditions drawn uniformly from a box of
  // this width (raw units) centered at each held-out start.
  double perturb_width = 2.0;
  int perturb_samples = 10;
};

struct FoldResult {
  std::size_t fold = 0;
  std::string held_out;
  Method method = Method::skel;
  std::uint64_t seed = 0;
  double nse = 0.0;
  double train_loss = 0.0;
  double rho = 0.0;
  bool outlier = false;
  bool aborted = false;
  // Largest pairwise distance among perturbed rollouts at the first and
  // last sample.
  double spread_initial = 0.0;
  double spread_final = 0.0;
  // Wall time of the training run; not part of any report output.
  double train_seconds = 0.0;
  // Trained model (scaler included); empty when training threw.
  std::shared_ptr<const KoopmanModel> model;
};

struct MethodSummary {
  double median_nse = 0.0;
  int outliers_gt_1 = 0;
  int unstable_folds = 0;
};

struct ComparisonReport {
  std::vector<FoldResult> folds;
  std::vector<std::pair<std::string, MethodSummary>> summary;
  // NSE of predicting the equilibrium (mean final training sample) forever.
  double baseline_median_nse = 0.0;
};

/// Leave-one-out comparison over methods and seeds. Jobs run on a worker
/// pool; results are ordered by (fold, method, seed) regardless of timing.
ComparisonReport compare(const Dataset& raw, const CompareConfig& cfg);

nlohmann::json to_json(const ComparisonReport& report);
std::string format_comparison_csv(const ComparisonReport& report);

double median(std::vector<double> values);

}  // namespace skel
