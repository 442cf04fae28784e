#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "skel/tape.hpp"

namespace skel {

/// Ordered state samples of one run. States are stored column-wise
/// (n x T); `times` is empty or holds one strictly increasing stamp per
/// column.
struct Trajectory {
  Matrix states;
  std::vector<double> times;
  std::string source_id;
  // Set by augment_velocity() so a second augmentation can be rejected.
  bool has_velocity = false;

  Eigen::Index dim() const { return states.rows(); }
  Eigen::Index length() const { return states.cols(); }
  bool timed() const { return !times.empty(); }
};

using Dataset = std::vector<Trajectory>;

// Throws ContractError when dimensions or time stamps are inconsistent.
void validate(const Trajectory& traj);

/// Reads `traj_id,t,x0,...,x{n-1}` rows. Trajectories are grouped by id
/// (numeric ids sort numerically, otherwise lexicographically) and each is
/// ordered by t, so row order in the file does not matter.
Dataset load_csv(const std::string& path);
Dataset parse_csv(const std::string& text, const std::string& origin = "<memory>");

// Writes the load_csv schema with 17 significant digits. Untimed
// trajectories get t = sample index.
void save_csv(const std::string& path, const Dataset& data);
std::string format_csv(const Dataset& data);

// Round-trippable decimal form of a double.
std::string format_double(double v);

/// Natural cubic spline per dimension through (t, x), evaluated at
/// t0, t0 + dt, ... up to the last stamp.
Trajectory resample_uniform(const Trajectory& traj, double dt);

/// Appends finite-difference velocities (central inside, one-sided at the
/// ends), doubling the state dimension.
Trajectory augment_velocity(const Trajectory& traj);

/// Affine per-dimension map of the training range [min, max] onto [-1, 1].
class Scaler {
 public:
  Scaler() = default;
  Scaler(Vector min, Vector max);

  static Scaler identity(Eigen::Index n);

  Vector apply(const Vector& x) const;
  Vector invert(const Vector& x) const;
  Matrix apply(const Matrix& states) const;
  Matrix invert(const Matrix& states) const;
  Trajectory apply(const Trajectory& traj) const;
  Dataset apply(const Dataset& data) const;

  const Vector& min() const { return min_; }
  const Vector& max() const { return max_; }
  Eigen::Index dim() const { return min_.size(); }

 private:
  Vector min_;
  Vector max_;
};

Scaler fit_scaler(const Dataset& train);

enum class SyntheticKind { linear_sink, spiral_sink, tanh_contraction };

SyntheticKind parse_synthetic_kind(const std::string& name);
std::string to_string(SyntheticKind kind);

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::tanh_contraction;
  int n_traj = 5;
  // Samples per trajectory.
  int steps = 200;
  double dt = 0.01;
  double noise_std = 0.0;
  std::uint64_t seed = 1;
  // State dimension for linear_sink and tanh_contraction; spiral_sink is
  // always 4 (position and velocity in the plane).
  int dim = 2;
};

/// Noise-free one-step map of a synthetic system (applied to a state).
Vector synthetic_step(const SyntheticSpec& spec, const Vector& x);
// The linear_sink generator matrix (dim x dim), spectral radius 0.95.
Matrix linear_sink_matrix(int dim);
// The spiral_sink 4-D transition matrix.
Matrix spiral_sink_matrix(double dt);

/// Generates trajectories; observation noise is added after simulation so
/// it never feeds back into the dynamics. Initial states are uniform in
/// [-1, 1]^n (linear_sink, positions of spiral_sink) or within 0.3 of the
/// point (1.5, -1.5, 1.5, ...) for tanh_contraction.
Dataset gen_synthetic(const SyntheticSpec& spec);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

struct SplitPlan {
  std::vector<Fold> folds;
};

// Leave-one-out: fold k holds out trajectory k.
SplitPlan loocv(std::size_t n_trajectories);

}  // namespace skel
