#include "skel/data.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "skel/error.hpp"

namespace skel {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  errno = 0;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && errno != ERANGE;
}

bool is_integer(const std::string& s, long long& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  errno = 0;
  out = std::strtoll(s.c_str(), &end, 10);
  return end == s.c_str() + s.size() && errno != ERANGE;
}

struct Row {
  double t;
  Vector x;
  std::size_t line;
};

bool uniform_stamps(const std::vector<double>& times, double& dt) {
  if (times.size() < 2) return false;
  dt = times[1] - times[0];
  for (std::size_t i = 2; i < times.size(); ++i) {
    if (std::abs((times[i] - times[i - 1]) - dt) > 1e-9 * std::max(1.0, std::abs(dt))) return false;
  }
  return dt > 0.0;
}

}  // namespace

void validate(const Trajectory& traj) {
  if (traj.timed()) {
    if (static_cast<Eigen::Index>(traj.times.size()) != traj.length()) {
      throw ContractError("trajectory '" + traj.source_id + "': " +
                          std::to_string(traj.times.size()) + " time stamps for " +
                          std::to_string(traj.length()) + " states");
    }
    for (std::size_t i = 1; i < traj.times.size(); ++i) {
      if (!(traj.times[i] > traj.times[i - 1])) {
        throw ContractError("trajectory '" + traj.source_id + "': times not strictly increasing");
      }
    }
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Dataset parse_csv(const std::string& text, const std::string& origin) {
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw ParseError(origin + ":" + std::to_string(line_no) + ": " + msg);
  };

  if (!std::getline(is, line)) {
    line_no = 1;
    fail("empty file, expected header traj_id,t,x0,...");
  }
  ++line_no;
  const auto header = split_fields(line);
  if (header.size() < 3 || trim(header[0]) != "traj_id" || trim(header[1]) != "t") {
    fail("header must be traj_id,t,x0,...,x{n-1}");
  }
  const std::size_t n = header.size() - 2;
  for (std::size_t k = 0; k < n; ++k) {
    if (trim(header[k + 2]) != "x" + std::to_string(k)) {
      fail("header column " + std::to_string(k + 2) + " must be x" + std::to_string(k));
    }
  }

  std::map<std::string, std::vector<Row>> groups;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != n + 2) {
      fail("expected " + std::to_string(n + 2) + " fields, got " + std::to_string(fields.size()));
    }
    Row row{0.0, Vector(n), line_no};
    if (!parse_double(trim(fields[1]), row.t)) fail("non-numeric time '" + fields[1] + "'");
    for (std::size_t k = 0; k < n; ++k) {
      double v;
      if (!parse_double(trim(fields[k + 2]), v)) fail("non-numeric value '" + fields[k + 2] + "'");
      row.x(static_cast<Eigen::Index>(k)) = v;
    }
    groups[trim(fields[0])].push_back(std::move(row));
  }

  std::vector<std::string> ids;
  for (const auto& [id, rows] : groups) ids.push_back(id);
  const bool numeric = std::all_of(ids.begin(), ids.end(), [](const std::string& s) {
    long long v;
    return is_integer(s, v);
  });
  if (numeric) {
    std::sort(ids.begin(), ids.end(), [](const std::string& a, const std::string& b) {
      return std::strtoll(a.c_str(), nullptr, 10) < std::strtoll(b.c_str(), nullptr, 10);
    });
  }

  Dataset out;
  for (const auto& id : ids) {
    auto rows = groups[id];
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.t < b.t; });
    Trajectory traj;
    traj.source_id = id;
    traj.states.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (i > 0 && !(rows[i].t > rows[i - 1].t)) {
        line_no = std::max(rows[i].line, rows[i - 1].line);
        fail("time stamps of trajectory '" + id + "' are not strictly increasing");
      }
      traj.states.col(static_cast<Eigen::Index>(i)) = rows[i].x;
      traj.times.push_back(rows[i].t);
    }
    out.push_back(std::move(traj));
  }
  return out;
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), path);
}

std::string format_csv(const Dataset& data) {
  if (data.empty()) throw ContractError("format_csv: empty dataset");
  const Eigen::Index n = data.front().dim();
  std::string out = "traj_id,t";
  for (Eigen::Index k = 0; k < n; ++k) out += ",x" + std::to_string(k);
  out += "\n";
  for (const auto& traj : data) {
    if (traj.dim() != n) throw ContractError("format_csv: mixed state dimensions");
    validate(traj);
    for (Eigen::Index i = 0; i < traj.length(); ++i) {
      out += traj.source_id;
      out += ",";
      out += format_double(traj.timed() ? traj.times[i] : static_cast<double>(i));
      for (Eigen::Index k = 0; k < n; ++k) {
        out += ",";
        out += format_double(traj.states(k, i));
      }
      out += "\n";
    }
  }
  return out;
}

void save_csv(const std::string& path, const Dataset& data) {
  const std::string text = format_csv(data);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path);
  out << text;
  if (!out) throw ParseError("write failed: " + path);
}

Trajectory resample_uniform(const Trajectory& traj, double dt) {
  validate(traj);
  if (!traj.timed()) throw ContractError("resample_uniform: trajectory has no time stamps");
  if (!(dt > 0.0)) throw ContractError("resample_uniform: dt must be positive");
  const Eigen::Index m = traj.length();
  if (m < 4) throw ContractError("resample_uniform: need at least 4 samples for a cubic spline");

  const auto& t = traj.times;
  std::vector<double> h(m - 1);
  for (Eigen::Index i = 0; i + 1 < m; ++i) h[i] = t[i + 1] - t[i];

  const double span = t.back() - t.front();
  const Eigen::Index count = static_cast<Eigen::Index>(std::floor(span / dt + 1e-9)) + 1;
  Trajectory out;
  out.source_id = traj.source_id;
  out.has_velocity = traj.has_velocity;
  out.states.resize(traj.dim(), count);
  out.times.resize(count);
  for (Eigen::Index k = 0; k < count; ++k) out.times[k] = t.front() + static_cast<double>(k) * dt;

  for (Eigen::Index d = 0; d < traj.dim(); ++d) {
    // Second derivatives with natural end conditions via the Thomas algorithm.
    std::vector<double> sec(m, 0.0);
    if (m > 2) {
      const Eigen::Index k = m - 2;
      std::vector<double> diag(k), upper(k), rhs(k);
      for (Eigen::Index i = 1; i <= k; ++i) {
        const double y0 = traj.states(d, i - 1), y1 = traj.states(d, i), y2 = traj.states(d, i + 1);
        diag[i - 1] = 2.0 * (h[i - 1] + h[i]);
        upper[i - 1] = h[i];
        rhs[i - 1] = 6.0 * ((y2 - y1) / h[i] - (y1 - y0) / h[i - 1]);
      }
      for (Eigen::Index i = 1; i < k; ++i) {
        const double w = h[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
      }
      sec[k] = rhs[k - 1] / diag[k - 1];
      for (Eigen::Index i = k - 1; i >= 1; --i) sec[i] = (rhs[i - 1] - upper[i - 1] * sec[i + 1]) / diag[i - 1];
    }
    Eigen::Index seg = 0;
    for (Eigen::Index q = 0; q < count; ++q) {
      const double tq = std::min(out.times[q], t.back());
      while (seg + 2 < m && tq > t[seg + 1]) ++seg;
      const double a = t[seg + 1] - tq, b = tq - t[seg], hs = h[seg];
      const double y0 = traj.states(d, seg), y1 = traj.states(d, seg + 1);
      out.states(d, q) = sec[seg] * a * a * a / (6.0 * hs) + sec[seg + 1] * b * b * b / (6.0 * hs) +
                         (y0 / hs - sec[seg] * hs / 6.0) * a + (y1 / hs - sec[seg + 1] * hs / 6.0) * b;
    }
  }
  return out;
}

Trajectory augment_velocity(const Trajectory& traj) {
  validate(traj);
  if (traj.has_velocity) throw ContractError("augment_velocity: trajectory already carries velocities");
  if (traj.length() < 2) throw ContractError("augment_velocity: need at least 2 samples");
  if (!traj.timed()) throw ContractError("augment_velocity: trajectory has no time stamps");
  double dt = 0.0;
  if (!uniform_stamps(traj.times, dt)) {
    throw ContractError("augment_velocity: time stamps are not uniform; resample first");
  }
  const Eigen::Index n = traj.dim(), m = traj.length();
  Trajectory out = traj;
  out.has_velocity = true;
  out.states.resize(2 * n, m);
  out.states.topRows(n) = traj.states;
  for (Eigen::Index i = 0; i < m; ++i) {
    Vector v;
    if (i == 0) {
      v = (traj.states.col(1) - traj.states.col(0)) / dt;
    } else if (i == m - 1) {
      v = (traj.states.col(m - 1) - traj.states.col(m - 2)) / dt;
    } else {
      v = (traj.states.col(i + 1) - traj.states.col(i - 1)) / (2.0 * dt);
    }
    out.states.block(n, i, n, 1) = v;
  }
  return out;
}

Scaler::Scaler(Vector min, Vector max) : min_(std::move(min)), max_(std::move(max)) {
  if (min_.size() != max_.size()) throw DimensionError("Scaler: min/max sizes differ");
  for (Eigen::Index k = 0; k < min_.size(); ++k) {
    if (!(max_(k) > min_(k))) {
      throw ContractError("Scaler: dimension " + std::to_string(k) + " has zero range");
    }
  }
}

Scaler Scaler::identity(Eigen::Index n) {
  return Scaler(Vector::Constant(n, -1.0), Vector::Constant(n, 1.0));
}

Vector Scaler::apply(const Vector& x) const {
  if (x.size() != dim()) throw DimensionError("Scaler::apply: dimension mismatch");
  return (2.0 * (x - min_).array() / (max_ - min_).array() - 1.0).matrix();
}

Vector Scaler::invert(const Vector& x) const {
  if (x.size() != dim()) throw DimensionError("Scaler::invert: dimension mismatch");
  return ((x.array() + 1.0) * 0.5 * (max_ - min_).array() + min_.array()).matrix();
}

Matrix Scaler::apply(const Matrix& states) const {
  Matrix out(states.rows(), states.cols());
  for (Eigen::Index i = 0; i < states.cols(); ++i) out.col(i) = apply(Vector(states.col(i)));
  return out;
}

Matrix Scaler::invert(const Matrix& states) const {
  Matrix out(states.rows(), states.cols());
  for (Eigen::Index i = 0; i < states.cols(); ++i) out.col(i) = invert(Vector(states.col(i)));
  return out;
}

Trajectory Scaler::apply(const Trajectory& traj) const {
  Trajectory out = traj;
  out.states = apply(traj.states);
  return out;
}

Dataset Scaler::apply(const Dataset& data) const {
  Dataset out;
  out.reserve(data.size());
  for (const auto& t : data) out.push_back(apply(t));
  return out;
}

Scaler fit_scaler(const Dataset& train) {
  if (train.empty()) throw ContractError("fit_scaler: empty training set");
  const Eigen::Index n = train.front().dim();
  Vector lo = Vector::Constant(n, std::numeric_limits<double>::infinity());
  Vector hi = -lo;
  for (const auto& t : train) {
    if (t.dim() != n) throw DimensionError("fit_scaler: mixed state dimensions");
    if (t.length() == 0) continue;
    lo = lo.cwiseMin(t.states.rowwise().minCoeff());
    hi = hi.cwiseMax(t.states.rowwise().maxCoeff());
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    if (!(hi(k) > lo(k))) {
      throw ContractError("fit_scaler: dimension " + std::to_string(k) +
                          " is constant over the training data");
    }
  }
  return Scaler(lo, hi);
}

SyntheticKind parse_synthetic_kind(const std::string& name) {
  if (name == "linear_sink") return SyntheticKind::linear_sink;
  if (name == "spiral_sink") return SyntheticKind::spiral_sink;
  if (name == "tanh_contraction") return SyntheticKind::tanh_contraction;
  throw ContractError("unknown synthetic kind '" + name + "'");
}

std::string to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::linear_sink: return "linear_sink";
    case SyntheticKind::spiral_sink: return "spiral_sink";
    case SyntheticKind::tanh_contraction: return "tanh_contraction";
  }
  return "unknown";
}

Matrix linear_sink_matrix(int dim) {
  // Upper bidiagonal: diagonal from 0.95 down to 0.8, coupling 0.05.
  Matrix a = Matrix::Zero(dim, dim);
  for (int i = 0; i < dim; ++i) {
    a(i, i) = dim > 1 ? 0.95 - 0.15 * i / (dim - 1) : 0.95;
    if (i + 1 < dim) a(i, i + 1) = 0.05;
  }
  return a;
}

Matrix spiral_sink_matrix(double dt) {
  constexpr double kTheta = 0.1;
  constexpr double kDecay = 0.98;
  Eigen::Matrix2d b;
  b << std::cos(kTheta), -std::sin(kTheta), std::sin(kTheta), std::cos(kTheta);
  b *= kDecay;
  // x = [y; v] with v_t = (y_t - y_{t-1}) / dt.
  Matrix a = Matrix::Zero(4, 4);
  a.topLeftCorner(2, 2) = b;
  a.bottomLeftCorner(2, 2) = (b - Eigen::Matrix2d::Identity()) / dt;
  return a;
}

Vector synthetic_step(const SyntheticSpec& spec, const Vector& x) {
  switch (spec.kind) {
    case SyntheticKind::linear_sink: return linear_sink_matrix(static_cast<int>(x.size())) * x;
    case SyntheticKind::spiral_sink: return spiral_sink_matrix(spec.dt) * x;
    case SyntheticKind::tanh_contraction:
      return (0.5 * x.array() + 0.25 * x.array().tanh()).matrix();
  }
  throw ContractError("synthetic_step: unknown kind");
}

Dataset gen_synthetic(const SyntheticSpec& spec) {
  if (spec.n_traj < 1 || spec.steps < 1 || !(spec.dt > 0.0) || spec.dim < 1 ||
      !(spec.noise_std >= 0.0)) {
    throw ContractError("gen_synthetic: parameters must be positive");
  }
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  const int n = spec.kind == SyntheticKind::spiral_sink ? 4 : spec.dim;
  Dataset out;
  for (int k = 0; k < spec.n_traj; ++k) {
    Vector x(n);
    switch (spec.kind) {
      case SyntheticKind::linear_sink:
        for (int i = 0; i < n; ++i) x(i) = unit(rng);
        break;
      case SyntheticKind::tanh_contraction:
        // Repeated demonstrations: starts jittered around a common point.
        for (int i = 0; i < n; ++i) x(i) = (i % 2 ? -1.5 : 1.5) + 0.3 * unit(rng);
        break;
      case SyntheticKind::spiral_sink: {
        const Matrix a = spiral_sink_matrix(spec.dt);
        const Eigen::Matrix2d b = a.topLeftCorner(2, 2);
        Eigen::Vector2d y(unit(rng), unit(rng));
        x.head(2) = y;
        x.tail(2) = (y - b.inverse() * y) / spec.dt;
        break;
      }
    }
    Trajectory traj;
    traj.source_id = std::to_string(k);
    traj.states.resize(n, spec.steps);
    for (int t = 0; t < spec.steps; ++t) {
      traj.states.col(t) = x;
      traj.times.push_back(static_cast<double>(t) * spec.dt);
      x = synthetic_step(spec, x);
    }
    out.push_back(std::move(traj));
  }
  if (spec.noise_std > 0.0) {
    for (auto& traj : out) {
      for (Eigen::Index j = 0; j < traj.states.cols(); ++j) {
        for (Eigen::Index i = 0; i < traj.states.rows(); ++i) {
          traj.states(i, j) += spec.noise_std * noise(rng);
        }
      }
    }
  }
  return out;
}

SplitPlan loocv(std::size_t n_trajectories) {
  if (n_trajectories < 2) throw ContractError("loocv: need at least 2 trajectories");
  SplitPlan plan;
  for (std::size_t k = 0; k < n_trajectories; ++k) {
    Fold fold;
    for (std::size_t i = 0; i < n_trajectories; ++i) {
      (i == k ? fold.test : fold.train).push_back(i);
    }
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

}  // namespace skel
