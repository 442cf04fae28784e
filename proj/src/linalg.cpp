#include "skel/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "skel/error.hpp"

namespace skel {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Complex division (xr + i xi) / (yr + i yi) without overflow.
std::complex<double> cdiv(double xr, double xi, double yr, double yi) {
  if (std::abs(yr) > std::abs(yi)) {
    const double r = yi / yr;
    const double d = yr + r * yi;
    return {(xr + r * xi) / d, (xi - r * xr) / d};
  }
  const double r = yr / yi;
  const double d = yi + r * yr;
  return {(r * xr + xi) / d, (r * xi - xr) / d};
}

// Real Schur machinery. On return `h` holds the quasi-triangular form (or,
// with vectors requested, the back-substituted eigenvectors of it), `v` the
// accumulated orthogonal transform, and d/e the real/imaginary parts of the
// eigenvalues.
class SchurSolver {
 public:
  SchurSolver(const Matrix& a, bool want_vectors)
      : n_(static_cast<int>(a.rows())),
        want_vectors_(want_vectors),
        h_(a),
        v_(Matrix::Identity(a.rows(), a.rows())),
        d_(n_, 0.0),
        e_(n_, 0.0) {}

  void run() {
    reduce_to_hessenberg();
    iterate();
    if (want_vectors_) back_substitute();
  }

  const Matrix& vectors() const { return v_; }
  const std::vector<double>& real() const { return d_; }
  const std::vector<double>& imag() const { return e_; }

 private:
  void reduce_to_hessenberg() {
    const int low = 0, high = n_ - 1;
    std::vector<double> ort(n_, 0.0);
    for (int m = low + 1; m <= high - 1; ++m) {
      double scale = 0.0;
      for (int i = m; i <= high; ++i) scale += std::abs(h_(i, m - 1));
      if (scale == 0.0) continue;
      double hh = 0.0;
      for (int i = high; i >= m; --i) {
        ort[i] = h_(i, m - 1) / scale;
        hh += ort[i] * ort[i];
      }
      double g = std::sqrt(hh);
      if (ort[m] > 0) g = -g;
      hh -= ort[m] * g;
      ort[m] -= g;
      for (int j = m; j < n_; ++j) {
        double f = 0.0;
        for (int i = high; i >= m; --i) f += ort[i] * h_(i, j);
        f /= hh;
        for (int i = m; i <= high; ++i) h_(i, j) -= f * ort[i];
      }
      for (int i = 0; i <= high; ++i) {
        double f = 0.0;
        for (int j = high; j >= m; --j) f += ort[j] * h_(i, j);
        f /= hh;
        for (int j = m; j <= high; ++j) h_(i, j) -= f * ort[j];
      }
      ort[m] *= scale;
      h_(m, m - 1) = scale * g;
    }
    if (!want_vectors_) return;
    for (int m = high - 1; m >= low + 1; --m) {
      if (h_(m, m - 1) == 0.0) continue;
      for (int i = m + 1; i <= high; ++i) ort[i] = h_(i, m - 1);
      for (int j = m; j <= high; ++j) {
        double g = 0.0;
        for (int i = m; i <= high; ++i) g += ort[i] * v_(i, j);
        // Two divisions avoid underflow.
        g = (g / ort[m]) / h_(m, m - 1);
        for (int i = m; i <= high; ++i) v_(i, j) += g * ort[i];
      }
    }
  }

  void iterate() {
    const int nn = n_;
    int n = nn - 1;
    const int low = 0, high = nn - 1;
    double exshift = 0.0;
    double p = 0, q = 0, r = 0, s = 0, z = 0, t, w, x, y;

    norm_ = 0.0;
    for (int i = 0; i < nn; ++i) {
      for (int j = std::max(i - 1, 0); j < nn; ++j) norm_ += std::abs(h_(i, j));
    }

    int iter = 0;
    long sweeps = 0;
    const long max_sweeps = 100L * std::max(nn, 1);
    while (n >= low) {
      int l = n;
      while (l > low) {
        s = std::abs(h_(l - 1, l - 1)) + std::abs(h_(l, l));
        if (s == 0.0) s = norm_;
        if (std::abs(h_(l, l - 1)) <= kEps * s) break;
        --l;
      }

      if (l == n) {
        h_(n, n) += exshift;
        d_[n] = h_(n, n);
        e_[n] = 0.0;
        --n;
        iter = 0;
      } else if (l == n - 1) {
        w = h_(n, n - 1) * h_(n - 1, n);
        p = (h_(n - 1, n - 1) - h_(n, n)) / 2.0;
        q = p * p + w;
        z = std::sqrt(std::abs(q));
        h_(n, n) += exshift;
        h_(n - 1, n - 1) += exshift;
        x = h_(n, n);
        if (q >= 0) {
          z = (p >= 0) ? p + z : p - z;
          d_[n - 1] = x + z;
          d_[n] = d_[n - 1];
          if (z != 0.0) d_[n] = x - w / z;
          e_[n - 1] = 0.0;
          e_[n] = 0.0;
          x = h_(n, n - 1);
          s = std::abs(x) + std::abs(z);
          p = x / s;
          q = z / s;
          r = std::sqrt(p * p + q * q);
          p /= r;
          q /= r;
          for (int j = n - 1; j < nn; ++j) {
            z = h_(n - 1, j);
            h_(n - 1, j) = q * z + p * h_(n, j);
            h_(n, j) = q * h_(n, j) - p * z;
          }
          for (int i = 0; i <= n; ++i) {
            z = h_(i, n - 1);
            h_(i, n - 1) = q * z + p * h_(i, n);
            h_(i, n) = q * h_(i, n) - p * z;
          }
          for (int i = low; i <= high; ++i) {
            z = v_(i, n - 1);
            v_(i, n - 1) = q * z + p * v_(i, n);
            v_(i, n) = q * v_(i, n) - p * z;
          }
        } else {
          d_[n - 1] = x + p;
          d_[n] = x + p;
          e_[n - 1] = z;
          e_[n] = -z;
        }
        n -= 2;
        iter = 0;
      } else {
        if (++sweeps > max_sweeps) {
          throw ConvergenceError("eig: QR iteration did not converge in " +
                                 std::to_string(max_sweeps) + " sweeps");
        }
        x = h_(n, n);
        y = 0.0;
        w = 0.0;
        if (l < n) {
          y = h_(n - 1, n - 1);
          w = h_(n, n - 1) * h_(n - 1, n);
        }
        // Exceptional shifts break cycles.
        if (iter == 10) {
          exshift += x;
          for (int i = low; i <= n; ++i) h_(i, i) -= x;
          s = std::abs(h_(n, n - 1)) + std::abs(h_(n - 1, n - 2));
          x = y = 0.75 * s;
          w = -0.4375 * s * s;
        }
        if (iter == 30) {
          s = (y - x) / 2.0;
          s = s * s + w;
          if (s > 0) {
            s = std::sqrt(s);
            if (y < x) s = -s;
            s = x - w / ((y - x) / 2.0 + s);
            for (int i = low; i <= n; ++i) h_(i, i) -= s;
            exshift += s;
            x = y = w = 0.964;
          }
        }
        ++iter;

        int m = n - 2;
        while (m >= l) {
          z = h_(m, m);
          r = x - z;
          s = y - z;
          p = (r * s - w) / h_(m + 1, m) + h_(m, m + 1);
          q = h_(m + 1, m + 1) - z - r - s;
          r = h_(m + 2, m + 1);
          s = std::abs(p) + std::abs(q) + std::abs(r);
          p /= s;
          q /= s;
          r /= s;
          if (m == l) break;
          if (std::abs(h_(m, m - 1)) * (std::abs(q) + std::abs(r)) <
              kEps * (std::abs(p) * (std::abs(h_(m - 1, m - 1)) + std::abs(z) +
                                     std::abs(h_(m + 1, m + 1))))) {
            break;
          }
          --m;
        }
        for (int i = m + 2; i <= n; ++i) {
          h_(i, i - 2) = 0.0;
          if (i > m + 2) h_(i, i - 3) = 0.0;
        }

        // Double QR step on rows l..n, columns m..n.
        for (int k = m; k <= n - 1; ++k) {
          const bool notlast = (k != n - 1);
          if (k != m) {
            p = h_(k, k - 1);
            q = h_(k + 1, k - 1);
            r = notlast ? h_(k + 2, k - 1) : 0.0;
            x = std::abs(p) + std::abs(q) + std::abs(r);
            if (x == 0.0) continue;
            p /= x;
            q /= x;
            r /= x;
          }
          s = std::sqrt(p * p + q * q + r * r);
          if (p < 0) s = -s;
          if (s == 0.0) continue;
          if (k != m) {
            h_(k, k - 1) = -s * x;
          } else if (l != m) {
            h_(k, k - 1) = -h_(k, k - 1);
          }
          p += s;
          x = p / s;
          y = q / s;
          z = r / s;
          q /= p;
          r /= p;
          for (int j = k; j < nn; ++j) {
            p = h_(k, j) + q * h_(k + 1, j);
            if (notlast) {
              p += r * h_(k + 2, j);
              h_(k + 2, j) -= p * z;
            }
            h_(k, j) -= p * x;
            h_(k + 1, j) -= p * y;
          }
          for (int i = 0; i <= std::min(n, k + 3); ++i) {
            p = x * h_(i, k) + y * h_(i, k + 1);
            if (notlast) {
              p += z * h_(i, k + 2);
              h_(i, k + 2) -= p * r;
            }
            h_(i, k) -= p;
            h_(i, k + 1) -= p * q;
          }
          if (want_vectors_) {
            for (int i = low; i <= high; ++i) {
              p = x * v_(i, k) + y * v_(i, k + 1);
              if (notlast) {
                p += z * v_(i, k + 2);
                v_(i, k + 2) -= p * r;
              }
              v_(i, k) -= p;
              v_(i, k + 1) -= p * q;
            }
          }
        }
      }
    }
    (void)t;
  }

  void back_substitute() {
    const int nn = n_;
    const int low = 0, high = nn - 1;
    if (norm_ == 0.0) return;
    double p, q, r = 0, s = 0, t, w, x, y, z = 0;

    for (int n = nn - 1; n >= 0; --n) {
      p = d_[n];
      q = e_[n];
      if (q == 0.0) {
        int l = n;
        h_(n, n) = 1.0;
        for (int i = n - 1; i >= 0; --i) {
          w = h_(i, i) - p;
          r = 0.0;
          for (int j = l; j <= n; ++j) r += h_(i, j) * h_(j, n);
          if (e_[i] < 0.0) {
            z = w;
            s = r;
          } else {
            l = i;
            if (e_[i] == 0.0) {
              h_(i, n) = (w != 0.0) ? -r / w : -r / (kEps * norm_);
            } else {
              x = h_(i, i + 1);
              y = h_(i + 1, i);
              q = (d_[i] - p) * (d_[i] - p) + e_[i] * e_[i];
              t = (x * s - z * r) / q;
              h_(i, n) = t;
              h_(i + 1, n) = (std::abs(x) > std::abs(z)) ? (-r - w * t) / x : (-s - y * t) / z;
            }
            t = std::abs(h_(i, n));
            if ((kEps * t) * t > 1) {
              for (int j = i; j <= n; ++j) h_(j, n) /= t;
            }
          }
        }
      } else if (q < 0) {
        int l = n - 1;
        if (std::abs(h_(n, n - 1)) > std::abs(h_(n - 1, n))) {
          h_(n - 1, n - 1) = q / h_(n, n - 1);
          h_(n - 1, n) = -(h_(n, n) - p) / h_(n, n - 1);
        } else {
          const auto c = cdiv(0.0, -h_(n - 1, n), h_(n - 1, n - 1) - p, q);
          h_(n - 1, n - 1) = c.real();
          h_(n - 1, n) = c.imag();
        }
        h_(n, n - 1) = 0.0;
        h_(n, n) = 1.0;
        for (int i = n - 2; i >= 0; --i) {
          double ra = 0.0, sa = 0.0;
          for (int j = l; j <= n; ++j) {
            ra += h_(i, j) * h_(j, n - 1);
            sa += h_(i, j) * h_(j, n);
          }
          w = h_(i, i) - p;
          if (e_[i] < 0.0) {
            z = w;
            r = ra;
            s = sa;
          } else {
            l = i;
            if (e_[i] == 0.0) {
              const auto c = cdiv(-ra, -sa, w, q);
              h_(i, n - 1) = c.real();
              h_(i, n) = c.imag();
            } else {
              x = h_(i, i + 1);
              y = h_(i + 1, i);
              double vr = (d_[i] - p) * (d_[i] - p) + e_[i] * e_[i] - q * q;
              const double vi = (d_[i] - p) * 2.0 * q;
              if (vr == 0.0 && vi == 0.0) {
                vr = kEps * norm_ *
                     (std::abs(w) + std::abs(q) + std::abs(x) + std::abs(y) + std::abs(z));
              }
              const auto c = cdiv(x * r - z * ra + q * sa, x * s - z * sa - q * ra, vr, vi);
              h_(i, n - 1) = c.real();
              h_(i, n) = c.imag();
              if (std::abs(x) > (std::abs(z) + std::abs(q))) {
                h_(i + 1, n - 1) = (-ra - w * h_(i, n - 1) + q * h_(i, n)) / x;
                h_(i + 1, n) = (-sa - w * h_(i, n) - q * h_(i, n - 1)) / x;
              } else {
                const auto c2 = cdiv(-r - y * h_(i, n - 1), -s - y * h_(i, n), z, q);
                h_(i + 1, n - 1) = c2.real();
                h_(i + 1, n) = c2.imag();
              }
            }
            t = std::max(std::abs(h_(i, n - 1)), std::abs(h_(i, n)));
            if ((kEps * t) * t > 1) {
              for (int j = i; j <= n; ++j) {
                h_(j, n - 1) /= t;
                h_(j, n) /= t;
              }
            }
          }
        }
      }
    }

    for (int j = nn - 1; j >= low; --j) {
      for (int i = low; i <= high; ++i) {
        z = 0.0;
        for (int k = low; k <= std::min(j, high); ++k) z += v_(i, k) * h_(k, j);
        v_(i, j) = z;
      }
    }
  }

  int n_;
  bool want_vectors_;
  Matrix h_;
  Matrix v_;
  std::vector<double> d_;
  std::vector<double> e_;
  double norm_ = 0.0;
};

void require_square(const Matrix& a, const char* op) {
  if (a.rows() != a.cols()) {
    throw DimensionError(std::string(op) + ": expected square matrix, got " +
                         std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
}

void require_finite(const Matrix& a, const char* op) {
  if (!a.allFinite()) throw NumericalError(std::string(op) + ": non-finite entries");
}

}  // namespace

ComplexVector eigenvalues(const Matrix& a) {
  require_square(a, "eigenvalues");
  require_finite(a, "eigenvalues");
  SchurSolver solver(a, false);
  solver.run();
  ComplexVector out(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) out(i) = {solver.real()[i], solver.imag()[i]};
  return out;
}

EigenDecomposition eig(const Matrix& a) {
  require_square(a, "eig");
  require_finite(a, "eig");
  const Eigen::Index n = a.rows();
  SchurSolver solver(a, true);
  solver.run();
  const Matrix& raw = solver.vectors();
  const auto& d = solver.real();
  const auto& e = solver.imag();

  EigenDecomposition ed;
  ed.lambdas.resize(n);
  ed.vectors.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    ed.lambdas(j) = {d[j], e[j]};
    if (e[j] == 0.0) {
      ed.vectors.col(j) = raw.col(j).cast<std::complex<double>>();
    } else if (e[j] > 0.0) {
      // Pair stored as (re, im) columns j, j+1.
      for (Eigen::Index i = 0; i < n; ++i) {
        ed.vectors(i, j) = {raw(i, j), raw(i, j + 1)};
        ed.vectors(i, j + 1) = {raw(i, j), -raw(i, j + 1)};
      }
    }
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    const double nrm = ed.vectors.col(j).norm();
    if (nrm > 0.0) ed.vectors.col(j) /= nrm;
  }

  const ComplexMatrix ac = a.cast<std::complex<double>>();
  ed.residual = (ac * ed.vectors - ed.vectors * ed.lambdas.asDiagonal()).norm();

  Eigen::JacobiSVD<ComplexMatrix> svd(ed.vectors);
  const auto& sv = svd.singularValues();
  const double smin = n > 0 ? sv(n - 1) : 1.0;
  ed.condition = (smin > 0.0) ? sv(0) / smin : std::numeric_limits<double>::infinity();
  if (std::isfinite(ed.condition)) {
    ed.inverse_vectors = Eigen::PartialPivLU<ComplexMatrix>(ed.vectors).inverse();
  } else {
    ed.inverse_vectors = ComplexMatrix::Zero(n, n);
  }
  return ed;
}

double spectral_radius(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  return eigenvalues(a).cwiseAbs().maxCoeff();
}

double spectral_abscissa(const Matrix& a) {
  if (a.size() == 0) return -std::numeric_limits<double>::infinity();
  return eigenvalues(a).real().maxCoeff();
}

Matrix solve_dlyap(const Matrix& a, const Matrix& q) {
  require_square(a, "solve_dlyap");
  if (q.rows() != a.rows() || q.cols() != a.cols()) {
    throw DimensionError("solve_dlyap: Q must match A");
  }
  const double rho = spectral_radius(a);
  if (!(rho < 1.0)) {
    throw InfeasibleError("solve_dlyap: spectral radius " + std::to_string(rho) + " >= 1");
  }
  const Eigen::Index n = a.rows();
  const Eigen::Index n2 = n * n;
  // Column-major vec: vec(A^T P A) = (A^T (x) A^T) vec(P).
  Matrix k = Matrix::Identity(n2, n2);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      k.block(i * n, j * n, n, n) -= a(j, i) * a.transpose();
    }
  }
  const Eigen::PartialPivLU<Matrix> lu(k);
  const Eigen::Map<const Vector> rhs(q.data(), n2);
  Matrix p = Eigen::Map<const Matrix>(Vector(lu.solve(Vector(rhs))).data(), n, n);
  p = 0.5 * (p + p.transpose());
  // Refinement steps on the residual; they matter when rho(A) is close to 1
  // and P is large.
  for (int step = 0; step < 3; ++step) {
    const Matrix r = q - (p - a.transpose() * p * a);
    const Vector dp = lu.solve(Vector(Eigen::Map<const Vector>(r.data(), n2)));
    const Matrix d = Eigen::Map<const Matrix>(dp.data(), n, n);
    p += 0.5 * (d + d.transpose());
  }
  return p;
}

int expm_squarings(const Matrix& a) {
  const double norm1 = a.size() ? a.cwiseAbs().colwise().sum().maxCoeff() : 0.0;
  if (!(norm1 > 1.0)) return 0;
  return std::max(0, static_cast<int>(std::ceil(std::log2(norm1))));
}

Matrix expm_value(const Matrix& a) {
  require_square(a, "expm");
  require_finite(a, "expm");
  const Eigen::Index n = a.rows();
  const int s = expm_squarings(a);
  const Matrix as = a / std::ldexp(1.0, s);
  Matrix num = Matrix::Identity(n, n) * kPade6[0];
  Matrix den = num;
  Matrix power = Matrix::Identity(n, n);
  for (int k = 1; k <= 6; ++k) {
    power = power * as;
    num += kPade6[k] * power;
    den += ((k % 2) ? -kPade6[k] : kPade6[k]) * power;
  }
  Matrix r = checked_inverse(den) * num;
  for (int i = 0; i < s; ++i) r = r * r;
  return r;
}

PowerResult matrix_power_fast(const EigenDecomposition& ed, const Matrix& a, long t) {
  require_square(a, "matrix_power_fast");
  if (t < 0) throw ContractError("matrix_power_fast: negative exponent");
  const Eigen::Index n = a.rows();
  PowerResult out;
  if (ed.usable() && ed.lambdas.size() == n) {
    ComplexVector lt(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      // Binary powering keeps integer powers exact in structure.
      std::complex<double> base = ed.lambdas(i), acc = 1.0;
      for (long e = t; e > 0; e >>= 1) {
        if (e & 1) acc *= base;
        base *= base;
      }
      lt(i) = acc;
    }
    const ComplexMatrix c = ed.vectors * lt.asDiagonal() * ed.inverse_vectors;
    out.max_imag = n ? c.imag().cwiseAbs().maxCoeff() : 0.0;
    if (out.max_imag < kMaxImagResidue) {
      out.value = c.real();
      return out;
    }
  }
  out.fallback = true;
  out.max_imag = 0.0;
  out.value = Matrix::Identity(n, n);
  for (long k = 0; k < t; ++k) out.value = a * out.value;
  return out;
}

PowerResult matrix_exp_fast(const EigenDecomposition& ed, const Matrix& a, double t) {
  require_square(a, "matrix_exp_fast");
  const Eigen::Index n = a.rows();
  PowerResult out;
  if (ed.usable() && ed.lambdas.size() == n) {
    ComplexVector et(n);
    for (Eigen::Index i = 0; i < n; ++i) et(i) = std::exp(ed.lambdas(i) * t);
    const ComplexMatrix c = ed.vectors * et.asDiagonal() * ed.inverse_vectors;
    out.max_imag = n ? c.imag().cwiseAbs().maxCoeff() : 0.0;
    if (out.max_imag < kMaxImagResidue) {
      out.value = c.real();
      return out;
    }
  }
  out.fallback = true;
  out.max_imag = 0.0;
  out.value = expm_value(a * t);
  return out;
}

double min_symmetric_eigenvalue(const Matrix& a) {
  require_square(a, "min_symmetric_eigenvalue");
  if (a.size() == 0) return 0.0;
  const Matrix sym = 0.5 * (a + a.transpose());
  return Eigen::SelfAdjointEigenSolver<Matrix>(sym, Eigen::EigenvaluesOnly).eigenvalues()(0);
}

double max_symmetric_eigenvalue(const Matrix& a) {
  require_square(a, "max_symmetric_eigenvalue");
  if (a.size() == 0) return 0.0;
  const Matrix sym = 0.5 * (a + a.transpose());
  const auto ev = Eigen::SelfAdjointEigenSolver<Matrix>(sym, Eigen::EigenvaluesOnly).eigenvalues();
  return ev(ev.size() - 1);
}

}  // namespace skel
