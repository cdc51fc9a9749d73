#pragma once

// Linear-algebra and optimization kernels: one-sided Jacobi SVD and the
// Moore–Penrose pseudoinverse, Powell's direction-set minimizer with Brent
// line searches, and cyclic coordinate descent for the lasso.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "freqlens/matrix.hpp"

namespace freqlens {

struct Svd {
  Matrix u;   ///< m×r, orthonormal columns where s > 0
  Vector s;   ///< r = min(m, n) singular values, descending
  Matrix v;   ///< n×r, orthonormal columns
};

namespace detail {

/// Hestenes one-sided Jacobi for m ≥ n: orthogonalizes the columns of A by
/// plane rotations accumulated into V.
inline Svd jacobi_svd_tall(const Matrix& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  Matrix u = a;
  Matrix v = Matrix::identity(n);
  constexpr double eps = std::numeric_limits<double>::epsilon();
  for (int sweep = 0; sweep < 100; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double up = u(i, p);
          const double uq = u(i, q);
          alpha += up * up;
          beta += uq * uq;
          gamma += up * uq;
        }
        if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double up = u(i, p);
          const double uq = u(i, q);
          u(i, p) = c * up - s * uq;
          u(i, q) = s * up + c * uq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v(i, p);
          const double vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }

  Vector s(n);
  for (std::size_t j = 0; j < n; ++j) {
    double norm = 0.0;
    for (std::size_t i = 0; i < m; ++i) norm += u(i, j) * u(i, j);
    s[j] = std::sqrt(norm);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return s[x] > s[y]; });

  Svd out{Matrix(m, n), Vector(n), Matrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.s[k] = s[j];
    for (std::size_t i = 0; i < m; ++i) out.u(i, k) = s[j] > 0.0 ? u(i, j) / s[j] : 0.0;
    for (std::size_t i = 0; i < n; ++i) out.v(i, k) = v(i, j);
  }
  return out;
}

}  // namespace detail

/// Thin SVD A = U·diag(s)·Vᵀ.
inline Svd svd(const Matrix& a) {
  if (!a.all_finite()) throw std::invalid_argument("svd: non-finite entries");
  if (a.rows() >= a.cols()) return detail::jacobi_svd_tall(a);
  Svd t = detail::jacobi_svd_tall(a.transposed());
  return {std::move(t.v), std::move(t.s), std::move(t.u)};
}

/// Moore–Penrose pseudoinverse; singular values at or below
/// max(m, n) · σ_max · 1e-12 are treated as zero.
inline Matrix pinv(const Matrix& a) {
  if (!a.all_finite()) throw std::invalid_argument("pinv: non-finite entries");
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  Matrix out(n, m);
  if (m == 0 || n == 0) return out;
  const Svd d = svd(a);
  const double cutoff = static_cast<double>(std::max(m, n)) * (d.s.empty() ? 0.0 : d.s.front()) * 1e-12;
  for (std::size_t k = 0; k < d.s.size(); ++k) {
    if (!(d.s[k] > cutoff)) continue;
    const double inv = 1.0 / d.s[k];
    for (std::size_t i = 0; i < n; ++i) {
      const double vik = d.v(i, k) * inv;
      if (vik == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) out(i, j) += vik * d.u(j, k);
    }
  }
  return out;
}

/// Least-squares solution pinv(AᵀA)·Aᵀ·b.
inline Vector least_squares(const Matrix& a, std::span<const double> b) {
  if (a.rows() != b.size()) throw std::invalid_argument("least_squares: dimension mismatch");
  const Matrix at = a.transposed();
  return pinv(at * a) * (at * b);
}

// ---------------------------------------------------------------------------
// Powell
// ---------------------------------------------------------------------------

struct PowellConfig {
  int max_iters = 200;
  double xtol = 1e-8;
  double ftol = 1e-10;
  double line_search_tol = 1e-10;
  int restarts = 10;  ///< direction-set resets after convergence

  void validate() const {
    if (!(xtol > 0.0 && ftol > 0.0 && line_search_tol > 0.0) || max_iters <= 0)
      throw std::invalid_argument("PowellConfig: tolerances and max_iters must be positive");
  }
};

struct PowellResult {
  Vector x;
  double f = 0.0;
  int iters = 0;
  std::vector<double> history;  ///< objective after each outer iteration
};

using Objective = std::function<double(std::span<const double>)>;

namespace detail {

class LineFunction {
public:
  LineFunction(const Objective& f, const Vector& origin, const Vector& dir)
      : f_(f), origin_(origin), dir_(dir), point_(origin.size()) {}

  double operator()(double t) {
    for (std::size_t i = 0; i < point_.size(); ++i) point_[i] = origin_[i] + t * dir_[i];
    const double v = f_(point_);
    if (!std::isfinite(v)) throw std::runtime_error("powell: objective returned a non-finite value");
    return v;
  }

private:
  const Objective& f_;
  const Vector& origin_;
  const Vector& dir_;
  Vector point_;
};

/// Brackets a minimum of a 1-D function starting from [a, b].
inline void bracket_minimum(LineFunction& g, double& a, double& b, double& c, double& fa, double& fb,
                            double& fc) {
  constexpr double golden = 1.618033988749895;
  constexpr double glimit = 100.0;
  constexpr double tiny = 1e-20;
  fa = g(a);
  fb = g(b);
  if (fb > fa) {
    std::swap(a, b);
    std::swap(fa, fb);
  }
  c = b + golden * (b - a);
  fc = g(c);
  for (int guard = 0; fb > fc && guard < 200; ++guard) {
    const double r = (b - a) * (fb - fc);
    const double q = (b - c) * (fb - fa);
    const double denom = 2.0 * std::copysign(std::max(std::abs(q - r), tiny), q - r);
    double u = b - ((b - c) * q - (b - a) * r) / denom;
    const double ulim = b + glimit * (c - b);
    double fu;
    if ((b - u) * (u - c) > 0.0) {
      fu = g(u);
      if (fu < fc) {
        a = b;
        b = u;
        fa = fb;
        fb = fu;
        return;
      }
      if (fu > fb) {
        c = u;
        fc = fu;
        return;
      }
      u = c + golden * (c - b);
      fu = g(u);
    } else if ((c - u) * (u - ulim) > 0.0) {
      fu = g(u);
      if (fu < fc) {
        b = c;
        c = u;
        u = c + golden * (c - b);
        fb = fc;
        fc = fu;
        fu = g(u);
      }
    } else if ((u - ulim) * (ulim - c) >= 0.0) {
      u = ulim;
      fu = g(u);
    } else {
      u = c + golden * (c - b);
      fu = g(u);
    }
    a = b;
    b = c;
    c = u;
    fa = fb;
    fb = fc;
    fc = fu;
  }
}

/// Brent's parabolic/golden-section minimization inside a bracket.
inline std::pair<double, double> brent(LineFunction& g, double ax, double bx, double cx, double fbx,
                                       double tol) {
  constexpr double cgold = 0.3819660112501051;
  constexpr double zeps = 1e-18;
  double a = std::min(ax, cx);
  double b = std::max(ax, cx);
  double x = bx, w = bx, v = bx;
  double fx = fbx, fw = fbx, fv = fbx;
  double d = 0.0, e = 0.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double xm = 0.5 * (a + b);
    const double tol1 = tol * std::abs(x) + zeps;
    const double tol2 = 2.0 * tol1;
    if (std::abs(x - xm) <= (tol2 - 0.5 * (b - a))) break;
    if (std::abs(e) > tol1) {
      double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      const double etemp = e;
      e = d;
      if (std::abs(p) >= std::abs(0.5 * q * etemp) || p <= q * (a - x) || p >= q * (b - x)) {
        e = (x >= xm) ? a - x : b - x;
        d = cgold * e;
      } else {
        d = p / q;
        const double u = x + d;
        if (u - a < tol2 || b - u < tol2) d = std::copysign(tol1, xm - x);
      }
    } else {
      e = (x >= xm) ? a - x : b - x;
      d = cgold * e;
    }
    const double u = std::abs(d) >= tol1 ? x + d : x + std::copysign(tol1, d);
    const double fu = g(u);
    if (fu <= fx) {
      if (u >= x)
        a = x;
      else
        b = x;
      v = w;
      w = x;
      x = u;
      fv = fw;
      fw = fx;
      fx = fu;
    } else {
      if (u < x)
        a = u;
      else
        b = u;
      if (fu <= fw || w == x) {
        v = w;
        w = u;
        fv = fw;
        fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u;
        fv = fu;
      }
    }
  }
  return {x, fx};
}

/// Minimizes f along `dir` from `x`, moving x and returning the new value.
/// The point only moves when the value strictly improves.
inline double line_minimize(const Objective& f, Vector& x, const Vector& dir, double fx, double tol) {
  LineFunction g(f, x, dir);
  double a = 0.0, b = 1.0, c = 0.0, fa = 0.0, fb = 0.0, fc = 0.0;
  bracket_minimum(g, a, b, c, fa, fb, fc);
  const auto [t, ft] = brent(g, a, b, c, fb, std::max(tol, 1e-15));
  if (!(ft < fx)) return fx;
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += t * dir[i];
  return ft;
}

}  // namespace detail

/// Powell's conjugate-direction method. The direction set restarts from the
/// coordinate axes after each convergence (up to cfg.restarts times) until a
/// restart fails to improve the objective.
inline PowellResult powell_minimize(const Objective& f, Vector x0, const PowellConfig& cfg = {}) {
  cfg.validate();
  const std::size_t n = x0.size();
  if (n == 0) throw std::invalid_argument("powell: empty starting point");
  PowellResult res;
  res.x = std::move(x0);
  res.f = f(res.x);
  if (!std::isfinite(res.f)) throw std::runtime_error("powell: objective not finite at x0");
  constexpr double tiny = 1e-25;

  for (int restart = 0; restart <= cfg.restarts && res.iters < cfg.max_iters; ++restart) {
    const double f_restart = res.f;
    std::vector<Vector> dirs(n, Vector(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) dirs[i][i] = 1.0;

    while (res.iters < cfg.max_iters) {
      ++res.iters;
      const Vector x_start = res.x;
      const double f_start = res.f;
      std::size_t biggest_index = 0;
      double biggest_drop = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double before = res.f;
        res.f = detail::line_minimize(f, res.x, dirs[i], res.f, cfg.line_search_tol);
        if (before - res.f > biggest_drop) {
          biggest_drop = before - res.f;
          biggest_index = i;
        }
      }
      res.history.push_back(res.f);

      double step = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        step = std::max(step, std::abs(res.x[i] - x_start[i]) / (1.0 + std::abs(res.x[i])));
      if (2.0 * (f_start - res.f) <= cfg.ftol * (std::abs(f_start) + std::abs(res.f)) + tiny ||
          step < cfg.xtol)
        break;

      Vector new_dir(n), extrapolated(n);
      for (std::size_t i = 0; i < n; ++i) {
        new_dir[i] = res.x[i] - x_start[i];
        extrapolated[i] = 2.0 * res.x[i] - x_start[i];
      }
      const double f_ext = f(extrapolated);
      if (!std::isfinite(f_ext)) throw std::runtime_error("powell: objective returned a non-finite value");
      if (f_ext < f_start) {
        const double a = f_start - res.f - biggest_drop;
        const double b = f_start - f_ext;
        const double t = 2.0 * (f_start - 2.0 * res.f + f_ext) * a * a - biggest_drop * b * b;
        if (t < 0.0) {
          res.f = detail::line_minimize(f, res.x, new_dir, res.f, cfg.line_search_tol);
          dirs[biggest_index] = dirs[n - 1];
          dirs[n - 1] = new_dir;
        }
      }
    }
    if (!(res.f < f_restart - cfg.ftol * (std::abs(f_restart) + tiny)) && restart > 0) break;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Lasso
// ---------------------------------------------------------------------------

struct LassoResult {
  Vector coef;
  int sweeps = 0;
  bool converged = false;
  std::vector<std::size_t> skipped_columns;  ///< zero-norm columns left at 0
  std::vector<double> objective_history;     ///< objective after each sweep
};

inline double soft_threshold(double value, double threshold) {
  if (value > threshold) return value - threshold;
  if (value < -threshold) return value + threshold;
  return 0.0;
}

/// ½‖target - design·u‖² + lam·‖u‖₁.
inline double lasso_objective(const Matrix& design, std::span<const double> target, double lam,
                              std::span<const double> u) {
  const Vector fit = design * u;
  double rss = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) rss += (target[i] - fit[i]) * (target[i] - fit[i]);
  double l1 = 0.0;
  for (double v : u) l1 += std::abs(v);
  return 0.5 * rss + lam * l1;
}

/// Cyclic coordinate descent with soft-thresholding; stops when the largest
/// coordinate change in a sweep drops below `tol`.
inline LassoResult lasso_cd(const Matrix& design, std::span<const double> target, double lam,
                            double tol = 1e-12, int max_sweeps = 100000) {
  if (!(lam >= 0.0)) throw std::invalid_argument("lasso_cd: penalty must be >= 0");
  if (design.rows() != target.size()) throw std::invalid_argument("lasso_cd: dimension mismatch");
  if (!design.all_finite()) throw std::invalid_argument("lasso_cd: non-finite design");
  for (double v : target)
    if (!std::isfinite(v)) throw std::invalid_argument("lasso_cd: non-finite target");
  const std::size_t n = design.rows();
  const std::size_t m = design.cols();
  LassoResult res;
  res.coef.assign(m, 0.0);
  Vector residual(target.begin(), target.end());
  Vector col_sq(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < n; ++i) col_sq[j] += design(i, j) * design(i, j);
    if (col_sq[j] == 0.0) res.skipped_columns.push_back(j);
  }

  for (res.sweeps = 0; res.sweeps < max_sweeps;) {
    ++res.sweeps;
    double max_change = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (col_sq[j] == 0.0) continue;
      double rho = 0.0;
      for (std::size_t i = 0; i < n; ++i) rho += design(i, j) * residual[i];
      const double old = res.coef[j];
      const double updated = soft_threshold(rho + col_sq[j] * old, lam) / col_sq[j];
      const double delta = updated - old;
      if (delta != 0.0) {
        for (std::size_t i = 0; i < n; ++i) residual[i] -= delta * design(i, j);
        res.coef[j] = updated;
      }
      max_change = std::max(max_change, std::abs(delta));
    }
    double rss = 0.0;
    for (double r : residual) rss += r * r;
    double l1 = 0.0;
    for (double v : res.coef) l1 += std::abs(v);
    res.objective_history.push_back(0.5 * rss + lam * l1);
    if (max_change < tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace freqlens
