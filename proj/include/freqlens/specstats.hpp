#pragma once

// Special functions and statistics: modified Bessel I_ν, the noncentral
// chi-squared density, adaptive Gauss–Kronrod quadrature, the focal-loss
// expectation under the chi-squared block-loss model, MMD and Pearson
// correlation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "freqlens/loss_config.hpp"
#include "freqlens/matrix.hpp"
#include "freqlens/rng.hpp"

namespace freqlens {

// ---------------------------------------------------------------------------
// Modified Bessel function of the first kind
// ---------------------------------------------------------------------------

namespace detail {

/// log I_ν(x) from the ascending series
///   I_ν(x) = Σ_m (x/2)^{2m+ν} / (m! Γ(m+ν+1)).
/// All terms are positive, so the sum carries no cancellation; partial sums
/// are rescaled to stay finite for large x. Valid for ν > -1.
inline double log_bessel_i_series(double nu, double x) {
  if (x == 0.0) return nu == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
  const double q = 0.25 * x * x;
  double term = 1.0;
  double sum = 1.0;
  double log_offset = 0.0;
  for (int m = 0; m < 100000; ++m) {
    const double md = static_cast<double>(m);
    term *= q / ((md + 1.0) * (md + 1.0 + nu));
    sum += term;
    if (sum > 1e280) {
      sum *= 1e-280;
      term *= 1e-280;
      log_offset += 280.0 * std::numbers::ln10;
    }
    // past the peak the ratio is < 1 and shrinking, so the tail is bounded by
    // a geometric series
    const double ratio = q / ((md + 2.0) * (md + 2.0 + nu));
    if (ratio < 1.0 && term < sum * 1e-17 * (1.0 - ratio)) break;
  }
  return nu * std::log(0.5 * x) - std::lgamma(nu + 1.0) + std::log(sum) + log_offset;
}

/// log I_ν(x) from the large-argument (Hankel) expansion
///   I_ν(x) ~ e^x / sqrt(2πx) · Σ_k (-1)^k a_k(ν) / x^k,
/// truncated at the smallest term.
inline double log_bessel_i_large_x(double nu, double x) {
  const double mu = 4.0 * nu * nu;
  double term = 1.0;
  double sum = 1.0;
  double prev_abs = 1.0;
  for (int k = 1; k < 200; ++k) {
    const double odd = 2.0 * k - 1.0;
    term *= -(mu - odd * odd) / (8.0 * k * x);
    const double a = std::abs(term);
    if (a > prev_abs) break;
    sum += term;
    if (a < 1e-17 * std::abs(sum)) break;
    prev_abs = a;
  }
  return x - 0.5 * std::log(2.0 * std::numbers::pi * x) + std::log(sum);
}

/// Region where the Hankel expansion reaches double precision before its
/// terms start to grow.
inline bool use_large_x_expansion(double nu, double x) { return x > 30.0 && x > 0.5 * nu * nu + 25.0; }

}  // namespace detail

/// log I_ν(x) for ν > -1, x ≥ 0.
inline double log_bessel_i(double nu, double x) {
  if (!(x >= 0.0)) throw std::domain_error("bessel_i: x must be non-negative");
  if (!(nu > -1.0)) throw std::domain_error("bessel_i: order must exceed -1");
  if (x <= 12.0 || !detail::use_large_x_expansion(nu, x)) return detail::log_bessel_i_series(nu, x);
  return detail::log_bessel_i_large_x(nu, x);
}

/// Modified Bessel function of the first kind I_ν(x), ν ≥ 0, x ≥ 0.
inline double bessel_i(double nu, double x) {
  if (!(nu >= 0.0)) throw std::domain_error("bessel_i: order must be non-negative");
  return std::exp(log_bessel_i(nu, x));
}

// ---------------------------------------------------------------------------
// Adaptive Gauss–Kronrod quadrature
// ---------------------------------------------------------------------------

struct QuadratureOptions {
  double abs_tol = 1e-10;
  double rel_tol = 1e-12;
  int max_depth = 60;
};

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;       // summed |K15 - G7| over accepted intervals
  std::size_t evaluations = 0;
  bool converged = true;
};

namespace detail {

// 15-point Kronrod nodes (non-negative half) and weights, embedded 7-point
// Gauss weights at the odd Kronrod nodes.
inline constexpr std::array<double, 8> kronrod_nodes{
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kronrod_weights{
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> gauss_weights{
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <class F>
std::pair<double, double> gauss_kronrod_15(const F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = fc * kronrod_weights[7];
  double gauss = fc * gauss_weights[3];
  for (std::size_t i = 0; i < 7; ++i) {
    const double dx = half * kronrod_nodes[i];
    const double pair = f(center - dx) + f(center + dx);
    kronrod += kronrod_weights[i] * pair;
    if (i % 2 == 1) gauss += gauss_weights[i / 2] * pair;
  }
  return {kronrod * half, gauss * half};
}

template <class F>
void integrate_recursive(const F& f, double a, double b, double abs_tol, double rel_tol, int depth,
                         QuadratureResult& acc) {
  const auto [k, g] = gauss_kronrod_15(f, a, b);
  acc.evaluations += 15;
  if (!std::isfinite(k)) throw std::runtime_error("quadrature: non-finite integrand");
  const double err = std::abs(k - g);
  if (err <= std::max(abs_tol, rel_tol * std::abs(k)) || depth <= 0) {
    if (depth <= 0 && err > std::max(abs_tol, rel_tol * std::abs(k))) acc.converged = false;
    acc.value += k;
    acc.error += err;
    return;
  }
  const double mid = 0.5 * (a + b);
  integrate_recursive(f, a, mid, 0.5 * abs_tol, rel_tol, depth - 1, acc);
  integrate_recursive(f, mid, b, 0.5 * abs_tol, rel_tol, depth - 1, acc);
}

}  // namespace detail

/// Integrates f over consecutive intervals [points[i], points[i+1]] with
/// interval bisection until each local |K15 - G7| meets the tolerance. The
/// absolute budget is shared between pieces in proportion to their width.
template <class F>
QuadratureResult integrate(const F& f, std::span<const double> points, const QuadratureOptions& opts = {}) {
  if (points.size() < 2) throw std::invalid_argument("integrate: need at least two points");
  QuadratureResult acc;
  const double total = points.back() - points.front();
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    const double a = points[i];
    const double b = points[i + 1];
    if (!(b > a)) continue;
    const double share = total > 0.0 ? (b - a) / total : 1.0;
    detail::integrate_recursive(f, a, b, opts.abs_tol * share, opts.rel_tol, opts.max_depth, acc);
  }
  return acc;
}

template <class F>
QuadratureResult integrate(const F& f, double a, double b, const QuadratureOptions& opts = {}) {
  const std::array<double, 2> pts{a, b};
  return integrate(f, std::span<const double>(pts), opts);
}

// ---------------------------------------------------------------------------
// Noncentral chi-squared
// ---------------------------------------------------------------------------

struct Chi2Spec {
  double k = 256.0;         ///< degrees of freedom
  double lambda_nc = 0.0;   ///< noncentrality

  void validate() const {
    if (!(k > 0.0) || !std::isfinite(k)) throw std::invalid_argument("Chi2Spec: k must be positive");
    if (!(lambda_nc >= 0.0) || !std::isfinite(lambda_nc))
      throw std::invalid_argument("Chi2Spec: lambda must be non-negative");
  }
  double mean() const { return k + lambda_nc; }
  double variance() const { return 2.0 * (k + 2.0 * lambda_nc); }
};

/// log f(x; k, λ). For λ > 0:
///   f = ½ e^{-(x+λ)/2} (x/λ)^{k/4-1/2} I_{k/2-1}(sqrt(λx));
/// for λ = 0 the central density x^{k/2-1} e^{-x/2} / (2^{k/2} Γ(k/2)).
inline double nc_chi2_log_pdf(const Chi2Spec& spec, double x) {
  spec.validate();
  if (!(x >= 0.0)) throw std::domain_error("nc_chi2_pdf: x must be non-negative");
  const double k = spec.k;
  const double lam = spec.lambda_nc;
  const double nu = 0.5 * k - 1.0;
  if (lam == 0.0) {
    if (x == 0.0) {
      if (nu == 0.0) return -std::numbers::ln2;
      return nu > 0.0 ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
    }
    return nu * std::log(x) - 0.5 * x - 0.5 * k * std::numbers::ln2 - std::lgamma(0.5 * k);
  }
  if (x == 0.0) {
    // limit: (x/λ)^{ν/2} I_ν(sqrt(λx)) -> x^ν / (2^ν Γ(ν+1))
    if (nu == 0.0) return -std::numbers::ln2 - 0.5 * lam;
    return nu > 0.0 ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
  }
  return -std::numbers::ln2 - 0.5 * (x + lam) + 0.5 * nu * (std::log(x) - std::log(lam)) +
         log_bessel_i(nu, std::sqrt(lam * x));
}

inline double nc_chi2_pdf(const Chi2Spec& spec, double x) { return std::exp(nc_chi2_log_pdf(spec, x)); }

namespace detail {

/// Breakpoints at 0, mean ± j·sd (j = -8..8, clipped at 0) and `upper`, so the
/// initial quadrature panels resolve the density's bulk.
inline std::vector<double> chi2_breakpoints(const Chi2Spec& spec, double upper) {
  const double m = spec.mean();
  const double sd = std::sqrt(spec.variance());
  std::vector<double> pts{0.0};
  for (int j = -8; j <= 8; ++j) {
    const double p = m + j * sd;
    if (p > 0.0 && p < upper) pts.push_back(p);
  }
  pts.push_back(upper);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

inline std::vector<double> merge_points(std::vector<double> pts, std::initializer_list<double> extra) {
  const double lo = pts.front();
  const double hi = pts.back();
  for (double e : extra)
    if (e > lo && e < hi) pts.push_back(e);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

}  // namespace detail

/// P(X > x) by quadrature over [x, far], where `far` lies 60 standard
/// deviations past the mean.
inline double nc_chi2_survival(const Chi2Spec& spec, double x) {
  const double far = spec.mean() + 60.0 * std::sqrt(spec.variance()) + 100.0;
  if (x >= far) return 0.0;
  auto pts = detail::chi2_breakpoints(spec, far);
  std::vector<double> tail{std::max(x, 0.0)};
  for (double p : pts)
    if (p > tail.front()) tail.push_back(p);
  QuadratureOptions opts;
  opts.abs_tol = 1e-14;
  opts.rel_tol = 1e-10;
  return integrate([&](double t) { return nc_chi2_pdf(spec, t); }, std::span<const double>(tail), opts)
      .value;
}

/// Upper integration limit: the point where the survival function drops to
/// `tail`, located by bisection.
inline double nc_chi2_tail_cut(const Chi2Spec& spec, double tail = 1e-10) {
  spec.validate();
  double lo = spec.mean();
  double hi = spec.mean() + 60.0 * std::sqrt(spec.variance()) + 100.0;
  for (int it = 0; it < 60 && hi - lo > 1e-6 * (1.0 + lo); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (nc_chi2_survival(spec, mid) > tail)
      lo = mid;
    else
      hi = mid;
  }
  return hi;
}

/// ∫ x^power f(x) dx over [0, tail cut].
inline double nc_chi2_moment(const Chi2Spec& spec, int power) {
  const double cut = nc_chi2_tail_cut(spec);
  const auto pts = detail::chi2_breakpoints(spec, cut);
  QuadratureOptions opts;
  opts.abs_tol = 1e-12;
  opts.rel_tol = 1e-13;
  return integrate([&](double x) { return std::pow(x, power) * nc_chi2_pdf(spec, x); },
                   std::span<const double>(pts), opts)
      .value;
}

/// Draw from χ²(k, λ) as a Poisson mixture of central Gamma variates.
class NcChi2Sampler {
public:
  explicit NcChi2Sampler(Chi2Spec spec) : spec_(spec) { spec_.validate(); }

  double operator()(Rng& rng) const {
    const double half_lambda = 0.5 * spec_.lambda_nc;
    std::uint64_t count = 0;
    if (half_lambda > 0.0) count = poisson(half_lambda, rng);
    return 2.0 * gamma(0.5 * spec_.k + static_cast<double>(count), rng);
  }

private:
  static std::uint64_t poisson(double mean, Rng& rng) {
    if (mean > 500.0) {
      std::poisson_distribution<std::uint64_t> dist(mean);
      return dist(rng.engine());
    }
    // sequential inversion
    double p = std::exp(-mean);
    double cdf = p;
    const double u = rng.uniform();
    std::uint64_t k = 0;
    while (u > cdf && k < 100000) {
      ++k;
      p *= mean / static_cast<double>(k);
      cdf += p;
    }
    return k;
  }

  // Marsaglia–Tsang, with the shape < 1 boost.
  static double gamma(double shape, Rng& rng) {
    if (shape < 1.0) {
      double u = rng.uniform();
      while (u <= 0.0) u = rng.uniform();
      return gamma(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double z, v;
      do {
        z = rng.normal();
        v = 1.0 + c * z;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = rng.uniform();
      if (u < 1.0 - 0.0331 * z * z * z * z) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * z * z + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  Chi2Spec spec_;
};

// ---------------------------------------------------------------------------
// Focal expectation under the block-loss model
// ---------------------------------------------------------------------------

/// Divisor taking a sum-of-squares block loss x to a mean-normalized value:
/// k + λ + 6·sd, i.e. six standard deviations past the mean maps to 1.
inline double block_loss_scale(const Chi2Spec& spec) {
  return spec.mean() + 6.0 * std::sqrt(spec.variance());
}

inline double clamp_unit(double v, double eps) { return std::clamp(v, eps, 1.0 - eps); }

/// Per-block focal term g(L) for L already clamped into (0, 1).
inline double focal_term(double l, double gamma, FocalVariant variant) {
  if (variant == FocalVariant::paper) return std::pow(1.0 - l, gamma) * std::log(l);
  return std::pow(l, gamma) * std::log1p(-l);
}

/// Maps a χ² draw x to the block loss seen by the focal form. Empty means the
/// default x / block_loss_scale(spec).
using BlockLossMapping = std::function<double(double)>;

/// E[g(L(x))] for x ~ χ²(k, λ), with L clamped to [eps, 1 - eps]. The value
/// is signed (negative for both variants); callers negate it.
inline double focal_expectation(const Chi2Spec& spec, double gamma, FocalVariant variant,
                                double eps = 1e-6, const BlockLossMapping& mapping = {}) {
  spec.validate();
  if (!(gamma >= 0.0)) throw std::invalid_argument("focal_expectation: gamma must be >= 0");
  const double scale = block_loss_scale(spec);
  const double cut = nc_chi2_tail_cut(spec);
  auto pts = detail::chi2_breakpoints(spec, cut);
  if (!mapping) pts = detail::merge_points(std::move(pts), {eps * scale, (1.0 - eps) * scale});
  auto integrand = [&](double x) {
    const double mapped = mapping ? mapping(x) : x / scale;
    const double value = focal_term(clamp_unit(mapped, eps), gamma, variant) * nc_chi2_pdf(spec, x);
    if (!std::isfinite(value))
      throw std::runtime_error("focal_expectation: divergent integrand at x=" + std::to_string(x));
    return value;
  };
  QuadratureOptions opts;
  opts.abs_tol = 1e-10;
  opts.rel_tol = 1e-12;
  const auto res = integrate(integrand, std::span<const double>(pts), opts);
  if (!res.converged) throw std::runtime_error("focal_expectation: quadrature did not converge");
  return res.value;
}

/// E[L(x)] with the same clamped mapping as focal_expectation().
inline double expected_block_loss(const Chi2Spec& spec, double eps = 1e-6,
                                  const BlockLossMapping& mapping = {}) {
  spec.validate();
  const double scale = block_loss_scale(spec);
  const double cut = nc_chi2_tail_cut(spec);
  auto pts = detail::chi2_breakpoints(spec, cut);
  if (!mapping) pts = detail::merge_points(std::move(pts), {eps * scale, (1.0 - eps) * scale});
  QuadratureOptions opts;
  opts.abs_tol = 1e-10;
  opts.rel_tol = 1e-12;
  return integrate(
             [&](double x) {
               const double mapped = mapping ? mapping(x) : x / scale;
               return clamp_unit(mapped, eps) * nc_chi2_pdf(spec, x);
             },
             std::span<const double>(pts), opts)
      .value;
}

/// Per-ratio divisors E[L | r] used to equalize loss magnitudes across mask
/// ratios.
struct ScalingTable {
  std::map<double, double> entries;
  Chi2Spec chi2;
  double gamma = 2.0;
  CoefficientMode coefficient_mode = CoefficientMode::derived;
  FocalVariant variant = FocalVariant::complement;
  double clamp_eps = 1e-6;

  /// Entry for ratio r (matched to 1e-12).
  double at(double r) const {
    auto it = entries.lower_bound(r - 1e-12);
    if (it == entries.end() || std::abs(it->first - r) > 1e-12)
      throw std::out_of_range("ScalingTable: no entry for ratio " + std::to_string(r));
    return it->second;
  }
  bool contains(double r) const {
    auto it = entries.lower_bound(r - 1e-12);
    return it != entries.end() && std::abs(it->first - r) <= 1e-12;
  }
};

// ---------------------------------------------------------------------------
// Maximum mean discrepancy
// ---------------------------------------------------------------------------

struct MmdResult {
  double mmd2 = 0.0;
  double bandwidth = 0.0;
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline bool row_set_less(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) return a.rows() < b.rows();
  return a.data() < b.data();
}

}  // namespace detail

/// Unbiased MMD² with a Gaussian RBF kernel k(x,y) = exp(-|x-y|²/(2σ²)), σ
/// set by the median heuristic over the pooled sample. Equal-size samples use
/// the paired U-statistic (cross term without i = j), which is exactly zero
/// for identical inputs.
inline MmdResult mmd(const Matrix& a_in, const Matrix& b_in) {
  if (a_in.rows() < 2 || b_in.rows() < 2) throw std::invalid_argument("mmd: need at least two rows per sample");
  if (a_in.cols() != b_in.cols()) throw std::invalid_argument("mmd: dimension mismatch");
  // evaluate in a canonical argument order so mmd(a,b) == mmd(b,a) bit for bit
  const bool swap = detail::row_set_less(b_in, a_in);
  const Matrix& a = swap ? b_in : a_in;
  const Matrix& b = swap ? a_in : b_in;
  const std::size_t m = a.rows();
  const std::size_t n = b.rows();

  std::vector<double> dists;
  dists.reserve((m + n) * (m + n - 1) / 2);
  auto pooled = [&](std::size_t i) { return i < m ? a.row(i) : b.row(i - m); };
  for (std::size_t i = 0; i < m + n; ++i)
    for (std::size_t j = i + 1; j < m + n; ++j)
      dists.push_back(std::sqrt(detail::squared_distance(pooled(i), pooled(j))));
  const std::size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid), dists.end());
  double sigma = dists[mid];
  if (dists.size() % 2 == 0) {
    const double lower = *std::max_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid));
    sigma = 0.5 * (sigma + lower);
  }
  if (!(sigma > 0.0)) sigma = 1.0;
  const double inv = 1.0 / (2.0 * sigma * sigma);
  auto kernel = [&](std::span<const double> x, std::span<const double> y) {
    return std::exp(-detail::squared_distance(x, y) * inv);
  };

  double kxx = 0.0, kyy = 0.0, kxy = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) kxx += kernel(a.row(i), a.row(j));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) kyy += kernel(b.row(i), b.row(j));
  const auto md = static_cast<double>(m);
  const auto nd = static_cast<double>(n);
  double result;
  if (m == n) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) kxy += kernel(a.row(i), b.row(j));
    result = (2.0 * kxx + 2.0 * kyy - kxy - kxy) / (md * (md - 1.0));
  } else {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) kxy += kernel(a.row(i), b.row(j));
    result = 2.0 * kxx / (md * (md - 1.0)) + 2.0 * kyy / (nd * (nd - 1.0)) - 2.0 * kxy / (md * nd);
  }
  return {result, sigma};
}

// ---------------------------------------------------------------------------
// Pearson correlation
// ---------------------------------------------------------------------------

namespace detail {

/// Continued fraction for the incomplete beta (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) return h;
  }
  throw std::runtime_error("incomplete beta: continued fraction did not converge");
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw std::domain_error("incomplete_beta: a, b must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("incomplete_beta: x outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

struct PearsonResult {
  double r = 0.0;
  double p = 1.0;
  std::size_t n = 0;
};

/// Sample correlation with a two-sided p-value from Student-t on n - 2 dof.
inline PearsonResult pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
  if (x.size() < 3) throw std::invalid_argument("pearson: need at least three pairs");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw std::invalid_argument("pearson: constant input vector");
  const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = n - 2.0;
  const double one_minus_r2 = (1.0 - r) * (1.0 + r);
  // p = P(|T| > t) = I_{df/(df+t²)}(df/2, 1/2) and df/(df+t²) = 1 - r²
  const double p = one_minus_r2 <= 0.0 ? 0.0 : incomplete_beta(0.5 * df, 0.5, one_minus_r2);
  return {r, std::clamp(p, 0.0, 1.0), x.size()};
}

}  // namespace freqlens
