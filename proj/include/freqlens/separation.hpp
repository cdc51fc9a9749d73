#pragma once

// Generalization analysis over detector features: residualized lasso for the
// per-fake outlier variables θ, a robust real/fake hyperplane, distances to it,
// the ρ separation index, and a PCA projection for plotting.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "freqlens/matrix.hpp"
#include "freqlens/numopt.hpp"

namespace freqlens {

inline constexpr const char* kRealTag = "real";
inline constexpr const char* kUnseenTag = "unseen";

struct FeatureSet {
  Matrix features;                    ///< n×d, one row per sample
  std::vector<int> labels;            ///< 0 = real, 1 = fake
  std::vector<std::string> clusters;  ///< training-cluster tag, "real" or "unseen"

  std::size_t size() const { return features.rows(); }
  std::size_t dims() const { return features.cols(); }

  void validate() const {
    if (labels.size() != size() || clusters.size() != size())
      throw std::invalid_argument("FeatureSet: labels/clusters do not match the number of rows");
    if (dims() == 0) throw std::invalid_argument("FeatureSet: no feature columns");
    if (!features.all_finite()) throw std::invalid_argument("FeatureSet: non-finite features");
    std::size_t real = 0, fake = 0;
    for (int l : labels) {
      if (l != 0 && l != 1) throw std::invalid_argument("FeatureSet: labels must be 0 or 1");
      (l == 0 ? real : fake) += 1;
    }
    if (real == 0 || fake == 0) throw std::invalid_argument("FeatureSet: need at least one real and one fake row");
  }

  std::vector<std::size_t> fake_rows() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < size(); ++i)
      if (labels[i] == 1) out.push_back(i);
    return out;
  }

  Vector label_vector() const { return Vector(labels.begin(), labels.end()); }

  /// Rows in `keep`, in that order.
  FeatureSet subset(const std::vector<std::size_t>& keep) const {
    FeatureSet out{select_rows(features, keep), {}, {}};
    for (std::size_t i : keep) {
      out.labels.push_back(labels[i]);
      out.clusters.push_back(clusters[i]);
    }
    return out;
  }
};

enum class ThetaSolver { cd, powell };

inline const char* to_string(ThetaSolver s) { return s == ThetaSolver::cd ? "cd" : "powell"; }
inline ThetaSolver parse_theta_solver(const std::string& s) {
  if (s == "cd") return ThetaSolver::cd;
  if (s == "powell") return ThetaSolver::powell;
  throw std::invalid_argument("unknown solver: " + s);
}

struct ResidualDesign {
  Matrix f_tilde;                      ///< I - F (FᵀF)† Fᵀ, n×n
  Matrix design;                       ///< columns of f_tilde at fake rows
  Vector l_tilde;                      ///< f_tilde · L
  std::vector<std::size_t> fake_rows;
  bool degenerate = false;             ///< F = 0, so f_tilde = I
};

/// Projects labels and fake-row indicator columns onto the orthogonal
/// complement of the feature column space.
inline ResidualDesign residualize(const FeatureSet& fs) {
  fs.validate();
  const std::size_t n = fs.size();
  const Matrix& f = fs.features;
  const Matrix ft = f.transposed();
  const Matrix hat = f * pinv(ft * f) * ft;
  ResidualDesign out;
  out.f_tilde = Matrix::identity(n) - hat;
  out.fake_rows = fs.fake_rows();
  out.design = select_cols(out.f_tilde, out.fake_rows);
  out.l_tilde = out.f_tilde * fs.label_vector();
  out.degenerate = f.frobenius_norm() == 0.0;
  return out;
}

/// ½‖L̃ - D·θ‖² + lam‖θ‖₁ for the residual design D.
inline double theta_objective(const ResidualDesign& rd, double lam, std::span<const double> theta) {
  return lasso_objective(rd.design, rd.l_tilde, lam, theta);
}

/// Smallest penalty at which θ* = 0: ‖Dᵀ L̃‖∞.
inline double theta_zero_threshold(const ResidualDesign& rd) {
  return max_abs(rd.design.transposed() * rd.l_tilde);
}

struct ThetaFit {
  Vector theta;                  ///< one value per fake row, in row order
  double objective = 0.0;
  double lam = 0.0;
  ThetaSolver solver = ThetaSolver::cd;
  int iterations = 0;            ///< sweeps (cd) or outer iterations (powell)
  std::vector<std::size_t> skipped_columns;
};

struct ThetaOptions {
  double cd_tol = 1e-12;
  PowellConfig powell{};
};

inline ThetaFit fit_theta(const ResidualDesign& rd, double lam, ThetaSolver solver, const ThetaOptions& opts = {}) {
  if (!(lam >= 0.0)) throw std::invalid_argument("fit_theta: penalty must be >= 0");
  ThetaFit fit;
  fit.lam = lam;
  fit.solver = solver;
  if (solver == ThetaSolver::cd) {
    LassoResult res = lasso_cd(rd.design, rd.l_tilde, lam, opts.cd_tol);
    fit.theta = std::move(res.coef);
    fit.iterations = res.sweeps;
    fit.skipped_columns = std::move(res.skipped_columns);
  } else {
    const Objective f = [&](std::span<const double> t) { return theta_objective(rd, lam, t); };
    PowellResult res = powell_minimize(f, Vector(rd.design.cols(), 0.0), opts.powell);
    fit.theta = std::move(res.x);
    fit.iterations = res.iters;
  }
  fit.objective = theta_objective(rd, lam, fit.theta);
  if (!std::isfinite(fit.objective)) throw std::runtime_error("fit_theta: solver produced a non-finite objective");
  return fit;
}

inline ThetaFit fit_theta(const FeatureSet& fs, double lam, ThetaSolver solver, const ThetaOptions& opts = {}) {
  return fit_theta(residualize(fs), lam, solver, opts);
}

inline std::size_t count_nonzero(std::span<const double> v, double zero = 1e-12) {
  return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [&](double x) { return std::abs(x) > zero; }));
}

/// Bisects lam on [0, zero threshold] so that about `target_fraction` of the
/// fake rows carry a nonzero θ.
inline double select_lambda(const ResidualDesign& rd, double target_fraction = 0.2, int max_steps = 40,
                            const ThetaOptions& opts = {}) {
  if (!(target_fraction > 0.0 && target_fraction < 1.0))
    throw std::invalid_argument("select_lambda: target fraction must lie in (0, 1)");
  const std::size_t fakes = rd.design.cols();
  const auto target = static_cast<std::size_t>(std::llround(target_fraction * static_cast<double>(fakes)));
  double lo = 0.0;
  double hi = theta_zero_threshold(rd);
  if (hi == 0.0) return 0.0;
  double best = hi;
  std::size_t best_gap = fakes + 1;
  for (int step = 0; step < max_steps; ++step) {
    const double mid = 0.5 * (lo + hi);
    const ThetaFit fit = fit_theta(rd, mid, ThetaSolver::cd, opts);
    const std::size_t active = count_nonzero(fit.theta);
    const std::size_t gap = active > target ? active - target : target - active;
    if (gap < best_gap) {
      best_gap = gap;
      best = mid;
    }
    if (active == target) break;
    (active > target ? lo : hi) = mid;
  }
  return best;
}

struct RobustFit {
  Vector u_star;
  Vector theta_star;                    ///< per fake row of the fitted set
  double lam = 0.0;
  double kept_fraction = 0.8;
  double t0 = 0.5;
  ThetaSolver solver = ThetaSolver::cd;
  std::vector<std::size_t> kept_rows;   ///< indices into the fitted set, ascending |zθ|
  double theta_objective = 0.0;

  void validate() const {
    if (!(norm2(u_star) > 0.0)) throw std::invalid_argument("RobustFit: U* has zero norm");
    if (!(kept_fraction > 0.0 && kept_fraction <= 1.0))
      throw std::invalid_argument("RobustFit: kept_fraction must lie in (0, 1]");
  }
};

/// Keeps the rows with the smallest |zᵢθᵢ| (real rows score 0, ties keep row
/// order) and solves U* = (FᵀF)† Fᵀ L on them.
inline RobustFit fit_hyperplane(const FeatureSet& fs, std::span<const double> theta_star, double kept_fraction = 0.8,
                                double t0 = 0.5) {
  fs.validate();
  if (!(kept_fraction > 0.0 && kept_fraction <= 1.0))
    throw std::invalid_argument("fit_hyperplane: kept_fraction must lie in (0, 1]");
  const std::vector<std::size_t> fakes = fs.fake_rows();
  if (theta_star.size() != fakes.size())
    throw std::invalid_argument("fit_hyperplane: theta does not match the fake rows");

  const std::size_t n = fs.size();
  Vector score(n, 0.0);
  for (std::size_t k = 0; k < fakes.size(); ++k) score[fakes[k]] = std::abs(theta_star[k]);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
  const auto keep = std::max<std::size_t>(
      1, std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(kept_fraction * static_cast<double>(n)))));
  order.resize(keep);

  bool has_real = false, has_fake = false;
  for (std::size_t i : order) (fs.labels[i] == 0 ? has_real : has_fake) = true;
  if (!has_real || !has_fake)
    throw std::runtime_error("fit_hyperplane: kept rows are single-class, hyperplane undefined");

  RobustFit fit;
  fit.kept_fraction = kept_fraction;
  fit.t0 = t0;
  fit.theta_star.assign(theta_star.begin(), theta_star.end());
  fit.kept_rows = order;
  const Matrix f_low = select_rows(fs.features, order);
  Vector l_low;
  for (std::size_t i : order) l_low.push_back(static_cast<double>(fs.labels[i]));
  fit.u_star = least_squares(f_low, l_low);
  if (!(norm2(fit.u_star) > 0.0)) throw std::runtime_error("fit_hyperplane: U* has zero norm");
  return fit;
}

/// |U*·x - t₀| / ‖U*‖.
inline double distance(const RobustFit& fit, std::span<const double> x) {
  if (x.size() != fit.u_star.size()) throw std::invalid_argument("distance: dimension mismatch");
  const double norm = norm2(fit.u_star);
  if (!(norm > 0.0)) throw std::invalid_argument("distance: U* has zero norm");
  return std::abs(dot(fit.u_star, x) - fit.t0) / norm;
}

struct RhoOptions {
  bool unseen_in_fit = true;
  bool unseen_in_denominator = true;
};

struct RhoReport {
  double rho = 0.0;
  double numerator = 0.0;
  double denominator = 0.0;
  std::map<std::string, double> per_cluster_mean_distance;  ///< training clusters only
  std::map<std::string, std::size_t> per_cluster_count;
  double real_mean_distance = 0.0;
  double fake_mean_distance = 0.0;
  double unseen_mean_distance = 0.0;  ///< 0 when no unseen rows exist
  std::size_t unseen_count = 0;
  std::string numerator_statistic = "cluster_means";
  RobustFit fit;
  RhoOptions options;
};

/// ρ = (max cluster mean - min cluster mean) / (real mean + fake mean) of
/// hyperplane distances.
inline RhoReport rho_index(const FeatureSet& fs, const RobustFit& fit, const RhoOptions& opts = {}) {
  fs.validate();
  fit.validate();
  std::map<std::string, std::pair<double, std::size_t>> clusters;
  double real_sum = 0.0, fake_sum = 0.0, unseen_sum = 0.0;
  std::size_t real_n = 0, fake_n = 0, unseen_n = 0;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    const double d = distance(fit, fs.features.row(i));
    if (fs.labels[i] == 0) {
      real_sum += d;
      ++real_n;
      continue;
    }
    const bool unseen = fs.clusters[i] == kUnseenTag;
    if (unseen) {
      unseen_sum += d;
      ++unseen_n;
      if (!opts.unseen_in_denominator) continue;
    } else {
      auto& c = clusters[fs.clusters[i]];
      c.first += d;
      ++c.second;
    }
    fake_sum += d;
    ++fake_n;
  }
  if (clusters.size() < 2) throw std::invalid_argument("rho_index: need at least 2 fake training clusters");

  RhoReport rep;
  rep.fit = fit;
  rep.options = opts;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& [tag, acc] : clusters) {
    const double mean = acc.first / static_cast<double>(acc.second);
    rep.per_cluster_mean_distance[tag] = mean;
    rep.per_cluster_count[tag] = acc.second;
    lo = std::min(lo, mean);
    hi = std::max(hi, mean);
  }
  rep.real_mean_distance = real_sum / static_cast<double>(real_n);
  rep.fake_mean_distance = fake_n > 0 ? fake_sum / static_cast<double>(fake_n) : 0.0;
  rep.unseen_count = unseen_n;
  rep.unseen_mean_distance = unseen_n > 0 ? unseen_sum / static_cast<double>(unseen_n) : 0.0;
  rep.numerator = hi - lo;
  rep.denominator = rep.real_mean_distance + rep.fake_mean_distance;
  if (!(rep.denominator > 0.0)) throw std::runtime_error("rho_index: zero denominator");
  rep.rho = rep.numerator / rep.denominator;
  return rep;
}

struct RhoPipelineOptions {
  std::optional<double> lam;  ///< unset: select_lambda
  double target_fraction = 0.2;
  ThetaSolver solver = ThetaSolver::cd;
  double kept_fraction = 0.8;
  double t0 = 0.5;
  RhoOptions rho{};
  ThetaOptions theta{};
};

/// residualize → fit_theta → fit_hyperplane → rho_index.
inline RhoReport run_rho_pipeline(const FeatureSet& fs, const RhoPipelineOptions& opts = {}) {
  fs.validate();
  FeatureSet fitted = fs;
  if (!opts.rho.unseen_in_fit) {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < fs.size(); ++i)
      if (fs.clusters[i] != kUnseenTag) keep.push_back(i);
    fitted = fs.subset(keep);
  }
  const ResidualDesign rd = residualize(fitted);
  const double lam = opts.lam ? *opts.lam : select_lambda(rd, opts.target_fraction, 40, opts.theta);
  const ThetaFit theta = fit_theta(rd, lam, opts.solver, opts.theta);
  RobustFit fit = fit_hyperplane(fitted, theta.theta, opts.kept_fraction, opts.t0);
  fit.lam = lam;
  fit.solver = opts.solver;
  fit.theta_objective = theta.objective;
  return rho_index(fs, fit, opts.rho);
}

struct PcaResult {
  Matrix coords;                 ///< n×dims
  Matrix axes;                   ///< d×dims principal directions
  Vector explained_ratio;        ///< per axis
  bool degenerate = false;       ///< zero covariance; coords are all 0
};

/// Centered PCA via SVD; each axis is signed so its largest-magnitude
/// loading is positive.
inline PcaResult pca_project(const Matrix& x, std::size_t dims = 2) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (n < 3) throw std::invalid_argument("pca_project: need at least 3 rows");
  if (dims == 0 || dims > d) throw std::invalid_argument("pca_project: dims must lie in [1, d]");
  if (!x.all_finite()) throw std::invalid_argument("pca_project: non-finite input");
  Matrix centered = x;
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x(i, j);
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) centered(i, j) -= mean;
  }
  PcaResult out{Matrix(n, dims), Matrix(d, dims), Vector(dims, 0.0), false};
  const Svd s = svd(centered);
  double total = 0.0;
  for (double v : s.s) total += v * v;
  if (!(total > 0.0)) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t k = 0; k < dims; ++k) {
    std::size_t arg = 0;
    for (std::size_t j = 1; j < d; ++j)
      if (std::abs(s.v(j, k)) > std::abs(s.v(arg, k))) arg = j;
    const double sign = s.v(arg, k) < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < d; ++j) out.axes(j, k) = sign * s.v(j, k);
    out.explained_ratio[k] = s.s[k] * s.s[k] / total;
  }
  out.coords = centered * out.axes;
  return out;
}

inline PcaResult pca_project(const FeatureSet& fs, std::size_t dims = 2) { return pca_project(fs.features, dims); }

}  // namespace freqlens
