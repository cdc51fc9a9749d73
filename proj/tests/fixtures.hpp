#pragma once

// Synthetic feature sets shared by the separation tests, the CLI tests and
// the acceptance binary.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "freqlens/csv.hpp"
#include "freqlens/numopt.hpp"
#include "freqlens/separation.hpp"
#include "support.hpp"

namespace freqlens::testing {

inline Matrix random_orthogonal(std::size_t d, Rng& rng) { return svd(random_matrix(d, d, rng)).u; }

inline Matrix rotate_rows(const Matrix& x, const Matrix& q) { return x * q; }

inline double angle_between(std::span<const double> a, std::span<const double> b) {
  const double c = dot(a, b) / (norm2(a) * norm2(b));
  return std::acos(std::clamp(std::abs(c), 0.0, 1.0));
}

/// 1-D set: 4 real rows at 0, cluster A (2 rows) at 1, cluster B (2 rows) at 2.
/// With U* = e₁ and t₀ = 0.5 the index is 1 / 1.5.
inline FeatureSet rho_fixture_1d() {
  FeatureSet fs;
  fs.features = Matrix{{0.0}, {0.0}, {0.0}, {0.0}, {1.0}, {1.0}, {2.0}, {2.0}};
  fs.labels = {0, 0, 0, 0, 1, 1, 1, 1};
  fs.clusters = {kRealTag, kRealTag, kRealTag, kRealTag, "A", "A", "B", "B"};
  return fs;
}

inline RobustFit unit_fit(std::size_t d, double t0 = 0.5) {
  RobustFit fit;
  fit.u_star.assign(d, 0.0);
  fit.u_star[0] = 1.0;
  fit.t0 = t0;
  return fit;
}

struct PlantedInstance {
  FeatureSet set;
  Vector normal;  ///< unit vector separating the two classes
};

/// Real rows around -μ·n̂ and fake rows around +μ·n̂ (unit noise), plus
/// fake-labelled outliers across the plane at outlier_at·n̂ + lateral·ŝ, ŝ ⊥ n̂.
/// Rows are shuffled.
inline PlantedInstance planted_instance(Rng& rng, std::size_t reals, std::size_t fakes, std::size_t outliers,
                                        std::size_t d = 8, double mu = 1.5, double outlier_at = -4.0,
                                        double lateral = 0.0) {
  auto unit = [](Vector v) {
    const double nv = norm2(v);
    for (double& x : v) x /= nv;
    return v;
  };
  PlantedInstance out;
  Vector raw(d), side(d);
  for (double& v : raw) v = rng.normal();
  out.normal = unit(raw);
  for (double& v : side) v = rng.normal();
  const double proj = dot(side, out.normal);
  for (std::size_t j = 0; j < d; ++j) side[j] -= proj * out.normal[j];
  side = unit(side);

  const std::size_t n = reals + fakes + outliers;
  FeatureSet raw_set;
  raw_set.features = Matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const bool real = i < reals;
    const bool outlier = i >= reals + fakes;
    for (std::size_t j = 0; j < d; ++j) {
      const double centre = outlier ? outlier_at * out.normal[j] + lateral * side[j]
                                    : (real ? -mu : mu) * out.normal[j];
      raw_set.features(i, j) = centre + rng.normal();
    }
    raw_set.labels.push_back(real ? 0 : 1);
    raw_set.clusters.push_back(real ? kRealTag : (i % 2 == 0 ? "A" : "B"));
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  out.set = raw_set.subset(perm);
  return out;
}

/// Two fake clusters at gap·e₁ and (gap + 1)·e₁, real rows at the origin,
/// isotropic noise of `sd` in d dimensions. One noise draw per seed.
inline FeatureSet cluster_sweep_instance(double gap, std::uint64_t seed, std::size_t per_cluster = 40,
                                         std::size_t d = 4, double sd = 0.2) {
  Rng rng(seed);
  FeatureSet fs;
  fs.features = Matrix(4 * per_cluster, d);
  for (std::size_t i = 0; i < 4 * per_cluster; ++i) {
    const std::size_t group = i / per_cluster;  // 0,1 real; 2 A; 3 B
    const double x1 = group < 2 ? 0.0 : (group == 2 ? gap : gap + 1.0);
    for (std::size_t j = 0; j < d; ++j) fs.features(i, j) = (j == 0 ? x1 : 0.0) + rng.normal(0.0, sd);
    fs.labels.push_back(group < 2 ? 0 : 1);
    fs.clusters.push_back(group < 2 ? kRealTag : (group == 2 ? "A" : "B"));
  }
  return fs;
}

/// Small instance for solver cross-checks: n rows, half fake, d features.
inline FeatureSet small_instance(Rng& rng, std::size_t n, std::size_t d) {
  FeatureSet fs;
  fs.features = random_matrix(n, d, rng);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = i % 2 == 0 ? 0 : 1;
    if (label == 1) fs.features(i, 0) += 2.0;
    if (label == 1 && i % 7 == 1) fs.features(i, 0) -= 5.0;
    fs.labels.push_back(label);
    fs.clusters.push_back(label == 0 ? kRealTag : (i % 4 == 1 ? "A" : "B"));
  }
  return fs;
}

inline std::string to_csv(const FeatureSet& fs) {
  std::ostringstream os;
  write_feature_csv(os, fs);
  return os.str();
}

}  // namespace freqlens::testing
