#include <gtest/gtest.h>

#include <cmath>

#include "freqlens/numopt.hpp"
#include "support.hpp"

using namespace freqlens;
using freqlens::testing::low_rank_matrix;
using freqlens::testing::random_matrix;

namespace {

double max_diff(const Matrix& a, const Matrix& b) {
  EXPECT_EQ(a.rows(), b.rows());
  EXPECT_EQ(a.cols(), b.cols());
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

Vector random_vector(std::size_t n, Rng& rng) {
  Vector v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

}  // namespace

TEST(Svd, ReconstructsAndIsOrthonormal) {
  Rng rng(1);
  for (auto [r, c] : {std::pair<std::size_t, std::size_t>{7, 4}, {4, 7}, {5, 5}}) {
    const Matrix a = random_matrix(r, c, rng, 1.0);
    const Svd d = svd(a);
    Matrix s(d.s.size(), d.s.size());
    for (std::size_t k = 0; k < d.s.size(); ++k) s(k, k) = d.s[k];
    EXPECT_LT(max_diff(d.u * s * d.v.transposed(), a), 1e-12);
    EXPECT_LT(max_diff(d.u.transposed() * d.u, Matrix::identity(d.s.size())), 1e-12);
    EXPECT_LT(max_diff(d.v.transposed() * d.v, Matrix::identity(d.s.size())), 1e-12);
    for (std::size_t k = 1; k < d.s.size(); ++k) EXPECT_GE(d.s[k - 1], d.s[k]);
  }
}

TEST(Svd, DiagonalSingularValues) {
  const Matrix a{{0, 3, 0}, {-5, 0, 0}, {0, 0, 1}};
  const Svd d = svd(a);
  EXPECT_NEAR(d.s[0], 5, 1e-14);
  EXPECT_NEAR(d.s[1], 3, 1e-14);
  EXPECT_NEAR(d.s[2], 1, 1e-14);
}

TEST(Pinv, ClosedFormExamples) {
  EXPECT_LT(max_diff(pinv(Matrix{{1, 0}, {0, 0}}), Matrix{{1, 0}, {0, 0}}), 1e-15);
  EXPECT_LT(max_diff(pinv(Matrix{{1, 2}, {2, 4}}), Matrix{{1.0 / 25, 2.0 / 25}, {2.0 / 25, 4.0 / 25}}), 1e-15);
  EXPECT_LT(max_diff(pinv(Matrix{{1}, {1}}), Matrix{{0.5, 0.5}}), 1e-15);
  EXPECT_LT(max_diff(pinv(Matrix(3, 2)), Matrix(2, 3)), 0.0 + 1e-300);
  const Matrix inv = pinv(Matrix{{2, 1}, {1, 1}});
  EXPECT_LT(max_diff(inv, Matrix{{1, -1}, {-1, 2}}), 1e-14);
}

TEST(Pinv, PenroseConditions) {
  Rng rng(2);
  for (auto [r, c, k] : {std::tuple<std::size_t, std::size_t, std::size_t>{6, 4, 2}, {4, 9, 3}, {8, 8, 8}}) {
    const Matrix a = low_rank_matrix(r, c, k, rng);
    const Matrix p = pinv(a);
    const double tol = 1e-10 * std::max(1.0, a.frobenius_norm());
    EXPECT_LT(max_diff(a * p * a, a), tol);
    EXPECT_LT(max_diff(p * a * p, p), tol * std::max(1.0, p.frobenius_norm()));
    EXPECT_LT(max_diff((a * p).transposed(), a * p), 1e-10);
    EXPECT_LT(max_diff((p * a).transposed(), p * a), 1e-10);
  }
}

TEST(Pinv, RejectsNonFinite) {
  Matrix a{{1, 2}, {3, 4}};
  a(1, 0) = std::nan("");
  EXPECT_THROW(pinv(a), std::invalid_argument);
}

TEST(LeastSquares, NormalEquationsHold) {
  Rng rng(3);
  const Matrix a = random_matrix(20, 4, rng, 1.0);
  const Vector b = random_vector(20, rng);
  const Vector x = least_squares(a, b);
  Vector r = a * x;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= b[i];
  const Vector g = a.transposed() * r;
  EXPECT_LT(max_abs(g), 1e-10);
  EXPECT_THROW(least_squares(a, Vector(3)), std::invalid_argument);
}

TEST(Powell, QuadraticBowl) {
  const Objective f = [](std::span<const double> x) {
    return (x[0] - 1) * (x[0] - 1) + 10 * (x[1] + 2) * (x[1] + 2) + (x[0] - 1) * (x[1] + 2);
  };
  const PowellResult r = powell_minimize(f, {5.0, 5.0});
  EXPECT_NEAR(r.x[0], 1.0, 1e-6);
  EXPECT_NEAR(r.x[1], -2.0, 1e-6);
  EXPECT_NEAR(r.f, 0.0, 1e-10);
}

TEST(Powell, Rosenbrock) {
  const Objective f = [](std::span<const double> x) {
    return 100 * (x[1] - x[0] * x[0]) * (x[1] - x[0] * x[0]) + (1 - x[0]) * (1 - x[0]);
  };
  PowellConfig cfg;
  cfg.max_iters = 2000;
  const PowellResult r = powell_minimize(f, {-1.2, 1.0}, cfg);
  EXPECT_NEAR(r.x[0], 1.0, 1e-4);
  EXPECT_NEAR(r.x[1], 1.0, 1e-4);
  for (std::size_t i = 1; i < r.history.size(); ++i) EXPECT_LE(r.history[i], r.history[i - 1]);
}

TEST(Powell, L1ObjectiveReachesZero) {
  const Objective f = [](std::span<const double> x) { return std::abs(x[0] - 0.5) + std::abs(x[1]) + std::abs(x[2] + 3); };
  const PowellResult r = powell_minimize(f, {0.0, 0.0, 0.0});
  EXPECT_LT(r.f, 1e-7);
}

TEST(Powell, RejectsBadInput) {
  const Objective nan_f = [](std::span<const double>) { return std::nan(""); };
  EXPECT_THROW(powell_minimize(nan_f, {1.0}), std::runtime_error);
  const Objective ok = [](std::span<const double> x) { return x[0] * x[0]; };
  EXPECT_THROW(powell_minimize(ok, {}), std::invalid_argument);
  PowellConfig bad;
  bad.xtol = 0;
  EXPECT_THROW(powell_minimize(ok, {1.0}, bad), std::invalid_argument);
}

TEST(SoftThreshold, Values) {
  EXPECT_EQ(soft_threshold(3, 1), 2);
  EXPECT_EQ(soft_threshold(-3, 1), -2);
  EXPECT_EQ(soft_threshold(0.5, 1), 0);
  EXPECT_EQ(soft_threshold(-1, 1), 0);
}

TEST(Lasso, ZeroPenaltyMatchesLeastSquares) {
  Rng rng(4);
  const Matrix a = random_matrix(30, 5, rng, 1.0);
  const Vector b = random_vector(30, rng);
  const LassoResult r = lasso_cd(a, b, 0.0, 1e-14);
  ASSERT_TRUE(r.converged);
  const Vector ols = least_squares(a, b);
  for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(r.coef[j], ols[j], 1e-8);
}

TEST(Lasso, OrthogonalDesignClosedForm) {
  Rng rng(5);
  const Svd d = svd(random_matrix(12, 4, rng, 1.0));
  const Matrix& q = d.u;  // orthonormal columns
  const Vector b = random_vector(12, rng);
  const Vector qtb = q.transposed() * b;
  const double lam = 0.4;
  const LassoResult r = lasso_cd(q, b, lam);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(r.coef[j], soft_threshold(qtb[j], lam), 1e-12);
}

TEST(Lasso, ZeroThresholdAndKkt) {
  Rng rng(6);
  const Matrix a = random_matrix(25, 8, rng, 1.0);
  const Vector b = random_vector(25, rng);
  const double lam_max = max_abs(a.transposed() * b);
  const LassoResult zero = lasso_cd(a, b, lam_max * (1 + 1e-12));
  for (double v : zero.coef) EXPECT_EQ(v, 0.0);

  const double lam = 0.3 * lam_max;
  const LassoResult r = lasso_cd(a, b, lam);
  ASSERT_TRUE(r.converged);
  Vector resid = a * r.coef;
  for (std::size_t i = 0; i < resid.size(); ++i) resid[i] = b[i] - resid[i];
  const Vector corr = a.transposed() * resid;
  for (std::size_t j = 0; j < 8; ++j) {
    if (r.coef[j] != 0.0)
      EXPECT_NEAR(corr[j], lam * (r.coef[j] > 0 ? 1 : -1), 1e-9);
    else
      EXPECT_LE(std::abs(corr[j]), lam + 1e-9);
  }
  for (std::size_t s = 1; s < r.objective_history.size(); ++s)
    EXPECT_LE(r.objective_history[s], r.objective_history[s - 1] + 1e-12);
  EXPECT_NEAR(r.objective_history.back(), lasso_objective(a, b, lam, r.coef), 1e-10);
}

TEST(Lasso, SkipsZeroColumns) {
  Matrix a{{1, 0, 2}, {0, 0, 1}, {1, 0, 0}};
  const Vector b{1, 2, 3};
  const LassoResult r = lasso_cd(a, b, 0.1);
  ASSERT_EQ(r.skipped_columns.size(), 1u);
  EXPECT_EQ(r.skipped_columns[0], 1u);
  EXPECT_EQ(r.coef[1], 0.0);
}

TEST(Lasso, RejectsBadInput) {
  const Matrix a{{1, 0}, {0, 1}};
  EXPECT_THROW(lasso_cd(a, Vector{1, 2}, -1.0), std::invalid_argument);
  EXPECT_THROW(lasso_cd(a, Vector{1}, 0.1), std::invalid_argument);
  EXPECT_THROW(lasso_cd(a, Vector{1, std::nan("")}, 0.1), std::invalid_argument);
}
