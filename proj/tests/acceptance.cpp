// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "freqlens/csv.hpp"
#include "freqlens/freqloss.hpp"
#include "freqlens/image_io.hpp"
#include "freqlens/masking.hpp"
#include "freqlens/numopt.hpp"
#include "freqlens/scaling.hpp"
#include "freqlens/separation.hpp"
#include "freqlens/specstats.hpp"
#include "freqlens/toymae.hpp"
#include "support.hpp"
#include "toy_fixtures.hpp"

using namespace freqlens;
using namespace freqlens::testing;

namespace {

struct Check {
  bool pass = true;
  std::ostringstream notes;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes << "[miss] " << what << "; ";
    }
  }
  void note(const std::string& s) { notes << s << "; "; }
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

int failures = 0;

void criterion(int id, const char* name, double limit_s, const std::function<void(Check&)>& body) {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.require(false, std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.require(secs < limit_s, "runtime " + fmt(secs) + " s over " + fmt(limit_s) + " s");
  if (!c.pass) ++failures;
  std::printf("criterion %2d %-26s %s  (%s s / %s s) %s\n", id, name, c.pass ? "PASS" : "FAIL", fmt(secs, 3).c_str(),
              fmt(limit_s).c_str(), c.notes.str().c_str());
  std::fflush(stdout);
}

std::vector<double> ratio_grid() {
  std::vector<double> out;
  for (int k = 1; k <= 19; ++k) out.push_back(0.05 * k);
  return out;
}

double max_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.data().size(); ++k) m = std::max(m, std::abs(a.data()[k] - b.data()[k]));
  return m;
}

double angle_to(const Vector& u, const Vector& normal) { return angle_between(u, normal); }

// ---------------------------------------------------------------------------

void combinatorics(Check& c) {
  const std::size_t n = 14;
  const std::size_t masks = 10000;
  double worst_sum = 0.0, worst_sigma = 0.0;
  std::size_t r_index = 0;
  for (double r : ratio_grid()) {
    const CaseWeights w = case_weights(r);
    const auto e = expected_pair_counts(n, r);
    worst_sum = std::max({worst_sum, std::abs(w.p[0] + w.p[1] + w.p[2] - 1.0),
                          std::abs(e[0] + e[1] + e[2] - n * n / 2.0) / (n * n / 2.0),
                          std::abs(w.alpha[0] + w.alpha[1] + w.alpha[2] - 1.0)});
    Rng rng(9000 + r_index++);
    std::array<double, 3> counts{};
    for (std::size_t m = 0; m < masks; ++m) {
      const auto pc = pair_type_counts(sample_mask(n, r, rng));
      for (std::size_t t = 0; t < 3; ++t) counts[t] += static_cast<double>(pc[t]);
    }
    const double pairs = static_cast<double>(masks * n * n / 2);
    for (std::size_t t = 0; t < 3; ++t) {
      const double sigma = std::sqrt(pairs * w.p[t] * (1.0 - w.p[t]));
      worst_sigma = std::max(worst_sigma, std::abs(counts[t] - pairs * w.p[t]) / sigma);
    }
  }
  c.require(worst_sum <= 1e-12, "probability/count/alpha sums off by " + fmt(worst_sum));
  c.require(worst_sigma <= 3.0, "empirical pair frequency " + fmt(worst_sigma) + " sigma from P_t");
  c.note("max sum error " + fmt(worst_sum) + ", worst deviation " + fmt(worst_sigma, 3) + " sigma over 19 ratios");
}

void coefficient(Check& c) {
  double worst = 0.0;
  bool exact_half = true;
  for (double r : ratio_grid()) {
    const CaseWeights w = case_weights(r);
    double sum = 0.0;
    for (std::size_t t = 0; t < 3; ++t) sum += w.p[t] * w.alpha[t];
    const double closed = 6.0 * r * r * (1 - r) * (1 - r) / (3 * r * r - 3 * r + 2);
    worst = std::max({worst, std::abs(sum - closed), std::abs(case_mixture_coefficient(r, CoefficientMode::derived) - sum)});
    exact_half = exact_half && case_mixture_coefficient(r, CoefficientMode::paper) ==
                                   0.5 * case_mixture_coefficient(r, CoefficientMode::derived);
  }
  c.require(worst <= 1e-12, "term-by-term sum differs by " + fmt(worst));
  c.require(exact_half, "paper mode is not exactly half");
  c.note("max |sum - closed form| " + fmt(worst));
}

void special_functions(Check& c) {
  for (const Chi2Spec spec : {Chi2Spec{2, 0}, Chi2Spec{4, 2}, Chi2Spec{16, 8}, Chi2Spec{256, 10}}) {
    const double cut = nc_chi2_tail_cut(spec);
    const auto pts = detail::chi2_breakpoints(spec, cut);
    const double mass = integrate([&](double x) { return nc_chi2_pdf(spec, x); }, std::span<const double>(pts)).value;
    const double mean = integrate([&](double x) { return x * nc_chi2_pdf(spec, x); }, std::span<const double>(pts)).value;
    const double var =
        integrate([&](double x) { return (x - mean) * (x - mean) * nc_chi2_pdf(spec, x); }, std::span<const double>(pts))
            .value;
    const std::string tag = "(" + fmt(spec.k) + "," + fmt(spec.lambda_nc) + ")";
    c.require(std::abs(mass - 1.0) <= 1e-6, tag + " mass " + fmt(mass, 12));
    c.require(std::abs(mean / (spec.k + spec.lambda_nc) - 1.0) <= 1e-4, tag + " mean " + fmt(mean, 10));
    c.require(std::abs(var / (2 * (spec.k + 2 * spec.lambda_nc)) - 1.0) <= 1e-4, tag + " variance " + fmt(var, 10));
  }
  double worst = 0.0;
  for (double nu : {0.5, 1.0, 2.5, 7.0, 63.0, 127.0})
    for (double x : {0.1, 1.0, 5.0, 20.0, 40.0, 100.0, 300.0, 2000.0}) {
      const double base = log_bessel_i(nu, x);
      const double lhs = std::exp(log_bessel_i(nu - 1, x) - base) - std::exp(log_bessel_i(nu + 1, x) - base);
      worst = std::max(worst, std::abs(lhs - 2 * nu / x) / (2 * nu / x));
    }
  c.require(worst < 1e-9, "Bessel recurrence residual " + fmt(worst));
  c.note("4 (k, lambda) tuples, recurrence residual " + fmt(worst));
}

void focal_expectation_check(Check& c) {
  const int draws = 1000000;
  double worst = 0.0;
  std::uint64_t seed = 41;
  for (const Chi2Spec spec : {Chi2Spec{2, 0}, Chi2Spec{4, 2}, Chi2Spec{16, 8}, Chi2Spec{256, 10}}) {
    // χ²(k, λ) = (Z + √λ)² + χ²(k - 1), drawn with the standard library
    std::mt19937_64 eng(seed++);
    std::normal_distribution<double> z;
    std::gamma_distribution<double> rest(0.5 * (spec.k - 1.0), 2.0);
    const double scale = block_loss_scale(spec);
    std::array<double, 4> sums{};
    for (int d = 0; d < draws; ++d) {
      const double shifted = z(eng) + std::sqrt(spec.lambda_nc);
      const double x = shifted * shifted + rest(eng);
      const double l = std::clamp(x / scale, 1e-6, 1.0 - 1e-6);
      sums[0] += -std::log(l);
      sums[1] += -(1 - l) * (1 - l) * std::log(l);
      sums[2] += -std::log(1 - l);
      sums[3] += -l * l * std::log(1 - l);
    }
    const std::array<std::pair<double, FocalVariant>, 4> cases{
        std::pair{0.0, FocalVariant::paper}, {2.0, FocalVariant::paper}, {0.0, FocalVariant::complement},
        {2.0, FocalVariant::complement}};
    for (std::size_t i = 0; i < 4; ++i) {
      const double q = -focal_expectation(spec, cases[i].first, cases[i].second);
      const double mc = sums[i] / draws;
      const double rel = std::abs(q / mc - 1.0);
      worst = std::max(worst, rel);
      c.require(rel <= 0.01, "(" + fmt(spec.k) + "," + fmt(spec.lambda_nc) + ") gamma " + fmt(cases[i].first) + " " +
                                 std::string(to_string(cases[i].second)) + " off by " + fmt(rel));
    }
  }
  c.note("16 comparisons, worst relative gap " + fmt(worst));
}

void gradients(Check& c) {
  Rng rng(505);
  double worst = 0.0;
  for (int m = 0; m < 5; ++m) {
    const ToyModel model = random_model(4, 3, 5, 600 + m);
    const PatchGrid x = random_patches(4, 3, rng);
    for (FocalVariant v : {FocalVariant::paper, FocalVariant::complement}) {
      LossConfig cfg;
      cfg.variant = v;
      const ScalingTable table = build_scaling_table(std::vector<double>{0.5, 0.0}, Chi2Spec{9, 0}, cfg);
      for (double r : {0.5, 0.0}) {
        const MaskPlan plan = r > 0 ? sample_mask(4, r, rng) : MaskPlan::none(4);
        worst = std::max(worst, toy_gradient_error(model, x, plan, {cfg, &table, LossObjective::scaled_focal}, rng));
      }
    }
    worst = std::max(worst, toy_gradient_error(model, x, sample_mask(4, 0.5, rng),
                                               {LossConfig{}, nullptr, LossObjective::masked_mean}, rng));
    worst = std::max(worst, gmu_gradient_error(rng));
  }
  c.require(worst < 1e-4, "gradient relative error " + fmt(worst));
  c.note("5 models, 20 coordinates per tensor, worst relative error " + fmt(worst));
}

void case_behavior(Check& c) {
  const std::vector<PatchGrid> data = centered_dataset(200, 64, 8, 7);
  TrainState s;
  s.model = random_model(8, 8, 64, 1);
  s.lr = 30.0;
  s.seed = 3;
  s.schedule.levels = {0.3};
  s.objective = LossObjective::masked_mean;
  const CaseErrors before = case_error_report(s.model, data, 0.3, 3, 11);
  const double untrained = *before.e[1] / *before.e[0];
  train(s, data, 10);
  const CaseErrors after = case_error_report(s.model, data, 0.3, 3, 11);
  c.require(s.step == 2000, "trained for " + std::to_string(s.step) + " steps");
  c.require(*after.e[1] < 0.5 * *after.e[0], "trained e2/e1 = " + fmt(*after.e[1] / *after.e[0]));
  c.require(untrained >= 0.8 && untrained <= 1.25, "untrained e2/e1 = " + fmt(untrained));
  c.note("untrained e2/e1 " + fmt(untrained) + ", trained e2/e1 " + fmt(*after.e[1] / *after.e[0]) + " (e1 " +
         fmt(*after.e[0]) + ", e2 " + fmt(*after.e[1]) + ")");
}

void dynamic_ratio(Check& c) {
  const std::vector<PatchGrid> data = centered_dataset(200, 64, 8, 7);
  const LossConfig cfg;
  const std::vector<double> levels{0.3, 0.15, 0.0};
  const ScalingTable table = build_scaling_table(levels, Chi2Spec{256, 0}, cfg);
  int wins = 0;
  std::string detail;
  for (int seed = 0; seed < 3; ++seed) {
    double e_global[2];
    for (int arm = 0; arm < 2; ++arm) {
      TrainState s;
      s.model = random_model(8, 8, 64, 100 + seed);
      s.lr = 30.0;
      s.seed = 50 + seed;
      s.cfg = cfg;
      s.table = table;
      s.schedule.levels = arm == 0 ? levels : std::vector<double>{0.3};
      s.schedule.seed = 70 + seed;
      train(s, data, 10);
      e_global[arm] = case_error_report(s.model, data, 0.3, 2, 11).e_global;
    }
    if (e_global[0] < e_global[1]) ++wins;
    detail += " seed " + std::to_string(seed) + ": " + fmt(e_global[0]) + " vs " + fmt(e_global[1]) + ",";
  }
  c.require(wins >= 2, "dynamic run won " + std::to_string(wins) + "/3");
  c.note("dynamic beats fixed in " + std::to_string(wins) + "/3 (e_global dynamic vs fixed:" + detail + ")");
}

void robust_fit(Check& c) {
  int wins = 0;
  for (int k = 0; k < 20; ++k) {
    Rng rng(1000 + k);
    const PlantedInstance inst = planted_instance(rng, 400, 400, 20);
    const RhoReport rep = run_rho_pipeline(inst.set);
    const Vector ols = least_squares(inst.set.features, inst.set.label_vector());
    if (angle_to(rep.fit.u_star, inst.normal) < angle_to(ols, inst.normal)) ++wins;
  }
  c.require(wins >= 15, "robust U* closer than OLS in " + std::to_string(wins) + "/20 (need 15)");

  double worst = 0.0;
  for (int k = 0; k < 5; ++k) {
    Rng rng(2000 + k);
    const PlantedInstance inst = planted_instance(rng, 100, 100, 0);
    const RobustFit fit = fit_hyperplane(inst.set, Vector(100, 0.0), 1.0);
    const Vector ols = least_squares(inst.set.features, inst.set.label_vector());
    for (std::size_t j = 0; j < ols.size(); ++j) worst = std::max(worst, std::abs(fit.u_star[j] - ols[j]));
  }
  c.require(worst <= 1e-8, "zero-outlier fit differs from OLS by " + fmt(worst));
  c.note("robust wins " + std::to_string(wins) + "/20, zero-outlier max |U* - OLS| " + fmt(worst));
}

void solver_equivalence(Check& c) {
  Rng rng(77);
  double worst_obj = 0.0, worst_kkt = 0.0;
  for (int k = 0; k < 10; ++k) {
    const std::size_t n = 20 + 2 * k;
    const FeatureSet fs = small_instance(rng, n, 3);
    const ResidualDesign rd = residualize(fs);
    const double lam = 0.3 * theta_zero_threshold(rd);
    const ThetaFit cd = fit_theta(rd, lam, ThetaSolver::cd);
    const ThetaFit pw = fit_theta(rd, lam, ThetaSolver::powell);
    worst_obj = std::max(worst_obj, std::abs(cd.objective - pw.objective));

    const LassoResult lasso = lasso_cd(rd.design, rd.l_tilde, lam);
    Vector resid = rd.design * lasso.coef;
    for (std::size_t i = 0; i < resid.size(); ++i) resid[i] -= rd.l_tilde[i];
    const Vector g = rd.design.transposed() * resid;
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double u = lasso.coef[j];
      const double viol = u != 0.0 ? std::abs(g[j] + lam * (u > 0 ? 1.0 : -1.0)) : std::max(0.0, std::abs(g[j]) - lam);
      worst_kkt = std::max(worst_kkt, viol);
    }
  }
  c.require(worst_obj <= 1e-3, "Powell vs CD objective gap " + fmt(worst_obj));
  c.require(worst_kkt <= 1e-6, "KKT residual " + fmt(worst_kkt));
  c.note("10 instances, objective gap " + fmt(worst_obj) + ", KKT residual " + fmt(worst_kkt));
}

void rho_fixture(Check& c) {
  const double rho = rho_index(rho_fixture_1d(), unit_fit(1)).rho;
  c.require(std::abs(rho - 2.0 / 3.0) <= 1e-6, "fixture rho " + fmt(rho, 10));

  double worst_rot = 0.0;
  Rng rng(88);
  for (int k = 0; k < 3; ++k) {
    FeatureSet fs = cluster_sweep_instance(2.0, 300 + k);
    const double base = run_rho_pipeline(fs).rho;
    fs.features = rotate_rows(fs.features, random_orthogonal(fs.dims(), rng));
    worst_rot = std::max(worst_rot, std::abs(run_rho_pipeline(fs).rho - base));
  }
  c.require(worst_rot <= 1e-6, "rotation changes rho by " + fmt(worst_rot));

  std::vector<double> sweep;
  for (double gap : {1.0, 2.0, 3.0, 4.0, 5.0}) sweep.push_back(run_rho_pipeline(cluster_sweep_instance(gap, 400)).rho);
  bool decreasing = true;
  std::string seq;
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    if (i > 0 && !(sweep[i] < sweep[i - 1])) decreasing = false;
    seq += (i ? " > " : "") + fmt(sweep[i], 3);
  }
  c.require(decreasing, "sweep not strictly decreasing: " + seq);
  c.note("rho " + fmt(rho, 8) + ", rotation gap " + fmt(worst_rot) + ", sweep " + seq);
}

void numerics(Check& c) {
  Rng rng(99);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const std::size_t rows = 2 + rng.below(9), cols = 2 + rng.below(9);
    const std::size_t rank = k % 2 == 0 ? std::min(rows, cols) : 1 + rng.below(std::min(rows, cols));
    const Matrix a = low_rank_matrix(rows, cols, rank, rng);
    const Matrix p = pinv(a);
    const double na = std::max(1.0, a.frobenius_norm()), np = std::max(1.0, p.frobenius_norm());
    worst = std::max({worst, max_diff(a * p * a, a) / na, max_diff(p * a * p, p) / np,
                      max_diff((a * p).transposed(), a * p), max_diff((p * a).transposed(), p * a)});
  }
  c.require(worst <= 1e-8, "Penrose residual " + fmt(worst));

  const Objective rosen = [](std::span<const double> x) {
    return 100 * (x[1] - x[0] * x[0]) * (x[1] - x[0] * x[0]) + (1 - x[0]) * (1 - x[0]);
  };
  PowellConfig cfg;
  cfg.max_iters = 2000;
  const PowellResult r = powell_minimize(rosen, {-1.2, 1.0}, cfg);
  c.require(r.f < 1e-8, "Rosenbrock f* = " + fmt(r.f));
  c.note("50 matrices, Penrose residual " + fmt(worst) + ", Rosenbrock f* " + fmt(r.f));
}

void determinism(Check& c) {
#ifdef FREQLENS_CLI
  TempDir dir("acceptance");
  write_text(dir / "c.json", R"({"version": 1, "seed": 12,
    "data": {"synthetic": {"count": 4, "side": 32, "seed": 2}},
    "model": {"patch": 4, "dim": 16}, "train": {"lr": 0.3, "epochs": 5}})");
  for (const char* run : {"a", "b"}) {
    const auto res = run_command(std::string(FREQLENS_CLI) + " pretrain -c '" + (dir / "c.json").string() + "' -o '" +
                                 (dir / run).string() + "'");
    c.require(res.exit_code == 0, std::string("pretrain run ") + run + " exited " + std::to_string(res.exit_code));
  }
  const std::string a = read_text(dir / "a" / "checkpoint.ffit");
  c.require(!a.empty() && a == read_text(dir / "b" / "checkpoint.ffit"), "checkpoints differ");

  const ToyModel model = read_checkpoint(dir / "a" / "checkpoint.ffit");
  write_checkpoint(dir / "again.ffit", model);
  c.require(read_text(dir / "again.ffit") == a, "checkpoint re-encode differs");
  c.require(read_checkpoint(dir / "again.ffit") == model, "checkpoint decode differs");

  MagnitudeGrid grid = synthetic_spectra(1, 32, 5).front();
  for (double& v : grid.values) v = static_cast<float>(v);
  write_flsg(dir / "g.flsg", grid);
  const MagnitudeGrid back = read_flsg(dir / "g.flsg");
  c.require(back.values == grid.values, "FLSG values differ after round trip");
  c.require(encode_flsg(back) == encode_flsg(grid), "FLSG re-encode differs");
  c.note("checkpoint " + std::to_string(a.size()) + " bytes identical across runs, FLSG and checkpoint round-trips exact");
#else
  c.require(false, "built without the command-line tool");
#endif
}

}  // namespace

int main() {
  criterion(1, "case combinatorics", 5, combinatorics);
  criterion(2, "mixture coefficient", 1, coefficient);
  criterion(3, "special functions", 30, special_functions);
  criterion(4, "focal expectation", 120, focal_expectation_check);
  criterion(5, "gradients", 60, gradients);
  criterion(6, "case behavior", 600, case_behavior);
  criterion(7, "dynamic ratio benefit", 1800, dynamic_ratio);
  criterion(8, "robust hyperplane fit", 120, robust_fit);
  criterion(9, "solver equivalence", 120, solver_equivalence);
  criterion(10, "rho fixture and sweep", 60, rho_fixture);
  criterion(11, "numerics kernels", 60, numerics);
  criterion(12, "determinism", 300, determinism);
  std::printf("acceptance: %d of 12 criteria passed\n", 12 - failures);
  return failures == 0 ? 0 : 1;
}
