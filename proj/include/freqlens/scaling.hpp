#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "freqlens/freqloss.hpp"
#include "freqlens/specstats.hpp"

namespace freqlens {

/// E[L | r] for each ratio level under the χ² block-loss model.
///
/// r > 0: -coefficient(r) · E[g(L̂)], g the focal term of cfg.variant.
/// r = 0: E[L̂], matching the mean loss used when nothing is masked.
inline ScalingTable build_scaling_table(std::span<const double> levels, const Chi2Spec& spec,
                                        const LossConfig& cfg) {
  cfg.validate();
  spec.validate();
  if (levels.empty()) throw std::invalid_argument("build_scaling_table: no levels");
  ScalingTable table;
  table.chi2 = spec;
  table.gamma = cfg.gamma;
  table.coefficient_mode = cfg.coefficient_mode;
  table.variant = cfg.variant;
  table.clamp_eps = cfg.clamp_eps;

  double focal = 0.0;
  bool have_focal = false;
  for (double r : levels) {
    if (!(r >= 0.0 && r < 1.0))
      throw std::invalid_argument("build_scaling_table: ratio " + std::to_string(r) + " outside [0, 1)");
    double entry;
    if (r == 0.0) {
      entry = expected_block_loss(spec, cfg.clamp_eps);
    } else {
      if (!have_focal) {
        focal = focal_expectation(spec, cfg.gamma, cfg.variant, cfg.clamp_eps);
        have_focal = true;
      }
      entry = std::abs(-case_mixture_coefficient(r, cfg.coefficient_mode) * focal);
    }
    if (!(entry > 0.0) || !std::isfinite(entry))
      throw std::runtime_error("build_scaling_table: entry for ratio " + std::to_string(r) + " underflows to 0");
    table.entries[r] = entry;
  }
  return table;
}

/// Method-of-moments noncentrality with k held fixed:
///   λ = max(mean(sample) · scale - k, 0),
/// where `scale` maps the observed losses back to unit-variance χ² units.
inline Chi2Spec estimate_chi2_spec(std::span<const double> block_losses, double k_fixed, double scale = 1.0) {
  if (block_losses.empty()) throw std::invalid_argument("estimate_chi2_spec: empty sample");
  if (!(k_fixed > 0.0)) throw std::invalid_argument("estimate_chi2_spec: k must be positive");
  if (!(scale > 0.0)) throw std::invalid_argument("estimate_chi2_spec: scale must be positive");
  double mean = 0.0;
  for (double v : block_losses) mean += v;
  mean /= static_cast<double>(block_losses.size());
  return {k_fixed, std::max(mean * scale - k_fixed, 0.0)};
}

}  // namespace freqlens
