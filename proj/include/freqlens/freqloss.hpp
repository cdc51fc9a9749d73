#pragma once

// Masked-spectrum reconstruction losses: block losses, case-balanced focal
// loss, the all-visible mean loss, and expectation scaling across mask ratios.

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "freqlens/loss_config.hpp"
#include "freqlens/masking.hpp"
#include "freqlens/spectra.hpp"
#include "freqlens/specstats.hpp"

namespace freqlens {

/// Squared reconstruction error of tile (i, j): summed over the w×w tile, or
/// divided by w² for BlockNorm::mean.
inline double block_loss(const PatchGrid& x, const PatchGrid& x_rec, std::size_t i, std::size_t j,
                         BlockNorm norm = BlockNorm::sum) {
  if (!x.same_shape(x_rec)) throw std::invalid_argument("block_loss: shape mismatch");
  if (i >= x.n || j >= x.n) throw std::out_of_range("block_loss: block index out of range");
  const auto a = x.block(i, j);
  const auto b = x_rec.block(i, j);
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return norm == BlockNorm::mean ? s / static_cast<double>(a.size()) : s;
}

/// All n² block losses in token order.
inline std::vector<double> block_losses(const PatchGrid& x, const PatchGrid& x_rec, BlockNorm norm) {
  if (!x.same_shape(x_rec)) throw std::invalid_argument("block_losses: shape mismatch");
  std::vector<double> out(x.tile_count());
  for (std::size_t i = 0; i < x.n; ++i)
    for (std::size_t j = 0; j < x.n; ++j) out[i * x.n + j] = block_loss(x, x_rec, i, j, norm);
  return out;
}

struct CaseWeights {
  std::array<double, 3> alpha{};
  std::array<double, 3> p{};
  double r = 0.0;
};

/// P_t = (r², 2r(1-r), (1-r)²) and α_t = (1/P_t) / Σ_k 1/P_k.
inline CaseWeights case_weights(double r) {
  if (!(r > 0.0 && r < 1.0)) throw std::invalid_argument("case_weights: ratio must lie in (0, 1)");
  CaseWeights w;
  w.r = r;
  w.p = {r * r, 2.0 * r * (1.0 - r), (1.0 - r) * (1.0 - r)};
  const double inv_sum = 1.0 / w.p[0] + 1.0 / w.p[1] + 1.0 / w.p[2];
  for (std::size_t t = 0; t < 3; ++t) w.alpha[t] = (1.0 / w.p[t]) / inv_sum;
  return w;
}

/// Σ_t P_t·α_t in closed form.
inline double case_mixture_coefficient(double r, CoefficientMode mode) {
  if (!(r > 0.0 && r < 1.0))
    throw std::invalid_argument("case_mixture_coefficient: ratio must lie in (0, 1)");
  const double numerator = r * r * (1.0 - r) * (1.0 - r);
  const double denominator = 3.0 * r * r - 3.0 * r + 2.0;
  return (mode == CoefficientMode::paper ? 3.0 : 6.0) * numerator / denominator;
}

/// d g / d L for the focal term g of focal_term().
inline double focal_term_derivative(double l, double gamma, FocalVariant variant) {
  if (variant == FocalVariant::paper) {
    const double lead = gamma == 0.0 ? 0.0 : -gamma * std::pow(1.0 - l, gamma - 1.0) * std::log(l);
    return lead + std::pow(1.0 - l, gamma) / l;
  }
  const double lead = gamma == 0.0 ? 0.0 : gamma * std::pow(l, gamma - 1.0) * std::log1p(-l);
  return lead - std::pow(l, gamma) / (1.0 - l);
}

enum class LossObjective {
  scaled_focal,  ///< focal loss for r > 0, mean loss for r = 0, divided by E[L | r]
  masked_mean,   ///< mean block loss over masked blocks only (classic MAE)
};

/// Full evaluation of one sample's loss, with per-case contributions and,
/// on request, the gradient with respect to the reconstruction.
struct LossEvaluation {
  double raw = 0.0;                       ///< loss before expectation scaling
  double scaled = 0.0;                    ///< raw / E[L | r] (== raw for masked_mean)
  std::array<double, 3> case_loss{};      ///< contributions to `raw` by masking case
  std::size_t clamped_blocks = 0;         ///< blocks at a clamp boundary (zero gradient)
  std::optional<PatchGrid> grad;          ///< d scaled / d x_rec
};

namespace detail {

inline void check_plan(const PatchGrid& x, const PatchGrid& x_rec, const MaskPlan& plan) {
  if (!x.same_shape(x_rec)) throw std::invalid_argument("loss: reconstruction shape mismatch");
  if (plan.n() != x.n) throw std::invalid_argument("loss: mask plan does not match patch grid");
}

}  // namespace detail

inline LossEvaluation evaluate_loss(const PatchGrid& x, const PatchGrid& x_rec, const MaskPlan& plan,
                                    const LossConfig& cfg, const ScalingTable* table,
                                    LossObjective objective, bool want_grad) {
  cfg.validate();
  detail::check_plan(x, x_rec, plan);
  const std::size_t tokens = x.tile_count();
  const double tile = static_cast<double>(x.tile_size());
  const auto n2 = static_cast<double>(tokens);

  LossEvaluation ev;
  // per-block d raw / d (block loss in the norm that was used)
  std::vector<double> dblock(tokens, 0.0);
  BlockNorm grad_norm = BlockNorm::mean;

  if (objective == LossObjective::masked_mean) {
    std::size_t masked = 0;
    for (std::size_t p = 0; p < tokens; ++p) masked += plan.masked_token(p) ? 1 : 0;
    if (masked > 0) {
      for (std::size_t p = 0; p < tokens; ++p) {
        if (!plan.masked_token(p)) continue;
        const double l = block_loss(x, x_rec, p / x.n, p % x.n, BlockNorm::mean) / static_cast<double>(masked);
        ev.raw += l;
        ev.case_loss[case_index(plan.case_of_token(p))] += l;
        dblock[p] = 1.0 / static_cast<double>(masked);
      }
    }
  } else if (plan.ratio() == 0.0) {
    grad_norm = cfg.block_norm;
    for (std::size_t p = 0; p < tokens; ++p) {
      const double l = block_loss(x, x_rec, p / x.n, p % x.n, cfg.block_norm) / n2;
      ev.raw += l;
      ev.case_loss[case_index(plan.case_of_token(p))] += l;
      dblock[p] = 1.0 / n2;
    }
  } else {
    const CaseWeights weights = case_weights(plan.ratio());
    for (std::size_t p = 0; p < tokens; ++p) {
      const double raw_l = block_loss(x, x_rec, p / x.n, p % x.n, BlockNorm::mean);
      const double l = clamp_unit(raw_l, cfg.clamp_eps);
      const double alpha = weights.alpha[case_index(plan.case_of_token(p))];
      const double term = -alpha * focal_term(l, cfg.gamma, cfg.variant) / n2;
      ev.raw += term;
      ev.case_loss[case_index(plan.case_of_token(p))] += term;
      if (raw_l <= cfg.clamp_eps || raw_l >= 1.0 - cfg.clamp_eps) {
        ++ev.clamped_blocks;
      } else {
        dblock[p] = -alpha * focal_term_derivative(l, cfg.gamma, cfg.variant) / n2;
      }
    }
  }

  // without a table the scaled value is the raw loss
  double divisor = 1.0;
  if (objective == LossObjective::scaled_focal && table != nullptr) divisor = table->at(plan.ratio());
  ev.scaled = ev.raw / divisor;
  if (!std::isfinite(ev.scaled)) throw std::runtime_error("loss: non-finite value");

  if (want_grad) {
    PatchGrid g(x.n, x.w);
    for (std::size_t p = 0; p < tokens; ++p) {
      if (dblock[p] == 0.0) continue;
      const double factor = dblock[p] / divisor * (grad_norm == BlockNorm::mean ? 2.0 / tile : 2.0);
      auto gt = g.token(p);
      const auto xt = x.token(p);
      const auto yt = x_rec.token(p);
      for (std::size_t k = 0; k < gt.size(); ++k) gt[k] = factor * (yt[k] - xt[k]);
    }
    ev.grad = std::move(g);
  }
  return ev;
}

/// -(1/N²) Σ α_t · g(L̂) over all blocks, L̂ the clamped mean block loss.
inline double focal_loss(const PatchGrid& x, const PatchGrid& x_rec, const MaskPlan& plan,
                         const LossConfig& cfg) {
  if (!(plan.ratio() > 0.0)) throw std::invalid_argument("focal_loss: ratio is 0, use mean_loss");
  return evaluate_loss(x, x_rec, plan, cfg, nullptr, LossObjective::scaled_focal, false).raw;
}

/// (1/N²) Σ block losses with cfg.block_norm.
inline double mean_loss(const PatchGrid& x, const PatchGrid& x_rec, const LossConfig& cfg) {
  if (!x.same_shape(x_rec)) throw std::invalid_argument("mean_loss: shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < x.n; ++i)
    for (std::size_t j = 0; j < x.n; ++j) total += block_loss(x, x_rec, i, j, cfg.block_norm);
  return total / static_cast<double>(x.tile_count());
}

/// Focal (r > 0) or mean (r = 0) loss divided by the table's E[L | r].
inline double scaled_batch_loss(const PatchGrid& x, const PatchGrid& x_rec, const MaskPlan& plan,
                                const LossConfig& cfg, const ScalingTable& table) {
  if (!table.contains(plan.ratio()))
    throw std::out_of_range("scaled_batch_loss: ratio missing from scaling table");
  return evaluate_loss(x, x_rec, plan, cfg, &table, LossObjective::scaled_focal, false).scaled;
}

}  // namespace freqlens
