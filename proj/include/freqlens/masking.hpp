#pragma once

// Patch masks, centrosymmetric counterparts and masking-case labels.
//
// A patch (i, j) on an n×n grid pairs with (n-1-i, n-1-j), its point mirror
// about the grid center. Every patch falls into exactly one case:
//   case 1: masked, counterpart masked
//   case 2: masked, counterpart visible
//   case 3: visible

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "freqlens/rng.hpp"

namespace freqlens {

enum class MaskCase : std::uint8_t { both_masked = 1, counterpart_visible = 2, visible = 3 };

inline std::size_t case_index(MaskCase c) { return static_cast<std::size_t>(c) - 1; }

inline std::pair<std::size_t, std::size_t> counterpart(std::size_t i, std::size_t j, std::size_t n) {
  if (i >= n || j >= n) throw std::out_of_range("counterpart: patch index out of range");
  return {n - 1 - i, n - 1 - j};
}

/// Flat-token form of counterpart(): p = i·n + j maps to n² - 1 - p.
inline std::size_t counterpart_token(std::size_t p, std::size_t n) {
  if (p >= n * n) throw std::out_of_range("counterpart_token: token out of range");
  return n * n - 1 - p;
}

class MaskPlan {
public:
  MaskPlan() = default;

  /// Builds a plan from explicit mask bits (row-major, n·n entries).
  MaskPlan(std::size_t n, std::vector<bool> masked, double ratio)
      : n_(n), ratio_(ratio), masked_(std::move(masked)) {
    if (masked_.size() != n_ * n_) throw std::invalid_argument("MaskPlan: mask size != n*n");
    classify();
  }

  static MaskPlan none(std::size_t n) { return MaskPlan(n, std::vector<bool>(n * n, false), 0.0); }
  static MaskPlan all(std::size_t n) { return MaskPlan(n, std::vector<bool>(n * n, true), 1.0); }

  std::size_t n() const { return n_; }
  double ratio() const { return ratio_; }
  bool masked(std::size_t i, std::size_t j) const { return masked_[i * n_ + j]; }
  bool masked_token(std::size_t p) const { return masked_[p]; }
  MaskCase case_of(std::size_t i, std::size_t j) const { return cases_[i * n_ + j]; }
  MaskCase case_of_token(std::size_t p) const { return cases_[p]; }
  const std::vector<bool>& mask_bits() const { return masked_; }

  friend bool operator==(const MaskPlan&, const MaskPlan&) = default;

private:
  void classify() {
    cases_.resize(masked_.size());
    for (std::size_t p = 0; p < masked_.size(); ++p) {
      if (!masked_[p])
        cases_[p] = MaskCase::visible;
      else if (masked_[counterpart_token(p, n_)])
        cases_[p] = MaskCase::both_masked;
      else
        cases_[p] = MaskCase::counterpart_visible;
    }
  }

  std::size_t n_ = 0;
  double ratio_ = 0.0;
  std::vector<bool> masked_;
  std::vector<MaskCase> cases_;
};

enum class MaskSampling {
  bernoulli,    ///< each patch masked independently with probability r
  fixed_count,  ///< exactly round(r·n²) patches masked, uniformly chosen
};

inline MaskPlan sample_mask(std::size_t n, double r, Rng& rng,
                            MaskSampling mode = MaskSampling::bernoulli) {
  if (n == 0 || n % 2 != 0) throw std::invalid_argument("sample_mask: n must be even and positive");
  if (!(r >= 0.0 && r < 1.0)) throw std::invalid_argument("sample_mask: ratio must lie in [0, 1)");
  const std::size_t total = n * n;
  std::vector<bool> bits(total, false);
  if (mode == MaskSampling::bernoulli) {
    for (std::size_t p = 0; p < total; ++p) bits[p] = rng.bernoulli(r);
  } else {
    const auto count = static_cast<std::size_t>(std::llround(r * static_cast<double>(total)));
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    // partial Fisher-Yates
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t pick = k + static_cast<std::size_t>(rng.below(total - k));
      std::swap(order[k], order[pick]);
      bits[order[k]] = true;
    }
  }
  return MaskPlan(n, std::move(bits), r);
}

/// Per-patch counts for cases 1, 2, 3; they sum to n².
inline std::array<std::size_t, 3> case_counts(const MaskPlan& plan) {
  std::array<std::size_t, 3> counts{0, 0, 0};
  for (std::size_t p = 0; p < plan.n() * plan.n(); ++p) ++counts[case_index(plan.case_of_token(p))];
  return counts;
}

/// Counterpart pairs with both, exactly one, or neither patch masked; they
/// sum to n²/2 and follow (r², 2r(1-r), (1-r)²) under Bernoulli masking.
inline std::array<std::size_t, 3> pair_type_counts(const MaskPlan& plan) {
  std::array<std::size_t, 3> counts{0, 0, 0};
  const std::size_t total = plan.n() * plan.n();
  for (std::size_t p = 0; p < total / 2; ++p) {
    const int masked = static_cast<int>(plan.masked_token(p)) +
                       static_cast<int>(plan.masked_token(counterpart_token(p, plan.n())));
    ++counts[2 - masked];
  }
  return counts;
}

struct RatioSchedule {
  std::vector<double> levels{0.3, 0.15, 0.0};
  std::uint64_t seed = 0;

  void validate() const {
    if (levels.empty()) throw std::invalid_argument("RatioSchedule: no levels");
    for (double r : levels)
      if (!(r >= 0.0 && r < 1.0)) throw std::invalid_argument("RatioSchedule: level outside [0, 1)");
  }
};

/// One level per batch, drawn uniformly from the batch's own stream.
inline double next_ratio(const RatioSchedule& schedule, std::uint64_t batch_index) {
  schedule.validate();
  if (schedule.levels.size() == 1) return schedule.levels.front();
  Rng rng = Rng::stream(schedule.seed ^ 0x5241'5449'4F00'0000ULL, batch_index);
  return schedule.levels[rng.below(schedule.levels.size())];
}

/// Expected pair counts E_t = n²/2 · {r², 2r(1-r), (1-r)²}.
inline std::array<double, 3> expected_pair_counts(std::size_t n, double r) {
  const double half = static_cast<double>(n * n) / 2.0;
  return {half * r * r, half * 2.0 * r * (1.0 - r), half * (1.0 - r) * (1.0 - r)};
}

}  // namespace freqlens
