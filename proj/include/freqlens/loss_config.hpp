#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace freqlens {

/// Which focal form is applied to a clamped block loss L in (0, 1).
enum class FocalVariant {
  paper,       ///< -(1 - L)^γ · log L, minimized as L -> 1
  complement,  ///< -L^γ · log(1 - L), minimized as L -> 0
};

/// Closed form used for Σ_t P_t·α_t.
enum class CoefficientMode {
  paper,    ///< 3r²(1-r)² / (3r² - 3r + 2)
  derived,  ///< 6r²(1-r)² / (3r² - 3r + 2), the exact value of Σ_t P_t·α_t
};

enum class BlockNorm { sum, mean };

struct LossConfig {
  double gamma = 2.0;
  double clamp_eps = 1e-6;
  FocalVariant variant = FocalVariant::complement;
  CoefficientMode coefficient_mode = CoefficientMode::derived;
  BlockNorm block_norm = BlockNorm::mean;

  void validate() const {
    if (!(gamma >= 0.0)) throw std::invalid_argument("LossConfig: gamma must be >= 0");
    if (!(clamp_eps > 0.0 && clamp_eps < 0.5))
      throw std::invalid_argument("LossConfig: clamp_eps must lie in (0, 0.5)");
  }
};

inline std::string_view to_string(FocalVariant v) {
  return v == FocalVariant::paper ? "paper" : "complement";
}
inline std::string_view to_string(CoefficientMode m) {
  return m == CoefficientMode::paper ? "paper" : "derived";
}
inline std::string_view to_string(BlockNorm n) { return n == BlockNorm::sum ? "sum" : "mean"; }

inline FocalVariant parse_focal_variant(std::string_view s) {
  if (s == "paper") return FocalVariant::paper;
  if (s == "complement") return FocalVariant::complement;
  throw std::invalid_argument("unknown focal variant: " + std::string(s));
}
inline CoefficientMode parse_coefficient_mode(std::string_view s) {
  if (s == "paper") return CoefficientMode::paper;
  if (s == "derived") return CoefficientMode::derived;
  throw std::invalid_argument("unknown coefficient mode: " + std::string(s));
}
inline BlockNorm parse_block_norm(std::string_view s) {
  if (s == "sum") return BlockNorm::sum;
  if (s == "mean") return BlockNorm::mean;
  throw std::invalid_argument("unknown block norm: " + std::string(s));
}

}  // namespace freqlens
