#pragma once

// Linear masked spectrum autoencoder: tokens -> embed -> token mix -> decode.
// Gradients are written out by hand.

#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "freqlens/freqloss.hpp"
#include "freqlens/image_io.hpp"
#include "freqlens/masking.hpp"
#include "freqlens/matrix.hpp"
#include "freqlens/numopt.hpp"
#include "freqlens/rng.hpp"
#include "freqlens/spectra.hpp"
#include "freqlens/specstats.hpp"

namespace freqlens {

struct ToyModel {
  std::size_t n = 0;   ///< patches per side
  std::size_t w = 0;   ///< pixels per patch side
  std::size_t d = 0;   ///< embedding width
  Matrix embed;        ///< d × w²
  Matrix mix;          ///< n² × n²
  Matrix dec;          ///< w² × d
  Vector mask_token;   ///< w²

  ToyModel() = default;
  ToyModel(std::size_t patches, std::size_t width, std::size_t dim)
      : n(patches), w(width), d(dim), embed(dim, width * width), mix(patches * patches, patches * patches),
        dec(width * width, dim), mask_token(width * width, 0.0) {}

  std::size_t tokens() const { return n * n; }
  std::size_t tile() const { return w * w; }

  void validate() const {
    if (n == 0 || w == 0 || d == 0 || n % 2 != 0) throw std::invalid_argument("ToyModel: bad geometry");
    if (embed.rows() != d || embed.cols() != tile() || mix.rows() != tokens() || mix.cols() != tokens() ||
        dec.rows() != tile() || dec.cols() != d || mask_token.size() != tile())
      throw std::invalid_argument("ToyModel: inconsistent parameter shapes");
    if (!embed.all_finite() || !mix.all_finite() || !dec.all_finite())
      throw std::invalid_argument("ToyModel: non-finite parameters");
    for (double v : mask_token)
      if (!std::isfinite(v)) throw std::invalid_argument("ToyModel: non-finite mask token");
  }

  /// Visits the four parameter tensors as flat arrays, in checkpoint order.
  template <class F>
  void for_each_tensor(F&& f) {
    f("embed", std::span<double>(embed.data()));
    f("mix", std::span<double>(mix.data()));
    f("dec", std::span<double>(dec.data()));
    f("mask_token", std::span<double>(mask_token));
  }
  template <class F>
  void for_each_tensor(F&& f) const {
    f("embed", std::span<const double>(embed.data()));
    f("mix", std::span<const double>(mix.data()));
    f("dec", std::span<const double>(dec.data()));
    f("mask_token", std::span<const double>(mask_token));
  }

  friend bool operator==(const ToyModel&, const ToyModel&) = default;
};

/// Gaussian init: embed ~ N(0, 1/w²), mix ~ N(0, 1/n²), dec ~ N(0, 1/d),
/// mask token at zero.
inline ToyModel random_model(std::size_t n, std::size_t w, std::size_t d, std::uint64_t seed) {
  ToyModel m(n, w, d);
  m.validate();
  Rng rng(seed, 0x4d4f44454cULL);
  const double se = 1.0 / static_cast<double>(w);
  const double sm = 1.0 / static_cast<double>(n);
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  for (double& v : m.embed.data()) v = rng.normal(0.0, se);
  for (double& v : m.mix.data()) v = rng.normal(0.0, sm);
  for (double& v : m.dec.data()) v = rng.normal(0.0, sd);
  return m;
}

/// embed a random partial isometry, dec = pinv(embed), mix = I: reconstructs
/// unmasked input exactly when d ≥ w².
inline ToyModel identity_model(std::size_t n, std::size_t w, std::size_t d, std::uint64_t seed) {
  ToyModel m = random_model(n, w, d, seed);
  const Svd s = svd(m.embed);
  m.embed = s.u * s.v.transposed();
  m.dec = pinv(m.embed);
  m.mix = Matrix::identity(n * n);
  return m;
}

struct ForwardCache {
  Matrix tokens;  ///< n² × w², masked rows replaced by the mask token
  Matrix embedded;  ///< n² × d
  Matrix mixed;   ///< n² × d
};

namespace detail {

inline void check_inputs(const ToyModel& model, const PatchGrid& patches, const MaskPlan& plan) {
  if (patches.n != model.n || patches.w != model.w)
    throw std::invalid_argument("toymae: patch grid does not match the model");
  if (plan.n() != model.n) throw std::invalid_argument("toymae: mask plan does not match the model");
}

inline Matrix token_matrix(const ToyModel& model, const PatchGrid& patches, const MaskPlan& plan) {
  Matrix t(model.tokens(), model.tile());
  for (std::size_t p = 0; p < model.tokens(); ++p) {
    const std::span<const double> src = plan.masked_token(p) ? std::span<const double>(model.mask_token)
                                                             : patches.token(p);
    std::copy(src.begin(), src.end(), t.row(p).begin());
  }
  return t;
}

}  // namespace detail

inline PatchGrid forward(const ToyModel& model, const PatchGrid& patches, const MaskPlan& plan,
                         ForwardCache* cache = nullptr) {
  detail::check_inputs(model, patches, plan);
  Matrix t = detail::token_matrix(model, patches, plan);
  Matrix e = t * model.embed.transposed();
  Matrix h = model.mix * e;
  const Matrix y = h * model.dec.transposed();
  PatchGrid out(model.n, model.w);
  std::copy(y.data().begin(), y.data().end(), out.values.begin());
  if (cache != nullptr) *cache = {std::move(t), std::move(e), std::move(h)};
  return out;
}

struct TrainObjective {
  LossConfig cfg{};
  const ScalingTable* table = nullptr;  ///< divisor source; null leaves the loss unscaled
  LossObjective objective = LossObjective::scaled_focal;
};

struct Backprop {
  ToyModel grad;  ///< same shapes as the model
  LossEvaluation loss;
};

/// Exact gradients of the (scaled) loss with respect to every parameter.
inline Backprop backward(const ToyModel& model, const PatchGrid& patches, const MaskPlan& plan,
                         const TrainObjective& obj) {
  ForwardCache cache;
  const PatchGrid rec = forward(model, patches, plan, &cache);
  Backprop out;
  out.loss = evaluate_loss(patches, rec, plan, obj.cfg, obj.table, obj.objective, true);
  Matrix g(model.tokens(), model.tile());
  std::copy(out.loss.grad->values.begin(), out.loss.grad->values.end(), g.data().begin());

  out.grad = ToyModel(model.n, model.w, model.d);
  const Matrix gt = g.transposed();
  out.grad.dec = gt * cache.mixed;                          // Σ_p g_p h_pᵀ
  const Matrix dh = g * model.dec;                          // n² × d
  out.grad.mix = dh * cache.embedded.transposed();          // dh_p · e_q
  const Matrix de = model.mix.transposed() * dh;            // Σ_p mix[p,q] dh_p
  out.grad.embed = de.transposed() * cache.tokens;          // Σ_q de_q t_qᵀ
  const Matrix dt = de * model.embed;                       // n² × w²
  for (std::size_t p = 0; p < model.tokens(); ++p) {
    if (!plan.masked_token(p)) continue;
    const auto row = dt.row(p);
    for (std::size_t k = 0; k < row.size(); ++k) out.grad.mask_token[k] += row[k];
  }
  return out;
}

/// Scalar loss used by backward(), for finite-difference checks.
inline double objective_value(const ToyModel& model, const PatchGrid& patches, const MaskPlan& plan,
                              const TrainObjective& obj) {
  return evaluate_loss(patches, forward(model, patches, plan), plan, obj.cfg, obj.table, obj.objective, false)
      .scaled;
}

struct TrainState {
  ToyModel model;
  std::uint64_t step = 0;
  double lr = 0.1;
  std::uint64_t seed = 0;
  RatioSchedule schedule{};
  LossConfig cfg{};
  ScalingTable table{};
  LossObjective objective = LossObjective::scaled_focal;
  MaskSampling sampling = MaskSampling::bernoulli;

  void validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("TrainState: lr must be finite and >= 0");
    schedule.validate();
    cfg.validate();
    model.validate();
  }
};

struct TraceRow {
  std::uint64_t batch = 0;
  double ratio = 0.0;
  std::array<double, 3> case_loss{};
  double total = 0.0;
  double scaled_total = 0.0;
  std::size_t clamped_blocks = 0;
};

inline constexpr const char* kTraceHeader = "batch,ratio,case1_loss,case2_loss,case3_loss,total,scaled_total";

/// Shortest text that parses back to the same double.
inline std::string round_trip(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

inline void write_trace_csv(std::ostream& os, std::span<const TraceRow> rows) {
  os << kTraceHeader << '\n';
  for (const TraceRow& r : rows)
    os << r.batch << ',' << round_trip(r.ratio) << ',' << round_trip(r.case_loss[0]) << ','
       << round_trip(r.case_loss[1]) << ',' << round_trip(r.case_loss[2]) << ',' << round_trip(r.total) << ','
       << round_trip(r.scaled_total) << '\n';
}

/// Mask stream for batch `step`, kept apart from the ratio stream.
inline Rng mask_rng(std::uint64_t seed, std::uint64_t step) { return Rng::stream(seed ^ 0x4d41534bULL, step); }

/// One SGD step on one sample. Throws if the loss is not finite.
inline TraceRow train_step(TrainState& state, const PatchGrid& sample) {
  const double ratio = next_ratio(state.schedule, state.step);
  Rng rng = mask_rng(state.seed, state.step);
  const MaskPlan plan = ratio > 0.0 ? sample_mask(state.model.n, ratio, rng, state.sampling)
                                    : MaskPlan::none(state.model.n);
  const bool scaled = state.objective == LossObjective::scaled_focal && !state.table.entries.empty();
  const TrainObjective obj{state.cfg, scaled ? &state.table : nullptr, state.objective};
  Backprop bp;
  try {
    bp = backward(state.model, sample, plan, obj);
  } catch (const std::exception& e) {
    throw std::runtime_error("train: batch " + std::to_string(state.step) + " (ratio " + std::to_string(ratio) +
                             "): " + e.what());
  }
  if (!std::isfinite(bp.loss.scaled))
    throw std::runtime_error("train: non-finite loss at batch " + std::to_string(state.step));

  if (state.lr != 0.0) {
    auto step_tensor = [&](std::span<double> param, std::span<const double> grad) {
      for (std::size_t k = 0; k < param.size(); ++k) param[k] -= state.lr * grad[k];
    };
    step_tensor(state.model.embed.data(), bp.grad.embed.data());
    step_tensor(state.model.mix.data(), bp.grad.mix.data());
    step_tensor(state.model.dec.data(), bp.grad.dec.data());
    step_tensor(state.model.mask_token, bp.grad.mask_token);
  }
  TraceRow row{state.step, ratio, bp.loss.case_loss, bp.loss.raw, bp.loss.scaled, bp.loss.clamped_blocks};
  ++state.step;
  return row;
}

/// Plain SGD, batch size 1, visiting the dataset in order once per epoch.
inline std::vector<TraceRow> train(TrainState& state, std::span<const PatchGrid> dataset, std::size_t epochs) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  state.validate();
  for (const PatchGrid& s : dataset)
    if (s.n != state.model.n || s.w != state.model.w) throw std::invalid_argument("train: sample geometry mismatch");
  std::vector<TraceRow> trace;
  trace.reserve(epochs * dataset.size());
  for (std::size_t e = 0; e < epochs; ++e)
    for (const PatchGrid& sample : dataset) trace.push_back(train_step(state, sample));
  return trace;
}

struct CaseErrors {
  std::array<std::optional<double>, 3> e{};  ///< mean block error per case; empty when no block fell in it
  std::array<std::size_t, 3> counts{};
  double e_global = 0.0;                     ///< mean block error with nothing masked
};

/// Mean-norm block errors grouped by masking case over `trials` masks per
/// sample; trial t uses Rng::stream(seed, t).
inline CaseErrors case_error_report(const ToyModel& model, std::span<const PatchGrid> dataset, double ratio,
                                    std::size_t trials, std::uint64_t seed = 0,
                                    MaskSampling sampling = MaskSampling::bernoulli) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw std::invalid_argument("case_error_report: ratio must lie in [0, 1)");
  CaseErrors out;
  std::array<double, 3> sums{};
  if (ratio > 0.0) {
    for (std::size_t t = 0; t < trials; ++t) {
      Rng rng = Rng::stream(seed, t);
      for (const PatchGrid& sample : dataset) {
        const MaskPlan plan = sample_mask(model.n, ratio, rng, sampling);
        const PatchGrid rec = forward(model, sample, plan);
        for (std::size_t p = 0; p < model.tokens(); ++p) {
          const std::size_t c = case_index(plan.case_of_token(p));
          sums[c] += block_loss(sample, rec, p / model.n, p % model.n, BlockNorm::mean);
          ++out.counts[c];
        }
      }
    }
  }
  for (std::size_t c = 0; c < 3; ++c)
    if (out.counts[c] > 0) out.e[c] = sums[c] / static_cast<double>(out.counts[c]);

  double global = 0.0;
  const MaskPlan none = MaskPlan::none(model.n);
  for (const PatchGrid& sample : dataset) {
    const PatchGrid rec = forward(model, sample, none);
    for (std::size_t p = 0; p < model.tokens(); ++p)
      global += block_loss(sample, rec, p / model.n, p % model.n, BlockNorm::mean);
  }
  if (!dataset.empty()) global /= static_cast<double>(dataset.size() * model.tokens());
  out.e_global = global;
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr std::array<unsigned char, 4> kCheckpointMagic{'F', 'F', 'i', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::vector<unsigned char> encode_checkpoint(const ToyModel& model) {
  model.validate();
  std::vector<unsigned char> out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(model.n));
  detail::put_u32(out, static_cast<std::uint32_t>(model.w));
  detail::put_u32(out, static_cast<std::uint32_t>(model.d));
  model.for_each_tensor([&](const char*, std::span<const double> t) {
    for (double v : t) detail::put_f32(out, v);
  });
  return out;
}

inline ToyModel decode_checkpoint(std::span<const unsigned char> bytes) {
  constexpr std::size_t header = 20;
  if (bytes.size() < header || !std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), bytes.begin()))
    throw std::runtime_error("checkpoint: bad magic/length");
  const std::uint32_t version = detail::get_u32(bytes, 4);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const std::size_t n = detail::get_u32(bytes, 8);
  const std::size_t w = detail::get_u32(bytes, 12);
  const std::size_t d = detail::get_u32(bytes, 16);
  if (n == 0 || w == 0 || d == 0 || n % 2 != 0 || n > 4096 || w > 4096 || d > 65536)
    throw std::runtime_error("checkpoint: bad magic/length");
  const std::size_t count = d * w * w + n * n * n * n + w * w * d + w * w;
  if (bytes.size() != header + 4 * count) throw std::runtime_error("checkpoint: bad magic/length");
  ToyModel model(n, w, d);
  std::size_t offset = header;
  model.for_each_tensor([&](const char*, std::span<double> t) {
    for (double& v : t) {
      v = detail::get_f32(bytes, offset);
      offset += 4;
    }
  });
  model.validate();
  return model;
}

inline void write_checkpoint(const std::filesystem::path& path, const ToyModel& model) {
  detail::write_file_bytes(path, encode_checkpoint(model));
}

inline ToyModel read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file_bytes(path));
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Pixel (i, j) of a centered side×side spectrum mirrors to
/// ((side - i) mod side, (side - j) mod side).
inline bool is_centrosymmetric(const MagnitudeGrid& g) {
  const std::size_t s = g.side;
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j)
      if (g.at(i, j) != g.at((s - i) % s, (s - j) % s)) return false;
  return true;
}

/// Random structured image: a few plane waves, a Gaussian blob and pixel
/// noise.
inline Image synthetic_image(std::size_t side, Rng& rng) {
  Image img(side, side);
  const double s = static_cast<double>(side);
  constexpr double two_pi = 6.283185307179586;
  const int waves = 2 + static_cast<int>(rng.below(4));
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::vector<Wave> ws;
  for (int k = 0; k < waves; ++k)
    ws.push_back({static_cast<double>(rng.below(side / 2)), static_cast<double>(rng.below(side / 2)) - s / 4.0,
                  two_pi * rng.uniform(), 0.2 + 0.8 * rng.uniform()});
  const double cx = s * rng.uniform(), cy = s * rng.uniform();
  const double radius = s * (0.05 + 0.2 * rng.uniform());
  const double noise = 0.05 + 0.15 * rng.uniform();
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) {
      double v = 0.0;
      for (const Wave& w : ws)
        v += w.amp * std::cos(two_pi * (w.fx * static_cast<double>(x) + w.fy * static_cast<double>(y)) / s + w.phase);
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      v += 2.0 * std::exp(-(dx * dx + dy * dy) / (2.0 * radius * radius));
      v += noise * rng.normal();
      img.at(y, x) = v;
    }
  return img;
}

/// Normalized centered log-magnitude spectra of synthetic images, averaged
/// with their point reflection so each one is exactly centrosymmetric.
inline std::vector<MagnitudeGrid> synthetic_spectra(std::size_t count, std::size_t side, std::uint64_t seed) {
  std::vector<MagnitudeGrid> out;
  out.reserve(count);
  SpectrumOptions opts;
  opts.side = side;
  for (std::size_t k = 0; k < count; ++k) {
    Rng rng = Rng::stream(seed, k);
    const MagnitudeGrid raw = normalize_grid(magnitude_spectrum(synthetic_image(side, rng), opts));
    MagnitudeGrid sym = raw;
    for (std::size_t i = 0; i < side; ++i)
      for (std::size_t j = 0; j < side; ++j)
        sym.at(i, j) = 0.5 * (raw.at(i, j) + raw.at((side - i) % side, (side - j) % side));
    if (!is_centrosymmetric(sym)) throw std::logic_error("synthetic_spectra: symmetrization failed");
    out.push_back(std::move(sym));
  }
  return out;
}

/// Per-pixel mean of equally sized grids. Summation runs in dataset order, so
/// the mean of centrosymmetric grids is itself exactly centrosymmetric.
inline MagnitudeGrid mean_grid(std::span<const MagnitudeGrid> grids) {
  if (grids.empty()) throw std::invalid_argument("mean_grid: empty dataset");
  MagnitudeGrid mean(grids.front().side, 0.0, grids.front().centered);
  for (const MagnitudeGrid& g : grids) {
    if (g.side != mean.side) throw std::invalid_argument("mean_grid: grids differ in size");
    for (std::size_t k = 0; k < g.values.size(); ++k) mean.values[k] += g.values[k];
  }
  for (double& v : mean.values) v /= static_cast<double>(grids.size());
  return mean;
}

/// Subtracts `mean` from every grid.
inline void subtract_grid(std::span<MagnitudeGrid> grids, const MagnitudeGrid& mean) {
  for (MagnitudeGrid& g : grids) {
    if (g.side != mean.side) throw std::invalid_argument("subtract_grid: grids differ in size");
    for (std::size_t k = 0; k < g.values.size(); ++k) g.values[k] -= mean.values[k];
  }
}

inline std::vector<PatchGrid> patchify_all(std::span<const MagnitudeGrid> grids, std::size_t w) {
  std::vector<PatchGrid> out;
  out.reserve(grids.size());
  for (const MagnitudeGrid& g : grids) out.push_back(patchify(g, w));
  return out;
}

// ---------------------------------------------------------------------------
// Gated multimodal unit
// ---------------------------------------------------------------------------

struct GmuParams {
  Matrix w1;      ///< h × d1
  Matrix w2;      ///< h × d2
  Matrix wz;      ///< h × (d1 + d2)
  Vector bz;      ///< h, gate bias

  std::size_t hidden() const { return w1.rows(); }
  void validate(std::size_t d1, std::size_t d2) const {
    const std::size_t h = w1.rows();
    if (w1.cols() != d1 || w2.rows() != h || w2.cols() != d2 || wz.rows() != h || wz.cols() != d1 + d2 ||
        bz.size() != h)
      throw std::invalid_argument("gmu_fuse: dimension mismatch");
  }
};

struct GmuForward {
  Vector h;   ///< fused output
  Vector z;   ///< gate
  Vector a1;  ///< tanh(W₁x₁)
  Vector a2;  ///< tanh(W₂x₂)
};

inline GmuForward gmu_forward(std::span<const double> x1, std::span<const double> x2, const GmuParams& p) {
  p.validate(x1.size(), x2.size());
  GmuForward out;
  out.a1 = p.w1 * x1;
  out.a2 = p.w2 * x2;
  Vector cat(x1.begin(), x1.end());
  cat.insert(cat.end(), x2.begin(), x2.end());
  out.z = p.wz * cat;
  out.h.resize(p.hidden());
  for (std::size_t k = 0; k < p.hidden(); ++k) {
    out.a1[k] = std::tanh(out.a1[k]);
    out.a2[k] = std::tanh(out.a2[k]);
    out.z[k] = 1.0 / (1.0 + std::exp(-(out.z[k] + p.bz[k])));
    out.h[k] = out.z[k] * out.a1[k] + (1.0 - out.z[k]) * out.a2[k];
  }
  return out;
}

/// h = z ⊙ tanh(W₁x₁) + (1 - z) ⊙ tanh(W₂x₂), z = σ(W_z[x₁; x₂] + b_z).
inline Vector gmu_fuse(std::span<const double> x1, std::span<const double> x2, const GmuParams& p) {
  return gmu_forward(x1, x2, p).h;
}

struct GmuGrad {
  GmuParams params;
  Vector x1;
  Vector x2;
};

/// Vector-Jacobian product of gmu_fuse for upstream gradient dh.
inline GmuGrad gmu_backward(std::span<const double> x1, std::span<const double> x2, const GmuParams& p,
                            std::span<const double> dh) {
  const GmuForward f = gmu_forward(x1, x2, p);
  const std::size_t h = p.hidden();
  if (dh.size() != h) throw std::invalid_argument("gmu_backward: upstream gradient size mismatch");
  const std::size_t d1 = x1.size(), d2 = x2.size();
  GmuGrad g{{Matrix(h, d1), Matrix(h, d2), Matrix(h, d1 + d2), Vector(h, 0.0)}, Vector(d1, 0.0), Vector(d2, 0.0)};
  for (std::size_t k = 0; k < h; ++k) {
    const double du1 = dh[k] * f.z[k] * (1.0 - f.a1[k] * f.a1[k]);
    const double du2 = dh[k] * (1.0 - f.z[k]) * (1.0 - f.a2[k] * f.a2[k]);
    const double duz = dh[k] * (f.a1[k] - f.a2[k]) * f.z[k] * (1.0 - f.z[k]);
    for (std::size_t j = 0; j < d1; ++j) {
      g.params.w1(k, j) = du1 * x1[j];
      g.params.wz(k, j) = duz * x1[j];
      g.x1[j] += du1 * p.w1(k, j) + duz * p.wz(k, j);
    }
    for (std::size_t j = 0; j < d2; ++j) {
      g.params.w2(k, j) = du2 * x2[j];
      g.params.wz(k, d1 + j) = duz * x2[j];
      g.x2[j] += du2 * p.w2(k, j) + duz * p.wz(k, d1 + j);
    }
    g.params.bz[k] = duz;
  }
  return g;
}

}  // namespace freqlens
