// freqlens: spectra, masked-spectrum pre-training and separation reports.

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "freqlens/csv.hpp"
#include "freqlens/freqloss.hpp"
#include "freqlens/image_io.hpp"
#include "freqlens/loss_config.hpp"
#include "freqlens/masking.hpp"
#include "freqlens/scaling.hpp"
#include "freqlens/separation.hpp"
#include "freqlens/specstats.hpp"
#include "freqlens/spectra.hpp"
#include "freqlens/toymae.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace freqlens;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitPartial = 2;
constexpr int kConfigVersion = 1;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string config_hash(const json& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(config.dump())));
  return std::string("fnv1a64:") + buf;
}

/// Shortest round-trip form, always with a decimal point: 0.3, 0.15, 0.0.
std::string ratio_key(double r) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, r);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

void line_to_stderr(const std::string& line) {
  static std::mutex m;
  const std::lock_guard<std::mutex> lock(m);
  std::fputs((line + "\n").c_str(), stderr);
  std::fflush(stderr);
}

void emit_json(const json& j, const std::string& out) {
  const std::string text = j.dump(2) + "\n";
  if (out.empty() || out == "-") {
    std::cout << text << std::flush;
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + out);
  f << text;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory " + dir.string());
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
}

std::size_t worker_cap() {
  std::size_t cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FREQLENS_THREADS"); env != nullptr && *env != '\0') {
    std::size_t v = 0;
    const std::string_view s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || v == 0)
      throw ConfigError("FREQLENS_THREADS must be a positive integer, got '" + std::string(s) + "'");
    cap = v;
  }
  return cap;
}

ResizeMode parse_resize(const std::string& s) {
  if (s == "stretch") return ResizeMode::stretch;
  if (s == "center_crop") return ResizeMode::center_crop;
  throw ConfigError("unknown resize mode: " + s);
}
const char* to_string(ResizeMode m) { return m == ResizeMode::stretch ? "stretch" : "center_crop"; }

LossObjective parse_objective(const std::string& s) {
  if (s == "scaled_focal") return LossObjective::scaled_focal;
  if (s == "masked_mean") return LossObjective::masked_mean;
  throw ConfigError("unknown objective: " + s);
}
const char* to_string(LossObjective o) { return o == LossObjective::scaled_focal ? "scaled_focal" : "masked_mean"; }

MaskSampling parse_sampling(const std::string& s) {
  if (s == "bernoulli") return MaskSampling::bernoulli;
  if (s == "fixed_count") return MaskSampling::fixed_count;
  throw ConfigError("unknown mask sampling: " + s);
}
const char* to_string(MaskSampling m) { return m == MaskSampling::bernoulli ? "bernoulli" : "fixed_count"; }

void check_levels(const std::vector<double>& levels) {
  if (levels.empty()) throw ConfigError("no ratio levels given");
  for (double r : levels)
    if (!(r >= 0.0 && r < 1.0)) throw ConfigError("ratio " + ratio_key(r) + " outside [0, 1): ratio must be < 1");
}

template <class F>
auto translate(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

// ---------------------------------------------------------------------------
// Strict JSON config reading
// ---------------------------------------------------------------------------

/// One JSON object of the config; unknown keys are rejected on construction.
class Section {
public:
  Section(const json& j, std::string path, std::initializer_list<const char*> allowed) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& item : j_.items())
      if (!ok.count(item.key())) throw ConfigError("unknown config key: " + path_ + "." + item.key());
  }

  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  const json& raw(const char* key) const { return j_.at(key); }
  std::string where(const char* key) const { return path_ + "." + key; }

  template <class T>
  T get(const char* key, T fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where(key) + ": expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(where(key) + ": expected an integer");
      if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)
        throw ConfigError(where(key) + ": must be non-negative");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(where(key) + ": expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(where(key) + ": expected a string");
    }
    return v.get<T>();
  }

private:
  const json& j_;
  std::string path_;
};

std::vector<double> number_list(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + ": expected an array of numbers");
  std::vector<double> out;
  for (const json& x : v) {
    if (!x.is_number()) throw ConfigError(where + ": expected an array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

// ---------------------------------------------------------------------------
// spectrum
// ---------------------------------------------------------------------------

struct SpectrumArgs {
  std::vector<std::string> inputs;
  std::string out = ".";
  std::size_t side = 224;
  std::string resize = "stretch";
  bool linear = false;
  bool uncentered = false;
};

int cmd_spectrum(const SpectrumArgs& a) {
  if (a.inputs.empty()) throw ConfigError("spectrum: no input images");
  if (a.side == 0) throw ConfigError("spectrum: --side must be positive");
  SpectrumOptions opts;
  opts.side = a.side;
  opts.resize = parse_resize(a.resize);
  opts.log_scale = !a.linear;
  opts.centered = !a.uncentered;

  std::vector<fs::path> files;
  for (const std::string& in : a.inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file()) found.push_back(e.path());
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      require_file(p, "input");
      files.push_back(p);
    }
  }
  if (files.empty()) throw ConfigError("spectrum: inputs contain no files");
  std::set<std::string> stems;
  for (const fs::path& f : files)
    if (!stems.insert(f.stem().string()).second)
      throw ConfigError("spectrum: two inputs share the output name " + f.stem().string());

  const fs::path out_dir(a.out);
  ensure_dir(out_dir);
  const std::size_t workers = std::min(worker_cap(), files.size());

  std::vector<std::string> errors(files.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < files.size(); k = next++) {
      try {
        const MagnitudeGrid grid = magnitude_spectrum(read_image(files[k]), opts);
        const std::string stem = files[k].stem().string();
        write_flsg(out_dir / (stem + ".flsg"), grid);
        write_grid_png(out_dir / (stem + ".png"), grid);
      } catch (const std::exception& e) {
        errors[k] = e.what();
        line_to_stderr("spectrum: " + files[k].string() + ": " + e.what());
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(work);
  work();
  for (std::thread& t : pool) t.join();

  json config{{"command", "spectrum"},
              {"inputs", a.inputs},
              {"out", a.out},
              {"side", a.side},
              {"resize", to_string(opts.resize)},
              {"log_scale", opts.log_scale},
              {"centered", opts.centered}};
  json results = json::array();
  std::size_t failed = 0;
  for (std::size_t k = 0; k < files.size(); ++k) {
    json r{{"input", files[k].string()}};
    if (errors[k].empty()) {
      r["flsg"] = (out_dir / (files[k].stem().string() + ".flsg")).string();
      r["preview"] = (out_dir / (files[k].stem().string() + ".png")).string();
    } else {
      r["error"] = errors[k];
      ++failed;
    }
    results.push_back(std::move(r));
  }
  json meta{{"config", config},
            {"config_hash", config_hash(config)},
            {"workers", workers},
            {"written", files.size() - failed},
            {"failed", failed},
            {"files", results}};
  emit_json(meta, (out_dir / "spectrum.json").string());
  return failed == 0 ? kExitOk : kExitPartial;
}

// ---------------------------------------------------------------------------
// pretrain
// ---------------------------------------------------------------------------

struct PretrainPlan {
  json resolved;
  std::optional<fs::path> data_dir;
  std::size_t synth_count = 0, synth_seed = 0;
  std::size_t side = 0;
  ResizeMode resize = ResizeMode::stretch;
  bool normalize = true;
  bool center = false;
  std::size_t w = 0, d = 0;
  std::string init;
  std::uint64_t seed = 0;
  double lr = 0.0;
  std::size_t epochs = 0;
  std::vector<double> levels;
  LossObjective objective = LossObjective::scaled_focal;
  MaskSampling sampling = MaskSampling::bernoulli;
  LossConfig cfg;
  Chi2Spec chi2;
};

PretrainPlan resolve_pretrain(const json& root, std::optional<std::uint64_t> seed_flag) {
  const Section top(root, "config", {"version", "seed", "data", "center", "model", "train", "loss", "chi2"});
  if (!top.has("version")) throw ConfigError("config.version is required");
  if (top.get<int>("version", 0) != kConfigVersion)
    throw ConfigError("config.version " + root.at("version").dump() + " is not supported (expected " +
                      std::to_string(kConfigVersion) + ")");
  PretrainPlan p;
  p.seed = seed_flag ? *seed_flag : top.get<std::uint64_t>("seed", 0);
  p.center = top.get<bool>("center", false);

  if (!top.has("data")) throw ConfigError("config.data is required");
  const Section data(root.at("data"), "config.data", {"synthetic", "dir", "side", "resize", "normalize"});
  if (data.has("synthetic") == data.has("dir")) throw ConfigError("config.data: give exactly one of synthetic, dir");
  json data_out = json::object();
  if (data.has("synthetic")) {
    const Section syn(root.at("data").at("synthetic"), "config.data.synthetic", {"count", "side", "seed"});
    p.synth_count = syn.get<std::size_t>("count", 1);
    p.side = syn.get<std::size_t>("side", 64);
    p.synth_seed = syn.get<std::size_t>("seed", 0);
    if (data.has("side") || data.has("resize") || data.has("normalize"))
      throw ConfigError("config.data: side/resize/normalize apply to dir data only");
    if (p.synth_count == 0) throw ConfigError("config.data.synthetic.count must be positive");
    data_out["synthetic"] = {{"count", p.synth_count}, {"side", p.side}, {"seed", p.synth_seed}};
  } else {
    p.data_dir = fs::path(data.get<std::string>("dir", ""));
    p.side = data.get<std::size_t>("side", 64);
    p.resize = parse_resize(data.get<std::string>("resize", "stretch"));
    p.normalize = data.get<bool>("normalize", true);
    if (!fs::is_directory(*p.data_dir)) throw ConfigError("config.data.dir is not a directory: " + p.data_dir->string());
    data_out = {{"dir", p.data_dir->string()}, {"side", p.side}, {"resize", to_string(p.resize)}, {"normalize", p.normalize}};
  }

  const json empty = json::object();
  const Section model(top.has("model") ? root.at("model") : empty, "config.model", {"patch", "dim", "init"});
  p.w = model.get<std::size_t>("patch", 8);
  p.d = model.get<std::size_t>("dim", 64);
  p.init = model.get<std::string>("init", "random");
  if (p.init != "random" && p.init != "identity") throw ConfigError("config.model.init must be random or identity");
  if (p.w == 0 || p.d == 0) throw ConfigError("config.model: patch and dim must be positive");
  if (p.side % p.w != 0 || (p.side / p.w) % 2 != 0)
    throw ConfigError("config: side " + std::to_string(p.side) + " must be an even multiple of patch " + std::to_string(p.w));

  const Section train(top.has("train") ? root.at("train") : empty, "config.train",
                      {"lr", "epochs", "levels", "objective", "sampling"});
  p.lr = train.get<double>("lr", 0.5);
  p.epochs = train.get<std::size_t>("epochs", 200);
  p.levels = train.has("levels") ? number_list(train.raw("levels"), train.where("levels"))
                                 : std::vector<double>{0.3, 0.15, 0.0};
  check_levels(p.levels);
  p.objective = parse_objective(train.get<std::string>("objective", "scaled_focal"));
  p.sampling = parse_sampling(train.get<std::string>("sampling", "bernoulli"));
  if (!(p.lr >= 0.0) || !std::isfinite(p.lr)) throw ConfigError("config.train.lr must be finite and >= 0");

  const Section loss(top.has("loss") ? root.at("loss") : empty, "config.loss",
                     {"gamma", "variant", "coefficient_mode", "clamp_eps", "block_norm"});
  p.cfg.gamma = loss.get<double>("gamma", 2.0);
  p.cfg.clamp_eps = loss.get<double>("clamp_eps", 1e-6);
  translate([&] {
    p.cfg.variant = parse_focal_variant(loss.get<std::string>("variant", "complement"));
    p.cfg.coefficient_mode = parse_coefficient_mode(loss.get<std::string>("coefficient_mode", "derived"));
    p.cfg.block_norm = parse_block_norm(loss.get<std::string>("block_norm", "mean"));
    p.cfg.validate();
    return 0;
  });

  const Section chi2(top.has("chi2") ? root.at("chi2") : empty, "config.chi2", {"k", "lambda"});
  p.chi2.k = chi2.get<double>("k", static_cast<double>(p.w * p.w));
  p.chi2.lambda_nc = chi2.get<double>("lambda", 0.0);
  translate([&] {
    p.chi2.validate();
    return 0;
  });

  p.resolved = {{"version", kConfigVersion},
                {"seed", p.seed},
                {"data", data_out},
                {"center", p.center},
                {"model", {{"patch", p.w}, {"dim", p.d}, {"init", p.init}}},
                {"train",
                 {{"lr", p.lr},
                  {"epochs", p.epochs},
                  {"levels", p.levels},
                  {"objective", to_string(p.objective)},
                  {"sampling", to_string(p.sampling)}}},
                {"loss",
                 {{"gamma", p.cfg.gamma},
                  {"variant", to_string(p.cfg.variant)},
                  {"coefficient_mode", to_string(p.cfg.coefficient_mode)},
                  {"clamp_eps", p.cfg.clamp_eps},
                  {"block_norm", to_string(p.cfg.block_norm)}}},
                {"chi2", {{"k", p.chi2.k}, {"lambda", p.chi2.lambda_nc}}}};
  return p;
}

std::vector<MagnitudeGrid> load_grids(const PretrainPlan& p) {
  if (!p.data_dir) return synthetic_spectra(p.synth_count, p.side, p.synth_seed);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(*p.data_dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".flsg" || ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("config.data.dir contains no .flsg or image files: " + p.data_dir->string());
  SpectrumOptions opts;
  opts.side = p.side;
  opts.resize = p.resize;
  std::vector<MagnitudeGrid> grids;
  for (const fs::path& f : files) {
    MagnitudeGrid g;
    try {
      g = f.extension() == ".flsg" ? read_flsg(f) : magnitude_spectrum(read_image(f), opts);
    } catch (const std::exception& e) {
      throw ConfigError(f.string() + ": " + e.what());
    }
    if (g.side != p.side)
      throw ConfigError(f.string() + ": grid side " + std::to_string(g.side) + " != " + std::to_string(p.side));
    grids.push_back(p.normalize ? normalize_grid(g) : g);
  }
  return grids;
}

/// Scaled objective summed over the levels on fixed-count masks, averaged over
/// at most 8 samples.
double evaluation_loss(const ToyModel& model, const std::vector<PatchGrid>& data, const TrainState& s) {
  const bool scaled = s.objective == LossObjective::scaled_focal && !s.table.entries.empty();
  const TrainObjective obj{s.cfg, scaled ? &s.table : nullptr, s.objective};
  const std::size_t count = std::min<std::size_t>(8, data.size());
  double total = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    Rng rng = Rng::stream(s.seed ^ 0x4556414cULL, k);
    for (double r : s.schedule.levels) {
      const MaskPlan plan = r > 0.0 ? sample_mask(model.n, r, rng, MaskSampling::fixed_count) : MaskPlan::none(model.n);
      total += objective_value(model, data[k], plan, obj);
    }
  }
  return total / static_cast<double>(count);
}

json table_json(const ScalingTable& t) {
  json entries = json::object();
  for (auto it = t.entries.rbegin(); it != t.entries.rend(); ++it) entries[ratio_key(it->first)] = it->second;
  return {{"gamma", t.gamma},
          {"k", t.chi2.k},
          {"lambda", t.chi2.lambda_nc},
          {"coefficient_mode", to_string(t.coefficient_mode)},
          {"variant", to_string(t.variant)},
          {"clamp_eps", t.clamp_eps},
          {"entries", entries}};
}

int cmd_pretrain(const std::string& config_path, const std::string& out, std::optional<std::uint64_t> seed_flag) {
  require_file(config_path, "config");
  json root;
  {
    std::ifstream in(config_path);
    try {
      root = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(config_path + ": invalid JSON: " + e.what());
    }
  }
  const PretrainPlan p = resolve_pretrain(root, seed_flag);
  const fs::path out_dir(out);
  std::vector<MagnitudeGrid> grids = load_grids(p);
  ensure_dir(out_dir);

  std::optional<MagnitudeGrid> mean;
  if (p.center) {
    mean = mean_grid(grids);
    subtract_grid(grids, *mean);
  }
  const std::vector<PatchGrid> data = patchify_all(grids, p.w);

  TrainState s;
  const std::size_t n = p.side / p.w;
  s.model = p.init == "identity" ? identity_model(n, p.w, p.d, p.seed) : random_model(n, p.w, p.d, p.seed);
  s.lr = p.lr;
  s.seed = p.seed;
  s.schedule.levels = p.levels;
  s.schedule.seed = p.seed;
  s.cfg = p.cfg;
  s.objective = p.objective;
  s.sampling = p.sampling;
  if (p.objective == LossObjective::scaled_focal) s.table = build_scaling_table(p.levels, p.chi2, p.cfg);

  const double initial = evaluation_loss(s.model, data, s);
  const std::vector<TraceRow> trace = train(s, data, p.epochs);
  const double final_loss = evaluation_loss(s.model, data, s);

  write_checkpoint(out_dir / "checkpoint.ffit", s.model);
  {
    std::ofstream f(out_dir / "trace.csv", std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (out_dir / "trace.csv").string());
    write_trace_csv(f, trace);
  }
  if (mean) write_flsg(out_dir / "mean.flsg", *mean);

  json meta{{"command", "pretrain"},
            {"config", p.resolved},
            {"config_hash", config_hash(p.resolved)},
            {"seed", p.seed},
            {"samples", data.size()},
            {"steps", s.step},
            {"grid", {{"side", p.side}, {"patches_per_side", n}}},
            {"scaling_table", s.table.entries.empty() ? json(nullptr) : table_json(s.table)},
            {"evaluation", {{"initial", initial}, {"final", final_loss}, {"ratio", final_loss / initial}}},
            {"outputs",
             {{"checkpoint", "checkpoint.ffit"},
              {"trace", "trace.csv"},
              {"mean", mean ? json("mean.flsg") : json(nullptr)}}}};
  emit_json(meta, (out_dir / "run.json").string());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// reconstruct
// ---------------------------------------------------------------------------

struct ReconstructArgs {
  std::string checkpoint, input, mean, out = ".";
  double ratio = 0.25;
  std::uint64_t seed = 0;
  std::string resize = "stretch";
  bool raw = false;
  std::string sampling = "bernoulli";
};

int cmd_reconstruct(const ReconstructArgs& a) {
  require_file(a.checkpoint, "checkpoint");
  require_file(a.input, "input");
  if (!a.mean.empty()) require_file(a.mean, "mean grid");
  if (!(a.ratio >= 0.0 && a.ratio < 1.0)) throw ConfigError("--ratio must lie in [0, 1)");
  const MaskSampling sampling = parse_sampling(a.sampling);
  const ResizeMode resize = parse_resize(a.resize);

  ToyModel model;
  try {
    model = read_checkpoint(a.checkpoint);
  } catch (const std::exception& e) {
    throw ConfigError(a.checkpoint + ": " + e.what());
  }
  const std::size_t side = model.n * model.w;
  MagnitudeGrid grid;
  try {
    if (fs::path(a.input).extension() == ".flsg") {
      grid = read_flsg(a.input);
    } else {
      SpectrumOptions opts;
      opts.side = side;
      opts.resize = resize;
      grid = magnitude_spectrum(read_image(a.input), opts);
    }
  } catch (const std::exception& e) {
    throw ConfigError(a.input + ": " + e.what());
  }
  if (grid.side != side)
    throw ConfigError(a.input + ": grid side " + std::to_string(grid.side) + " does not match the checkpoint (" +
                      std::to_string(side) + ")");
  if (!a.raw) grid = normalize_grid(grid);
  MagnitudeGrid mean(side, 0.0);
  if (!a.mean.empty()) {
    mean = read_flsg(a.mean);
    if (mean.side != side) throw ConfigError(a.mean + ": mean grid side does not match the checkpoint");
    for (std::size_t k = 0; k < grid.values.size(); ++k) grid.values[k] -= mean.values[k];
  }
  const fs::path out_dir(a.out);
  ensure_dir(out_dir);

  const PatchGrid x = patchify(grid, model.w);
  Rng rng = Rng::stream(a.seed, 0);
  const MaskPlan plan = a.ratio > 0.0 ? sample_mask(model.n, a.ratio, rng, sampling) : MaskPlan::none(model.n);
  const PatchGrid rec = forward(model, x, plan);
  const PatchGrid rec_open = forward(model, x, MaskPlan::none(model.n));

  std::array<double, 3> sums{};
  std::array<std::size_t, 3> counts{};
  double global = 0.0;
  for (std::size_t p = 0; p < model.tokens(); ++p) {
    const std::size_t c = case_index(plan.case_of_token(p));
    sums[c] += block_loss(x, rec, p / model.n, p % model.n, BlockNorm::mean);
    ++counts[c];
    global += block_loss(x, rec_open, p / model.n, p % model.n, BlockNorm::mean);
  }
  global /= static_cast<double>(model.tokens());

  MagnitudeGrid shown = unpatchify(rec);
  MagnitudeGrid diff = shown;
  for (std::size_t k = 0; k < shown.values.size(); ++k) {
    diff.values[k] = std::abs(grid.values[k] - shown.values[k]);
    shown.values[k] += mean.values[k];
  }
  std::vector<double> mask_px(side * side, 0.0);
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c)
      if (plan.masked(r / model.w, c / model.w)) mask_px[r * side + c] = 1.0;
  write_grid_png(out_dir / "reconstruction.png", shown);
  write_gray_png(out_dir / "difference.png", side, side, diff.values);
  write_gray_png(out_dir / "mask.png", side, side, mask_px);

  json config{{"command", "reconstruct"},
              {"checkpoint", a.checkpoint},
              {"input", a.input},
              {"mean", a.mean.empty() ? json(nullptr) : json(a.mean)},
              {"ratio", a.ratio},
              {"seed", a.seed},
              {"sampling", to_string(sampling)},
              {"resize", to_string(resize)},
              {"normalize", !a.raw},
              {"out", a.out}};
  auto cell = [&](std::size_t c) { return counts[c] > 0 ? json(sums[c] / static_cast<double>(counts[c])) : json(nullptr); };
  json meta{{"config", config},
            {"config_hash", config_hash(config)},
            {"e1", cell(0)},
            {"e2", cell(1)},
            {"e3", cell(2)},
            {"e_global", global},
            {"counts", counts},
            {"outputs", {"reconstruction.png", "difference.png", "mask.png"}}};
  emit_json(meta, (out_dir / "cases.json").string());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// scale-factors
// ---------------------------------------------------------------------------

struct ScaleArgs {
  std::vector<double> levels{0.3, 0.15, 0.0};
  double gamma = 2.0;
  double k = 256.0;
  std::optional<double> lambda;
  std::string estimate_from, column;
  double scale = 1.0;
  std::string mode = "derived", variant = "complement";
  double eps = 1e-6;
  std::string out;
};

int cmd_scale_factors(const ScaleArgs& a) {
  check_levels(a.levels);
  LossConfig cfg;
  cfg.gamma = a.gamma;
  cfg.clamp_eps = a.eps;
  Chi2Spec spec{a.k, a.lambda.value_or(0.0)};
  json source = "flag";
  translate([&] {
    cfg.coefficient_mode = parse_coefficient_mode(a.mode);
    cfg.variant = parse_focal_variant(a.variant);
    cfg.validate();
    if (!a.estimate_from.empty()) {
      require_file(a.estimate_from, "loss sample");
      NumericTable t;
      try {
        t = read_numeric_csv(a.estimate_from);
      } catch (const std::exception& e) {
        throw ConfigError(e.what());
      }
      std::size_t col = 0;
      if (!a.column.empty()) {
        const auto it = std::find(t.names.begin(), t.names.end(), a.column);
        if (it == t.names.end()) throw ConfigError(a.estimate_from + ": no column named " + a.column);
        col = static_cast<std::size_t>(it - t.names.begin());
      }
      if (t.columns.empty()) throw ConfigError(a.estimate_from + ": no columns");
      spec = estimate_chi2_spec(t.columns[col], a.k, a.scale);
      source = {{"estimate_from", a.estimate_from}, {"column", t.names[col]}, {"scale", a.scale},
                {"samples", t.columns[col].size()}};
    }
    spec.validate();
    return 0;
  });

  ScalingTable table;
  try {
    table = build_scaling_table(a.levels, spec, cfg);
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  json config{{"command", "scale-factors"},
              {"levels", a.levels},
              {"gamma", a.gamma},
              {"k", a.k},
              {"lambda", spec.lambda_nc},
              {"lambda_source", source},
              {"coefficient_mode", to_string(cfg.coefficient_mode)},
              {"variant", to_string(cfg.variant)},
              {"clamp_eps", cfg.clamp_eps}};
  json out = table_json(table);
  out["config"] = config;
  out["config_hash"] = config_hash(config);
  emit_json(out, a.out);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// rho, mmd, corr
// ---------------------------------------------------------------------------

LabeledFeatures load_features(const std::vector<std::string>& paths) {
  std::vector<LabeledFeatures> parts;
  for (const std::string& p : paths) {
    require_file(p, "feature CSV");
    try {
      parts.push_back(read_feature_csv(p));
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
  return translate([&] { return merge_features(parts, paths); });
}

std::string svg_color(const std::string& tag, std::size_t index) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#bcbd22", "#17becf"};
  if (tag == kRealTag) return "#7f7f7f";
  if (tag == kUnseenTag) return "#000000";
  return palette[index % (sizeof palette / sizeof *palette)];
}

void write_pca_svg(const fs::path& path, const FeatureSet& set) {
  const PcaResult pca = pca_project(set, 2);
  const double width = 640, height = 480, margin = 40;
  double lo[2] = {0, 0}, hi[2] = {0, 0};
  for (std::size_t i = 0; i < set.size(); ++i)
    for (std::size_t a = 0; a < 2; ++a) {
      const double v = a < pca.coords.cols() ? pca.coords(i, a) : 0.0;
      lo[a] = i == 0 ? v : std::min(lo[a], v);
      hi[a] = i == 0 ? v : std::max(hi[a], v);
    }
  auto px = [&](double v, std::size_t a) {
    const double span = hi[a] - lo[a] > 0 ? hi[a] - lo[a] : 1.0;
    const double t = (v - lo[a]) / span;
    return a == 0 ? margin + t * (width - 2 * margin) : height - margin - t * (height - 2 * margin);
  };
  std::map<std::string, std::size_t> tags;
  for (const std::string& c : set.clusters) tags.emplace(c, tags.size());

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << std::fixed;
  f.precision(2);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < set.size(); ++i) {
    const double x = px(pca.coords.cols() > 0 ? pca.coords(i, 0) : 0.0, 0);
    const double y = px(pca.coords.cols() > 1 ? pca.coords(i, 1) : 0.0, 1);
    f << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"3\" fill=\"" << svg_color(set.clusters[i], tags[set.clusters[i]])
      << "\" class=\"" << set.clusters[i] << "\"/>\n";
  }
  double ly = 20;
  for (const auto& [tag, idx] : tags) {
    f << "<circle cx=\"" << width - 110 << "\" cy=\"" << ly << "\" r=\"4\" fill=\"" << svg_color(tag, idx) << "\"/>";
    f << "<text x=\"" << width - 100 << "\" y=\"" << ly + 4 << "\" font-size=\"12\">" << tag << "</text>\n";
    ly += 16;
  }
  f << "</svg>\n";
}

struct RhoArgs {
  std::vector<std::string> features;
  std::string lam = "auto";
  std::string solver = "cd";
  double t0 = 0.5;
  double kept_fraction = 0.8;
  double target_fraction = 0.2;
  bool unseen_in_fit = true;
  bool unseen_in_denominator = true;
  std::vector<double> u_star;
  std::string out, plot;
};

int cmd_rho(const RhoArgs& a) {
  const LabeledFeatures lf = load_features(a.features);
  translate([&] {
    lf.set.validate();
    return 0;
  });
  std::set<std::string> training;
  for (std::size_t i = 0; i < lf.set.size(); ++i)
    if (lf.set.labels[i] == 1 && lf.set.clusters[i] != kUnseenTag) training.insert(lf.set.clusters[i]);
  if (training.size() < 2)
    throw ConfigError("rho: need at least 2 fake training clusters, found " + std::to_string(training.size()));

  RhoPipelineOptions opts;
  opts.t0 = a.t0;
  opts.kept_fraction = a.kept_fraction;
  opts.target_fraction = a.target_fraction;
  opts.rho = {a.unseen_in_fit, a.unseen_in_denominator};
  translate([&] {
    opts.solver = parse_theta_solver(a.solver);
    return 0;
  });
  if (a.lam != "auto") {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(a.lam.data(), a.lam.data() + a.lam.size(), v);
    if (ec != std::errc() || ptr != a.lam.data() + a.lam.size() || !(v >= 0.0) || !std::isfinite(v))
      throw ConfigError("--lam must be 'auto' or a finite number >= 0");
    opts.lam = v;
  }
  if (!(a.kept_fraction > 0.0 && a.kept_fraction <= 1.0)) throw ConfigError("--kept-fraction must lie in (0, 1]");
  if (!(a.target_fraction >= 0.0 && a.target_fraction <= 1.0)) throw ConfigError("--target-fraction must lie in [0, 1]");
  if (!a.u_star.empty() && a.u_star.size() != lf.set.dims())
    throw ConfigError("--u-star has " + std::to_string(a.u_star.size()) + " entries, features have " +
                      std::to_string(lf.set.dims()));
  if (!a.plot.empty()) ensure_dir(fs::path(a.plot).parent_path().empty() ? fs::path(".") : fs::path(a.plot).parent_path());

  RhoReport rep;
  if (a.u_star.empty()) {
    rep = run_rho_pipeline(lf.set, opts);
  } else {
    RobustFit fit;
    fit.u_star = a.u_star;
    fit.t0 = a.t0;
    fit.kept_fraction = 1.0;
    rep = translate([&] { return rho_index(lf.set, fit, opts.rho); });
  }
  if (!a.plot.empty()) write_pca_svg(a.plot, lf.set);

  json config{{"command", "rho"},
              {"features", a.features},
              {"lam", a.lam},
              {"solver", to_string(opts.solver)},
              {"t0", a.t0},
              {"kept_fraction", a.kept_fraction},
              {"target_fraction", a.target_fraction},
              {"unseen_in_fit", a.unseen_in_fit},
              {"unseen_in_denominator", a.unseen_in_denominator},
              {"u_star", a.u_star.empty() ? json(nullptr) : json(a.u_star)},
              {"plot", a.plot.empty() ? json(nullptr) : json(a.plot)}};
  json fit{{"u_star", rep.fit.u_star},
           {"t0", rep.fit.t0},
           {"fixed", !a.u_star.empty()}};
  if (a.u_star.empty()) {
    std::size_t nonzero = count_nonzero(rep.fit.theta_star);
    fit["lam"] = rep.fit.lam;
    fit["solver"] = to_string(rep.fit.solver);
    fit["theta_objective"] = rep.fit.theta_objective;
    fit["theta_nonzero"] = nonzero;
    fit["kept_rows"] = rep.fit.kept_rows.size();
    fit["kept_fraction"] = rep.fit.kept_fraction;
  }
  json out{{"rho", rep.rho},
           {"numerator", rep.numerator},
           {"denominator", rep.denominator},
           {"numerator_statistic", rep.numerator_statistic},
           {"per_cluster_mean_distance", rep.per_cluster_mean_distance},
           {"per_cluster_count", rep.per_cluster_count},
           {"real_mean_distance", rep.real_mean_distance},
           {"fake_mean_distance", rep.fake_mean_distance},
           {"unseen_mean_distance", rep.unseen_count > 0 ? json(rep.unseen_mean_distance) : json(nullptr)},
           {"unseen_count", rep.unseen_count},
           {"rows", lf.set.size()},
           {"dims", lf.set.dims()},
           {"fit", fit},
           {"config", config},
           {"config_hash", config_hash(config)}};
  emit_json(out, a.out);
  return kExitOk;
}

int cmd_mmd(const std::string& a_path, const std::string& b_path, const std::string& out) {
  require_file(a_path, "feature CSV");
  require_file(b_path, "feature CSV");
  LabeledFeatures a, b;
  try {
    a = read_feature_csv(a_path);
    b = read_feature_csv(b_path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (a.set.dims() != b.set.dims())
    throw ConfigError("feature dimension mismatch: " + a_path + " has " + std::to_string(a.set.dims()) + ", " + b_path +
                      " has " + std::to_string(b.set.dims()));
  const MmdResult r = translate([&] { return mmd(a.set.features, b.set.features); });
  json config{{"command", "mmd"}, {"a", a_path}, {"b", b_path}};
  emit_json({{"mmd2", r.mmd2},
             {"bandwidth", r.bandwidth},
             {"n_a", a.set.size()},
             {"n_b", b.set.size()},
             {"config", config},
             {"config_hash", config_hash(config)}},
            out);
  return kExitOk;
}

int cmd_corr(const std::string& path, std::string x, std::string y, const std::string& out) {
  require_file(path, "numeric CSV");
  NumericTable t;
  try {
    t = read_numeric_csv(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (t.names.size() < 2) throw ConfigError(path + ": need at least two columns");
  if (x.empty()) x = t.names[0];
  if (y.empty()) y = t.names[1];
  auto column = [&](const std::string& name) -> const Vector& {
    const auto it = std::find(t.names.begin(), t.names.end(), name);
    if (it == t.names.end()) throw ConfigError(path + ": no column named " + name);
    return t.columns[static_cast<std::size_t>(it - t.names.begin())];
  };
  const Vector& xs = column(x);
  const Vector& ys = column(y);
  const PearsonResult r = translate([&] { return pearson(xs, ys); });
  json config{{"command", "corr"}, {"input", path}, {"x", x}, {"y", y}};
  emit_json({{"r", r.r}, {"p", r.p}, {"n", r.n}, {"config", config}, {"config_hash", config_hash(config)}}, out);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"freqlens: magnitude spectra, masked-spectrum pre-training and real/fake separation reports"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "freqlens 1.0.0");

  SpectrumArgs spec_args;
  auto* spectrum = app.add_subcommand("spectrum", "Write centered log-magnitude spectra (.flsg + preview .png)");
  spectrum->add_option("inputs", spec_args.inputs, "Image files or directories")->required();
  spectrum->add_option("-o,--out", spec_args.out, "Output directory")->capture_default_str();
  spectrum->add_option("--side", spec_args.side, "Square side after resizing")->capture_default_str();
  spectrum->add_option("--resize", spec_args.resize, "stretch or center_crop")->capture_default_str();
  spectrum->add_flag("--linear", spec_args.linear, "Raw |F| instead of log(1 + |F|)");
  spectrum->add_flag("--uncentered", spec_args.uncentered, "Skip the half-shift");

  std::string pre_config, pre_out = ".";
  std::optional<std::uint64_t> pre_seed;
  auto* pretrain = app.add_subcommand("pretrain", "Train the toy masked autoencoder from a JSON config");
  pretrain->add_option("-c,--config", pre_config, "JSON config file")->required();
  pretrain->add_option("-o,--out", pre_out, "Output directory")->capture_default_str();
  pretrain->add_option("--seed", pre_seed, "Overrides the config seed");

  ReconstructArgs rec_args;
  auto* reconstruct = app.add_subcommand("reconstruct", "Reconstruct one spectrum and report per-case errors");
  reconstruct->add_option("--checkpoint", rec_args.checkpoint, "Checkpoint file")->required();
  reconstruct->add_option("--input", rec_args.input, "Image or .flsg grid")->required();
  reconstruct->add_option("--ratio", rec_args.ratio, "Mask ratio in [0, 1)")->capture_default_str();
  reconstruct->add_option("--seed", rec_args.seed, "Mask seed")->capture_default_str();
  reconstruct->add_option("--mean", rec_args.mean, "Mean grid (.flsg) written by a centered pretrain run");
  reconstruct->add_option("--sampling", rec_args.sampling, "bernoulli or fixed_count")->capture_default_str();
  reconstruct->add_option("--resize", rec_args.resize, "stretch or center_crop")->capture_default_str();
  reconstruct->add_flag("--raw", rec_args.raw, "Skip min/max normalization of the input grid");
  reconstruct->add_option("-o,--out", rec_args.out, "Output directory")->capture_default_str();

  ScaleArgs sc_args;
  double sc_lambda = 0.0;
  auto* scale = app.add_subcommand("scale-factors", "Emit the per-ratio loss scaling table as JSON");
  scale->add_option("--levels", sc_args.levels, "Mask ratio levels")->delimiter(',')->capture_default_str();
  scale->add_option("--gamma", sc_args.gamma, "Focal exponent")->capture_default_str();
  scale->add_option("--k", sc_args.k, "Chi-squared degrees of freedom")->capture_default_str();
  auto* lam_opt = scale->add_option("--lambda", sc_lambda, "Noncentrality");
  auto* est_opt = scale->add_option("--estimate-from", sc_args.estimate_from, "CSV of observed block losses");
  lam_opt->excludes(est_opt);
  scale->add_option("--column", sc_args.column, "Column of --estimate-from (default: first)");
  scale->add_option("--scale", sc_args.scale, "Factor mapping losses to chi-squared units")->capture_default_str();
  scale->add_option("--mode", sc_args.mode, "derived or paper coefficient")->capture_default_str();
  scale->add_option("--variant", sc_args.variant, "complement or paper focal form")->capture_default_str();
  scale->add_option("--eps", sc_args.eps, "Block-loss clamp")->capture_default_str();
  scale->add_option("-o,--out", sc_args.out, "Output file (default stdout)");

  RhoArgs rho_args;
  bool no_unseen_fit = false, no_unseen_den = false;
  auto* rho = app.add_subcommand("rho", "Separation index of merged feature CSVs");
  rho->add_option("--features", rho_args.features, "Feature CSVs (id,label,cluster,f0,...)")->required();
  rho->add_option("--lam", rho_args.lam, "Lasso penalty or 'auto'")->capture_default_str();
  rho->add_option("--solver", rho_args.solver, "cd or powell")->capture_default_str();
  rho->add_option("--t0", rho_args.t0, "Hyperplane offset")->capture_default_str();
  rho->add_option("--kept-fraction", rho_args.kept_fraction, "Rows kept for the final fit")->capture_default_str();
  rho->add_option("--target-fraction", rho_args.target_fraction, "Nonzero outlier fraction for --lam auto")
      ->capture_default_str();
  rho->add_flag("--exclude-unseen-from-fit", no_unseen_fit, "Fit the hyperplane without unseen rows");
  rho->add_flag("--exclude-unseen-from-denominator", no_unseen_den, "Leave unseen rows out of the fake mean");
  rho->add_option("--u-star", rho_args.u_star, "Fixed normal, skips the fit")->delimiter(',');
  rho->add_option("-o,--out", rho_args.out, "Output file (default stdout)");
  rho->add_option("--plot", rho_args.plot, "PCA scatter SVG");

  std::string mmd_a, mmd_b, mmd_out;
  auto* mmd_cmd = app.add_subcommand("mmd", "Squared MMD between two feature CSVs");
  mmd_cmd->add_option("a", mmd_a, "First feature CSV")->required();
  mmd_cmd->add_option("b", mmd_b, "Second feature CSV")->required();
  mmd_cmd->add_option("-o,--out", mmd_out, "Output file (default stdout)");

  std::string corr_in, corr_x, corr_y, corr_out;
  auto* corr = app.add_subcommand("corr", "Pearson correlation of two numeric CSV columns");
  corr->add_option("input", corr_in, "Numeric CSV with a header row")->required();
  corr->add_option("--x", corr_x, "First column (default: column 1)");
  corr->add_option("--y", corr_y, "Second column (default: column 2)");
  corr->add_option("-o,--out", corr_out, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*spectrum) return cmd_spectrum(spec_args);
    if (*pretrain) return cmd_pretrain(pre_config, pre_out, pre_seed);
    if (*reconstruct) return cmd_reconstruct(rec_args);
    if (*scale) {
      if (*lam_opt) sc_args.lambda = sc_lambda;
      return cmd_scale_factors(sc_args);
    }
    if (*rho) {
      rho_args.unseen_in_fit = !no_unseen_fit;
      rho_args.unseen_in_denominator = !no_unseen_den;
      return cmd_rho(rho_args);
    }
    if (*mmd_cmd) return cmd_mmd(mmd_a, mmd_b, mmd_out);
    if (*corr) return cmd_corr(corr_in, corr_x, corr_y, corr_out);
  } catch (const ConfigError& e) {
    line_to_stderr(std::string("freqlens: error: ") + e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    line_to_stderr(std::string("freqlens: failed: ") + e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
