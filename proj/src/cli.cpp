// Copyright 2026 The m3ddm-plus Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "m3ddm/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>

#include "m3ddm/codec.hpp"
#include "m3ddm/config.hpp"
#include "m3ddm/data.hpp"
#include "m3ddm/denoiser.hpp"
#include "m3ddm/diffusion.hpp"
#include "m3ddm/masking.hpp"
#include "m3ddm/metrics.hpp"
#include "m3ddm/pipeline.hpp"

#ifndef M3DDM_VERSION
#define M3DDM_VERSION "0.0.0"
#endif

namespace m3ddm {

namespace fs = std::filesystem;
using nlohmann::json;

std::string artifact_version() { return M3DDM_VERSION; }

json manifest_to_json(const RunManifest& m) {
  return json{{"command", m.command},         {"config", m.config},   {"seed", m.seed},
              {"checkpoints", m.checkpoints}, {"outputs", m.outputs}, {"wall_clock_seconds", m.wall_clock_seconds},
              {"version", m.version}};
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.config = j.at("config");
  m.seed = j.at("seed").get<std::uint64_t>();
  m.checkpoints = j.at("checkpoints").get<std::vector<std::string>>();
  m.outputs = j.at("outputs").get<std::vector<std::string>>();
  m.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
  m.version = j.at("version").get<std::string>();
  return m;
}

namespace {

// Bad flags, missing inputs, malformed configs: exit 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

using Clock = std::chrono::steady_clock;

std::uint64_t default_seed() {
  const char* env = std::getenv(kSeedEnv);
  if (env == nullptr || *env == '\0') return 0;
  const std::string text(env);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw UsageError(std::string(kSeedEnv) + " must be a non-negative integer, got '" + text + "'");
  return v;
}

void require_dir(const fs::path& p, const std::string& what) {
  if (!fs::is_directory(p)) throw UsageError(what + " not found: " + p.string());
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw UsageError(what + " not found: " + p.string());
}

KeyValueConfig load_config(const std::optional<fs::path>& path, const std::set<std::string>& allowed) {
  KeyValueConfig cfg;
  if (!path) return cfg;
  require_file(*path, "config file");
  cfg = KeyValueConfig::load(*path);
  for (const auto& [key, value] : cfg.entries())
    if (!allowed.count(key)) throw ConfigError("unknown config key '" + key + "' in " + path->string());
  return cfg;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, const KeyValueConfig& cfg) {
  if (flag) return *flag;
  if (cfg.has("seed")) {
    const long long v = cfg.get_int("seed", 0);
    if (v < 0) throw ConfigError("seed must be non-negative");
    return static_cast<std::uint64_t>(v);
  }
  return default_seed();
}

Index positive(long long v, const char* key) {
  if (v < 1) throw ConfigError(std::string(key) + " must be positive");
  return static_cast<Index>(v);
}

bool has_frames(const fs::path& dir) {
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) return true;
  }
  return false;
}

/// Relative paths of every directory under  (itself included) that holds frames.
std::vector<fs::path> video_dirs(const fs::path& root) {
  std::vector<fs::path> out;
  if (has_frames(root)) out.emplace_back(".");
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_directory() && has_frames(e.path())) out.push_back(fs::relative(e.path(), root));
  std::sort(out.begin(), out.end());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("write failed: " + path.string());
}

void finish(RunManifest& m, Clock::time_point start, const fs::path& where) {
  m.wall_clock_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  m.version = artifact_version();
  write_text(where, manifest_to_json(m).dump(2) + "\n");
}

fs::path sidecar(const fs::path& file, const std::string& suffix) { return fs::path(file.string() + suffix); }

std::pair<Index, Index> parse_aspect(const std::string& text) {
  const auto colon = text.find(':');
  auto num = [&](std::string_view s) {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || v <= 0)
      throw UsageError("--target-aspect must look like W:H with positive integers, got '" + text + "'");
    return static_cast<Index>(v);
  };
  if (colon == std::string::npos) throw UsageError("--target-aspect must look like W:H, got '" + text + "'");
  return {num(std::string_view(text).substr(0, colon)), num(std::string_view(text).substr(colon + 1))};
}

std::vector<Index> parse_intervals(const std::string& text) {
  KeyValueConfig tmp;
  tmp.set("intervals", text);
  std::vector<Index> out;
  try {
    for (long long v : tmp.get_int_list("intervals", {})) out.push_back(static_cast<Index>(v));
  } catch (const ConfigError&) {
    throw UsageError("--intervals must be a comma-separated list of integers, got '" + text + "'");
  }
  return out;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  fs::path config, out;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const auto start = Clock::now();
  const KeyValueConfig kv = load_config(a.config, {"videos", "test_videos", "test_static", "frames", "height", "width",
                                                   "kinds", "shapes_per_video", "max_pan_speed", "edge_softness",
                                                   "seed"});
  SynthConfig sc;
  const Index train_videos = static_cast<Index>(kv.get_int("videos", sc.videos));
  const Index test_videos = static_cast<Index>(kv.get_int("test_videos", 0));
  if (train_videos < 0 || test_videos < 0) throw ConfigError("video counts must be non-negative");
  const bool test_static = kv.get_bool("test_static", true);
  sc.videos = train_videos + test_videos;
  sc.frames = positive(kv.get_int("frames", sc.frames), "frames");
  sc.height = positive(kv.get_int("height", sc.height), "height");
  sc.width = positive(kv.get_int("width", sc.width), "width");
  sc.shapes_per_video = positive(kv.get_int("shapes_per_video", sc.shapes_per_video), "shapes_per_video");
  sc.max_pan_speed = static_cast<Index>(kv.get_int("max_pan_speed", sc.max_pan_speed));
  sc.edge_softness = kv.get_double("edge_softness", sc.edge_softness);
  if (kv.has("kinds")) {
    sc.kinds.clear();
    std::stringstream ss(kv.get_string("kinds", ""));
    for (std::string item; std::getline(ss, item, ',');) {
      item.erase(0, item.find_first_not_of(" \t"));
      item.erase(item.find_last_not_of(" \t") + 1);
      sc.kinds.push_back(parse_motion_kind(item));
    }
  }
  sc.seed = resolve_seed(a.seed, kv);

  if (fs::exists(a.out) && !fs::is_empty(a.out) && !a.force)
    throw IoError("output directory is not empty (use --force): " + a.out.string());
  const auto samples = synth_videos(sc);
  std::vector<ManifestEntry> entries;
  for (Index i = 0; i < sc.videos; ++i) {
    const bool test = i >= train_videos;
    const Index local = test ? i - train_videos : i;
    std::ostringstream rel;
    rel << (test ? "test" : "train") << "/" << std::setw(4) << std::setfill('0') << local;
    const auto& s = samples[static_cast<std::size_t>(i)];
    save_frames(test && test_static ? make_static(s.video) : s.video, a.out / rel.str(), true);
    entries.push_back({rel.str(), test ? "test" : "train", test && test_static ? "static" : to_string(s.kind)});
  }
  write_dataset_manifest(a.out / "manifest.json", entries);

  RunManifest m;
  m.command = "synth";
  std::vector<std::string> kinds;
  for (auto k : sc.kinds) kinds.push_back(to_string(k));
  m.config = json{{"videos", train_videos},
                  {"test_videos", test_videos},
                  {"test_static", test_static},
                  {"frames", sc.frames},
                  {"height", sc.height},
                  {"width", sc.width},
                  {"kinds", kinds},
                  {"shapes_per_video", sc.shapes_per_video},
                  {"max_pan_speed", sc.max_pan_speed},
                  {"edge_softness", sc.edge_softness}};
  m.seed = sc.seed;
  m.outputs = {a.out.string(), (a.out / "manifest.json").string()};
  finish(m, start, a.out / "run_manifest.json");
  out << "wrote " << train_videos << " train and " << test_videos << " test videos to " << a.out.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct MakeStaticArgs {
  fs::path in, out;
  bool force = false;
};

int cmd_make_static(const MakeStaticArgs& a, std::ostream& out) {
  const auto start = Clock::now();
  require_dir(a.in, "input directory");
  const auto dirs = video_dirs(a.in);
  if (dirs.empty()) throw IoError("no frames found under " + a.in.string());
  for (const auto& rel : dirs) save_frames(make_static(load_frames(a.in / rel)), a.out / rel, a.force);
  if (fs::is_regular_file(a.in / "manifest.json")) {
    auto entries = read_dataset_manifest(a.in / "manifest.json");
    for (auto& e : entries) e.kind = "static";
    write_dataset_manifest(a.out / "manifest.json", entries);
  }
  RunManifest m;
  m.command = "make-static";
  m.config = json{{"in", a.in.string()}};
  m.outputs = {a.out.string()};
  finish(m, start, a.out / "run_manifest.json");
  out << "wrote " << dirs.size() << " static video(s) to " << a.out.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::optional<fs::path> config;
  std::string mask_mode;
  fs::path data, out;
  std::optional<fs::path> init_from, codec;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const auto start = Clock::now();
  const MaskMode mode = parse_mask_mode(a.mask_mode);
  const KeyValueConfig kv =
      load_config(a.config, {"steps", "learning_rate", "batch_size", "clip_length", "global_frames", "seed",
                             "base_channels", "context_channels", "attention_channels", "time_features",
                             "context_pool", "codec_stride", "codec_channels", "split", "log_every"});
  require_dir(a.data, "data directory");
  require_file(a.data / "manifest.json", "dataset manifest");
  if (a.init_from) require_file(*a.init_from, "--init-from checkpoint");
  if (a.codec) require_file(*a.codec, "codec");

  TrainConfig tc;
  tc.mask_mode = mode;
  tc.steps = kv.get_int("steps", tc.steps);
  if (tc.steps < 0) throw ConfigError("steps must be non-negative");
  tc.learning_rate = kv.get_double("learning_rate", tc.learning_rate);
  if (!(tc.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  tc.batch_size = positive(kv.get_int("batch_size", tc.batch_size), "batch_size");
  tc.clip_length = positive(kv.get_int("clip_length", tc.clip_length), "clip_length");
  tc.global_frames = positive(kv.get_int("global_frames", tc.global_frames), "global_frames");
  tc.seed = resolve_seed(a.seed, kv);
  const std::string split = kv.get_string("split", "train");
  const long long log_every = kv.get_int("log_every", 100);

  const auto dataset = load_dataset(a.data / "manifest.json", split);
  if (dataset.empty()) throw ConfigError("split '" + split + "' of " + a.data.string() + " has no videos");

  CodecParams codec;
  std::string codec_source;
  if (a.codec) {
    codec = load_codec(*a.codec);
    codec_source = a.codec->string();
  } else if (a.init_from && fs::is_regular_file(sidecar(*a.init_from, ".codec"))) {
    codec = load_codec(sidecar(*a.init_from, ".codec"));
    codec_source = sidecar(*a.init_from, ".codec").string();
  } else {
    CodecConfig cc;
    cc.stride = static_cast<Index>(kv.get_int("codec_stride", cc.stride));
    cc.latent_channels = positive(kv.get_int("codec_channels", cc.latent_channels), "codec_channels");
    codec = train_codec(dataset, cc);
    codec_source = "fitted";
  }

  TrainState state;
  std::int64_t resumed_from = 0;
  if (a.init_from) {
    DenoiserCheckpoint ck = load_denoiser(*a.init_from);
    const DenoiserConfig& dc = ck.params.config;
    const std::pair<const char*, Index> sizes[] = {{"base_channels", dc.base_channels},
                                                   {"context_channels", dc.context_channels},
                                                   {"attention_channels", dc.attention_channels},
                                                   {"time_features", dc.time_features},
                                                   {"context_pool", dc.context_pool}};
    for (const auto& [key, value] : sizes)
      if (kv.has(key) && kv.get_int(key, 0) != value)
        throw ConfigError(std::string(key) + " differs from the --init-from checkpoint");
    if (dc.latent_channels != codec.latent_channels)
      throw ConfigError("codec latent channels do not match the --init-from checkpoint");
    resumed_from = ck.params.steps_trained;
    state = make_train_state(std::move(ck.params));
    if (ck.adam) state.adam = std::move(*ck.adam);
  } else {
    DenoiserConfig dc;
    dc.latent_channels = codec.latent_channels;
    dc.base_channels = positive(kv.get_int("base_channels", dc.base_channels), "base_channels");
    dc.context_channels = positive(kv.get_int("context_channels", dc.context_channels), "context_channels");
    dc.attention_channels = positive(kv.get_int("attention_channels", dc.attention_channels), "attention_channels");
    dc.time_features = positive(kv.get_int("time_features", dc.time_features), "time_features");
    dc.context_pool = positive(kv.get_int("context_pool", dc.context_pool), "context_pool");
    std::seed_seq init_seq{static_cast<std::uint32_t>(tc.seed), static_cast<std::uint32_t>(tc.seed >> 32), 0x1u};
    Rng init_rng(init_seq);
    state = make_train_state(init_denoiser<float>(dc, init_rng));
  }

  std::ostringstream log;
  log << "step,loss\n";
  log << std::setprecision(9);
  std::int64_t current = state.params.steps_trained;
  std::vector<double> losses;
  try {
    losses = train(dataset, codec, state, default_schedule(), tc, [&](std::int64_t step, double loss) {
      current = step;
      log << step << "," << loss << "\n";
      if (log_every > 0 && step % log_every == 0) out << "step " << step << " loss " << loss << "\n";
    });
  } catch (const DivergenceError& e) {
    throw DivergenceError("training diverged at step " + std::to_string(current + 1) + ": " + e.what());
  }

  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  save_denoiser(DenoiserCheckpoint{state.params, state.adam, mode, static_cast<std::int64_t>(tc.seed)}, a.out);
  save_codec(codec, sidecar(a.out, ".codec"));
  write_text(sidecar(a.out, ".loss.csv"), log.str());

  RunManifest m;
  m.command = "train";
  const auto probs = strategy_probabilities(mode);
  json prob_json = json::object();
  for (int k = 0; k < kMaskKindCount; ++k) prob_json[to_string(static_cast<MaskKind>(k))] = probs[k];
  const DenoiserConfig& dc = state.params.config;
  m.config = json{{"mask_mode", to_string(mode)},
                  {"strategy_probabilities", prob_json},
                  {"steps", tc.steps},
                  {"learning_rate", tc.learning_rate},
                  {"beta1", tc.beta1},
                  {"beta2", tc.beta2},
                  {"batch_size", tc.batch_size},
                  {"clip_length", tc.clip_length},
                  {"global_frames", tc.global_frames},
                  {"split", split},
                  {"data", a.data.string()},
                  {"codec", codec_source},
                  {"codec_stride", codec.stride},
                  {"codec_channels", codec.latent_channels},
                  {"base_channels", dc.base_channels},
                  {"context_channels", dc.context_channels},
                  {"attention_channels", dc.attention_channels},
                  {"time_features", dc.time_features},
                  {"context_pool", dc.context_pool},
                  {"diffusion_steps", kDefaultTrainSteps},
                  {"resumed_from_step", resumed_from},
                  {"steps_trained", state.params.steps_trained},
                  {"final_loss", losses.empty() ? json(nullptr) : json(losses.back())}};
  m.seed = tc.seed;
  if (a.init_from) m.checkpoints.push_back(a.init_from->string());
  if (a.codec) m.checkpoints.push_back(a.codec->string());
  m.outputs = {a.out.string(), sidecar(a.out, ".codec").string(), sidecar(a.out, ".loss.csv").string()};
  finish(m, start, sidecar(a.out, ".run.json"));
  out << "trained " << tc.steps << " step(s) in " << to_string(mode) << " mode; checkpoint " << a.out.string()
      << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct OutpaintArgs {
  fs::path checkpoint, input, out;
  std::optional<fs::path> codec, config;
  std::string target_aspect = "1:1";
  std::optional<std::string> intervals;
  std::optional<std::uint64_t> seed;
  std::optional<Index> canvas_size, inference_steps;
  bool allow_untrained = false;
  bool force = false;
};

int cmd_outpaint(const OutpaintArgs& a, std::ostream& out) {
  const auto start = Clock::now();
  const KeyValueConfig kv = load_config(a.config, {"intervals", "canvas_size", "window", "global_frames",
                                                   "inference_steps", "fill_iterations", "latent_clip", "seed"});
  require_file(a.checkpoint, "checkpoint");
  require_dir(a.input, "input directory");
  const fs::path codec_path = a.codec ? *a.codec : sidecar(a.checkpoint, ".codec");
  require_file(codec_path, "codec");
  const auto [aspect_w, aspect_h] = parse_aspect(a.target_aspect);

  const DenoiserCheckpoint ck = load_denoiser(a.checkpoint);
  const CodecParams codec = load_codec(codec_path);
  const VideoTensor input = load_frames(a.input);

  InferConfig ic;
  if (a.intervals) {
    ic.intervals = parse_intervals(*a.intervals);
  } else if (kv.has("intervals")) {
    ic.intervals.clear();
    for (long long v : kv.get_int_list("intervals", {})) ic.intervals.push_back(static_cast<Index>(v));
  }
  const Index unit = 2 * codec.stride;
  const Index fit = (std::max(input.height(), input.width()) + unit - 1) / unit * unit;
  ic.canvas_size = a.canvas_size ? *a.canvas_size : static_cast<Index>(kv.get_int("canvas_size", fit));
  ic.window = positive(kv.get_int("window", ic.window), "window");
  ic.global_frames = positive(kv.get_int("global_frames", ic.global_frames), "global_frames");
  ic.inference_steps = static_cast<int>(
      a.inference_steps ? *a.inference_steps : positive(kv.get_int("inference_steps", ic.inference_steps), "inference_steps"));
  ic.fill_iterations = static_cast<Index>(kv.get_int("fill_iterations", ic.fill_iterations));
  ic.latent_clip = kv.get_double("latent_clip", ic.latent_clip);
  ic.aspect_w = aspect_w;
  ic.aspect_h = aspect_h;
  ic.seed = resolve_seed(a.seed, kv);
  ic.allow_untrained = a.allow_untrained;

  const OutpaintResult r = outpaint(input, codec, ck.params, default_schedule(), ic);
  save_frames(r.output, a.out, a.force);

  RunManifest m;
  m.command = "outpaint";
  m.config = json{{"input", a.input.string()},
                  {"target_aspect", std::to_string(aspect_w) + ":" + std::to_string(aspect_h)},
                  {"intervals", ic.intervals},
                  {"canvas_size", ic.canvas_size},
                  {"window", ic.window},
                  {"global_frames", ic.global_frames},
                  {"inference_steps", ic.inference_steps},
                  {"fill_iterations", ic.fill_iterations},
                  {"latent_clip", ic.latent_clip},
                  {"allow_untrained", ic.allow_untrained},
                  {"checkpoint_steps_trained", ck.params.steps_trained},
                  {"checkpoint_mask_mode", to_string(ck.mask_mode)},
                  {"output_height", r.output.height()},
                  {"output_width", r.output.width()}};
  m.seed = ic.seed;
  m.checkpoints = {a.checkpoint.string(), codec_path.string()};
  m.outputs = {a.out.string()};
  finish(m, start, a.out / "run_manifest.json");
  out << "outpainted " << input.frames() << " frame(s) " << input.height() << "x" << input.width() << " -> "
      << r.output.height() << "x" << r.output.width() << " into " << a.out.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct CropArgs {
  fs::path in, out;
  double mask_ratio = 0.0;
  bool force = false;
};

int cmd_crop_input(const CropArgs& a, std::ostream& out) {
  const auto start = Clock::now();
  require_dir(a.in, "input directory");
  const auto dirs = video_dirs(a.in);
  if (dirs.empty()) throw IoError("no frames found under " + a.in.string());
  for (const auto& rel : dirs) save_frames(crop_eval_input(load_frames(a.in / rel), a.mask_ratio).input, a.out / rel, a.force);
  RunManifest m;
  m.command = "crop-input";
  m.config = json{{"in", a.in.string()}, {"mask_ratio", a.mask_ratio}};
  m.outputs = {a.out.string()};
  finish(m, start, a.out / "run_manifest.json");
  out << "cropped " << dirs.size() << " video(s) at mask ratio " << a.mask_ratio << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  fs::path gt, gen, report;
  double mask_ratio = 0.0;
  std::string model, dataset = "synthetic";
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto start = Clock::now();
  require_dir(a.gt, "ground-truth directory");
  require_dir(a.gen, "generated directory");
  if (!(a.mask_ratio >= 0.0 && a.mask_ratio < 1.0)) throw UsageError("--mask-ratio must be in [0, 1)");
  const auto dirs = video_dirs(a.gt);
  if (dirs.empty()) throw IoError("no frames found under " + a.gt.string());

  MetricsReport report;
  report.dataset = a.dataset;
  report.model = a.model;
  report.mask_ratio = a.mask_ratio;
  EvalConfig ec;
  ec.dataset = a.dataset;
  ec.model = a.model;
  ec.mask_ratio = a.mask_ratio;
  for (const auto& rel : dirs) {
    if (!fs::is_directory(a.gen / rel)) throw IoError("generated video missing: " + (a.gen / rel).string());
    const VideoTensor gt = load_frames(a.gt / rel);
    const VideoTensor gen = load_frames(a.gen / rel);
    require_same_shape(gt.shape(), gen.shape(), "eval " + rel.string() + " (gt vs gen)");
    ec.video_name = rel.string();
    report.videos.push_back(evaluate_video(gt, gen, crop_eval_input(gt, a.mask_ratio).mask, ec));
  }
  write_report(report, a.report);

  RunManifest m;
  m.command = "eval";
  m.config = json{{"gt", a.gt.string()}, {"gen", a.gen.string()}, {"mask_ratio", a.mask_ratio},
                  {"model", a.model},    {"dataset", a.dataset}};
  m.outputs = {a.report.string()};
  finish(m, start, sidecar(a.report, ".run.json"));
  out << report_table(report);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct PreviewArgs {
  std::string mode = "m3ddm";
  fs::path out;
  Index frames = 16, height = 64, width = 64;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

int cmd_mask_preview(const PreviewArgs& a, std::ostream& out) {
  const auto start = Clock::now();
  const MaskMode mode = parse_mask_mode(a.mode);
  const std::uint64_t seed = a.seed ? *a.seed : default_seed();
  Rng rng(seed);
  const MaskVideo mask = sample_video_mask(mode, a.frames, a.height, a.width, rng);
  save_mask_frames(mask, a.out, a.force);
  RunManifest m;
  m.command = "mask-preview";
  m.config = json{{"mask_mode", to_string(mode)}, {"frames", a.frames}, {"height", a.height}, {"width", a.width}};
  m.seed = seed;
  m.outputs = {a.out.string()};
  finish(m, start, a.out / "run_manifest.json");
  out << "wrote " << a.frames << " mask frame(s) to " << a.out.string() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Video outpainting with masked 3D latent diffusion (toy scale)", "m3ddm"};
  app.require_subcommand(1);
  app.set_version_flag("--version", artifact_version());

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic video dataset");
  s->add_option("--config", synth.config, "key = value config file")->required();
  s->add_option("--out", synth.out, "Output dataset directory")->required();
  s->add_option("--seed", synth.seed, "Seed (overrides config and " + std::string(kSeedEnv) + ")");
  s->add_flag("--force", synth.force, "Write into a non-empty directory");

  MakeStaticArgs stat;
  auto* ms = app.add_subcommand("make-static", "Replace every frame with the first one");
  ms->add_option("--in", stat.in, "Input frames directory (or dataset root)")->required();
  ms->add_option("--out", stat.out, "Output directory")->required();
  ms->add_flag("--force", stat.force, "Overwrite existing frames");

  TrainArgs train_args;
  auto* t = app.add_subcommand("train", "Fit the codec and train the denoiser");
  t->add_option("--config", train_args.config, "key = value config file");
  t->add_option("--mask-mode", train_args.mask_mode, "m3ddm or m3ddm-plus")->required();
  t->add_option("--data", train_args.data, "Dataset directory written by synth")->required();
  t->add_option("--out", train_args.out, "Output checkpoint path")->required();
  t->add_option("--init-from", train_args.init_from, "Continue from this checkpoint");
  t->add_option("--codec", train_args.codec, "Use this codec instead of fitting one");
  t->add_option("--seed", train_args.seed, "Seed (overrides config and " + std::string(kSeedEnv) + ")");

  OutpaintArgs op;
  auto* o = app.add_subcommand("outpaint", "Extend a video onto a larger canvas");
  o->add_option("--checkpoint", op.checkpoint, "Denoiser checkpoint")->required();
  o->add_option("--input", op.input, "Input frames directory")->required();
  o->add_option("--out", op.out, "Output frames directory")->required();
  o->add_option("--codec", op.codec, "Codec file (default: <checkpoint>.codec)");
  o->add_option("--config", op.config, "key = value inference config");
  o->add_option("--target-aspect", op.target_aspect, "Output aspect W:H")->capture_default_str();
  o->add_option("--intervals", op.intervals, "Coarse-to-fine frame strides (default 5,3,1)");
  o->add_option("--canvas-size", op.canvas_size, "Square canvas side in pixels");
  o->add_option("--inference-steps", op.inference_steps, "Reverse diffusion steps");
  o->add_option("--seed", op.seed, "Seed (overrides config and " + std::string(kSeedEnv) + ")");
  o->add_flag("--allow-untrained", op.allow_untrained, "Permit a checkpoint with zero training steps");
  o->add_flag("--force", op.force, "Overwrite existing frames");

  CropArgs crop;
  auto* c = app.add_subcommand("crop-input", "Cut the central columns of a video for evaluation");
  c->add_option("--in", crop.in, "Ground-truth frames directory (or dataset root)")->required();
  c->add_option("--mask-ratio", crop.mask_ratio, "Fraction of the width to remove")->required()->check(
      CLI::Range(0.0, 0.999));
  c->add_option("--out", crop.out, "Output directory")->required();
  c->add_flag("--force", crop.force, "Overwrite existing frames");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score generated videos against ground truth");
  e->add_option("--gt", ev.gt, "Ground-truth frames directory (or dataset root)")->required();
  e->add_option("--gen", ev.gen, "Generated frames directory (same layout)")->required();
  e->add_option("--mask-ratio", ev.mask_ratio, "Mask ratio used to build the inputs")->required();
  e->add_option("--report", ev.report, "Report path (JSON)")->required();
  e->add_option("--model", ev.model, "Model label for the report");
  e->add_option("--dataset", ev.dataset, "Dataset label for the report")->capture_default_str();

  PreviewArgs pv;
  auto* p = app.add_subcommand("mask-preview", "Write a sampled training mask video as gray frames");
  p->add_option("--mask-mode", pv.mode, "m3ddm or m3ddm-plus")->capture_default_str();
  p->add_option("--out", pv.out, "Output directory")->required();
  p->add_option("--frames", pv.frames, "Frames")->capture_default_str()->check(CLI::PositiveNumber);
  p->add_option("--height", pv.height, "Height")->capture_default_str()->check(CLI::Range(8, 4096));
  p->add_option("--width", pv.width, "Width")->capture_default_str()->check(CLI::Range(8, 4096));
  p->add_option("--seed", pv.seed, "Seed (overrides " + std::string(kSeedEnv) + ")");
  p->add_flag("--force", pv.force, "Overwrite existing frames");

  std::vector<const char*> argv{"m3ddm"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << artifact_version() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "usage error: " << ex.what() << "\n";
    if (app.get_subcommands().size() == 1) err << app.get_subcommands().front()->help();
    return kExitUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out);
    if (ms->parsed()) return cmd_make_static(stat, out);
    if (t->parsed()) return cmd_train(train_args, out);
    if (o->parsed()) return cmd_outpaint(op, out);
    if (c->parsed()) return cmd_crop_input(crop, out);
    if (e->parsed()) return cmd_eval(ev, out);
    if (p->parsed()) return cmd_mask_preview(pv, out);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& ex) {
    err << "config error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitRuntime;
  }
  err << "no command given\n";
  return kExitUsage;
}

}  // namespace m3ddm
