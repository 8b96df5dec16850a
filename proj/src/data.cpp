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

#include "m3ddm/data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <numbers>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace m3ddm {

namespace fs = std::filesystem;

namespace {

struct Image8 {
  Index width = 0;
  Index height = 0;
  int channels = 3;
  std::vector<unsigned char> pixels;
};

void skip_space_and_comments(std::istream& is) {
  while (true) {
    const int c = is.peek();
    if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else if (std::isspace(c)) {
      is.get();
    } else {
      return;
    }
  }
}

Image8 read_netpbm(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open image: " + path.string());
  std::string magic;
  is >> magic;
  if (magic != "P6" && magic != "P5") throw IoError("unsupported image format (need binary PPM/PGM): " + path.string());
  Image8 img;
  img.channels = magic == "P6" ? 3 : 1;
  long long w = 0, h = 0, maxval = 0;
  skip_space_and_comments(is);
  is >> w;
  skip_space_and_comments(is);
  is >> h;
  skip_space_and_comments(is);
  is >> maxval;
  if (!is || w <= 0 || h <= 0 || maxval != 255) throw IoError("malformed image header: " + path.string());
  is.get();  // single whitespace before the raster
  img.width = w;
  img.height = h;
  img.pixels.resize(static_cast<std::size_t>(w * h * img.channels));
  if (!is.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size())))
    throw IoError("truncated image: " + path.string());
  return img;
}

void write_netpbm(const fs::path& path, const Image8& img) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write image: " + path.string());
  os << (img.channels == 3 ? "P6" : "P5") << "\n" << img.width << " " << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!os) throw IoError("failed writing image: " + path.string());
}

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::string frame_name(Index i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06lld.%s", static_cast<long long>(i), ext);
  return buf;
}

void prepare_output_dir(const fs::path& dir, bool overwrite) {
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    if (!fs::is_directory(dir)) throw IoError("output path exists and is not a directory: " + dir.string());
    if (!fs::is_empty(dir)) {
      if (!overwrite) throw IoError("output directory is not empty (use overwrite/--force): " + dir.string());
      for (const auto& entry : fs::directory_iterator(dir)) {
        const auto ext = entry.path().extension();
        if (entry.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) fs::remove(entry.path());
      }
    }
  } else {
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  }
}

}  // namespace

VideoTensor load_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("frame directory does not exist: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) files.push_back(entry.path());
  }
  if (files.empty()) throw IoError("no frames (*.ppm, *.pgm) in directory: " + dir.string());
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });

  std::vector<Image8> images;
  images.reserve(files.size());
  for (const auto& f : files) {
    images.push_back(read_netpbm(f));
    if (images.back().width != images.front().width || images.back().height != images.front().height)
      throw IoError("frame " + f.string() + " is " + std::to_string(images.back().width) + "x" +
                    std::to_string(images.back().height) + ", expected " + std::to_string(images.front().width) +
                    "x" + std::to_string(images.front().height));
  }
  const Index T = static_cast<Index>(images.size()), Hh = images.front().height, Ww = images.front().width;
  VideoTensor video(T, Hh, Ww, 3);
  for (Index t = 0; t < T; ++t) {
    const Image8& img = images[static_cast<std::size_t>(t)];
    for (Index y = 0; y < Hh; ++y)
      for (Index x = 0; x < Ww; ++x)
        for (Index c = 0; c < 3; ++c) {
          const std::size_t idx = static_cast<std::size_t>((y * Ww + x) * img.channels + (img.channels == 3 ? c : 0));
          video(t, y, x, c) = static_cast<double>(img.pixels[idx]) / 255.0;
        }
  }
  return video;
}

void save_frames(const VideoTensor& video, const fs::path& dir, bool overwrite) {
  if (video.channels() != 3) throw ShapeError("channels", "save_frames expects RGB video");
  prepare_output_dir(dir, overwrite);
  for (Index t = 0; t < video.frames(); ++t) {
    Image8 img{video.width(), video.height(), 3, {}};
    img.pixels.reserve(static_cast<std::size_t>(video.sites_per_frame() * 3));
    for (Index y = 0; y < video.height(); ++y)
      for (Index x = 0; x < video.width(); ++x)
        for (Index c = 0; c < 3; ++c) img.pixels.push_back(to_byte(video(t, y, x, c)));
    write_netpbm(dir / frame_name(t, "ppm"), img);
  }
}

void save_mask_frames(const MaskVideo& mask, const fs::path& dir, bool overwrite) {
  prepare_output_dir(dir, overwrite);
  for (Index t = 0; t < mask.frames(); ++t) {
    Image8 img{mask.width(), mask.height(), 1, {}};
    for (Index y = 0; y < mask.height(); ++y)
      for (Index x = 0; x < mask.width(); ++x) img.pixels.push_back(mask(t, y, x, 0) > 0.5 ? 255 : 0);
    write_netpbm(dir / frame_name(t, "pgm"), img);
  }
}

VideoTensor make_static(const VideoTensor& video) {
  if (video.frames() < 1) throw ShapeError("frames", "make_static needs at least one frame");
  VideoTensor out = video;
  for (Index t = 1; t < video.frames(); ++t) out.frame(t) = video.frame(0);
  return out;
}

std::string to_string(MotionKind kind) {
  switch (kind) {
    case MotionKind::Pan: return "pan";
    case MotionKind::Object: return "object";
    case MotionKind::Static: return "static";
  }
  return "unknown";
}

MotionKind parse_motion_kind(const std::string& text) {
  if (text == "pan") return MotionKind::Pan;
  if (text == "object") return MotionKind::Object;
  if (text == "static") return MotionKind::Static;
  throw ConfigError("unknown motion kind '" + text + "' (expected pan, object or static)");
}

namespace {

using Rgb = std::array<double, 3>;

struct Blob {
  int form = 0;  // 0 disc, 1 square, 2 ellipse
  double cx = 0, cy = 0, radius = 0, aspect = 1;
  double vx = 0, vy = 0;
  Rgb color{};
};

struct Scene {
  Rgb base{}, tint{};
  double gradient_angle = 0, gradient_scale = 1;
  Rgb wave{};
  double wave_angle = 0, wave_freq = 0, wave_phase = 0;
  std::vector<Blob> blobs;
};

Rgb random_color(Rng& rng) {
  std::uniform_real_distribution<double> u(0.1, 0.9);
  return {u(rng), u(rng), u(rng)};
}

Scene random_scene(Rng& rng, Index scene_h, Index scene_w, const SynthConfig& cfg, bool moving_blobs) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Scene s;
  s.base = random_color(rng);
  s.tint = random_color(rng);
  s.gradient_angle = 2.0 * std::numbers::pi * u(rng);
  s.gradient_scale = static_cast<double>(std::max(scene_h, scene_w));
  s.wave = {0.15 * (u(rng) - 0.5), 0.15 * (u(rng) - 0.5), 0.15 * (u(rng) - 0.5)};
  s.wave_angle = 2.0 * std::numbers::pi * u(rng);
  s.wave_freq = 2.0 * std::numbers::pi / (16.0 + 32.0 * u(rng));
  s.wave_phase = 2.0 * std::numbers::pi * u(rng);
  const double side = static_cast<double>(std::min(cfg.height, cfg.width));
  for (Index i = 0; i < cfg.shapes_per_video; ++i) {
    Blob b;
    b.form = static_cast<int>(std::floor(3.0 * u(rng))) % 3;
    b.cx = u(rng) * static_cast<double>(scene_w);
    b.cy = u(rng) * static_cast<double>(scene_h);
    b.radius = side * (0.08 + 0.12 * u(rng));
    b.aspect = 0.6 + 0.8 * u(rng);
    b.color = random_color(rng);
    if (moving_blobs) {
      b.vx = 3.0 * (u(rng) - 0.5);
      b.vy = 3.0 * (u(rng) - 0.5);
    }
    s.blobs.push_back(b);
  }
  return s;
}

double coverage(const Blob& b, double x, double y, double time, double softness) {
  const double dx = x - (b.cx + time * b.vx), dy = y - (b.cy + time * b.vy);
  double d = 0.0;
  switch (b.form) {
    case 0: d = b.radius - std::hypot(dx, dy); break;
    case 1: d = b.radius - std::max(std::abs(dx), std::abs(dy)); break;
    default: d = b.radius * (1.0 - std::hypot(dx / b.aspect, dy * b.aspect) / b.radius); break;
  }
  return 0.5 * (1.0 + std::tanh(d / softness));
}

// Renders the scene window [oy, oy + H) x [ox, ox + W) at `time` into frame t of `out`.
void render(const Scene& s, double time, Index ox, Index oy, double softness, VideoTensor& out, Index t) {
  const double ca = std::cos(s.gradient_angle), sa = std::sin(s.gradient_angle);
  const double cw = std::cos(s.wave_angle), sw = std::sin(s.wave_angle);
  for (Index y = 0; y < out.height(); ++y)
    for (Index x = 0; x < out.width(); ++x) {
      const double sx = static_cast<double>(x + ox) + 0.5, sy = static_cast<double>(y + oy) + 0.5;
      const double g = 0.5 + 0.5 * (sx * ca + sy * sa) / s.gradient_scale;
      const double wave = std::sin(s.wave_freq * (sx * cw + sy * sw) + s.wave_phase);
      Rgb px{};
      for (int c = 0; c < 3; ++c) px[c] = (1.0 - g) * s.base[c] + g * s.tint[c] + wave * s.wave[c];
      for (const auto& b : s.blobs) {
        const double a = coverage(b, sx, sy, time, softness);
        for (int c = 0; c < 3; ++c) px[c] = (1.0 - a) * px[c] + a * b.color[c];
      }
      for (int c = 0; c < 3; ++c) out(t, y, x, c) = std::clamp(px[c], 0.0, 1.0);
    }
}

}  // namespace

std::vector<SynthVideo> synth_videos(const SynthConfig& cfg) {
  if (cfg.videos < 0 || cfg.frames < 1) throw ConfigError("synth: need videos >= 0 and frames >= 1");
  if (cfg.height < kMinFrameSide || cfg.width < kMinFrameSide) throw ConfigError("synth: frames must be at least 8x8");
  if (cfg.kinds.empty()) throw ConfigError("synth: no motion kinds");
  if (cfg.edge_softness <= 0.0) throw ConfigError("synth: edge_softness must be positive");
  std::vector<SynthVideo> out;
  out.reserve(static_cast<std::size_t>(cfg.videos));
  for (Index i = 0; i < cfg.videos; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(i)};
    Rng rng(seq);
    SynthVideo sv;
    sv.kind = cfg.kinds[static_cast<std::size_t>(i) % cfg.kinds.size()];
    sv.video = VideoTensor(cfg.frames, cfg.height, cfg.width, 3);
    switch (sv.kind) {
      case MotionKind::Pan: {
        std::uniform_int_distribution<Index> speed(-cfg.max_pan_speed, cfg.max_pan_speed);
        do {
          sv.velocity_x = speed(rng);
          sv.velocity_y = speed(rng) / 2;
        } while (sv.velocity_x == 0 && sv.velocity_y == 0 && cfg.max_pan_speed > 0);
        const Index span_x = (cfg.frames - 1) * std::abs(sv.velocity_x);
        const Index span_y = (cfg.frames - 1) * std::abs(sv.velocity_y);
        sv.origin_x = sv.velocity_x < 0 ? span_x : 0;
        sv.origin_y = sv.velocity_y < 0 ? span_y : 0;
        const Index scene_h = cfg.height + span_y, scene_w = cfg.width + span_x;
        const Scene scene = random_scene(rng, scene_h, scene_w, cfg, false);
        sv.scene = VideoTensor(1, scene_h, scene_w, 3);
        render(scene, 0.0, 0, 0, cfg.edge_softness, sv.scene, 0);
        for (Index t = 0; t < cfg.frames; ++t) {
          const Index ox = sv.origin_x + t * sv.velocity_x, oy = sv.origin_y + t * sv.velocity_y;
          for (Index y = 0; y < cfg.height; ++y)
            sv.video.frame(t).middleRows(y * cfg.width, cfg.width) =
                sv.scene.frame(0).middleRows((y + oy) * scene_w + ox, cfg.width);
        }
        break;
      }
      case MotionKind::Object: {
        const Scene scene = random_scene(rng, cfg.height, cfg.width, cfg, true);
        for (Index t = 0; t < cfg.frames; ++t)
          render(scene, static_cast<double>(t), 0, 0, cfg.edge_softness, sv.video, t);
        break;
      }
      case MotionKind::Static: {
        const Scene scene = random_scene(rng, cfg.height, cfg.width, cfg, false);
        render(scene, 0.0, 0, 0, cfg.edge_softness, sv.video, 0);
        sv.video = make_static(sv.video);
        break;
      }
    }
    out.push_back(std::move(sv));
  }
  return out;
}

std::vector<VideoTensor> videos_of(const std::vector<SynthVideo>& samples) {
  std::vector<VideoTensor> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.video);
  return out;
}

EvalInput crop_eval_input(const VideoTensor& gt, double mask_ratio) {
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) throw ValueError("mask ratio must lie in [0, 1)");
  const Index W = gt.width();
  const Index masked = static_cast<Index>(std::floor(mask_ratio * static_cast<double>(W) + 1e-9));
  const Index keep = W - masked;
  if (keep < kMinFrameSide)
    throw ShapeError("width", "cropped input would be " + std::to_string(keep) + " columns wide (< 8)");
  EvalInput r;
  r.left = masked / 2;
  r.right = masked - r.left;
  r.input = VideoTensor(gt.frames(), gt.height(), keep, gt.channels());
  for (Index t = 0; t < gt.frames(); ++t)
    for (Index y = 0; y < gt.height(); ++y)
      r.input.frame(t).middleRows(y * keep, keep) = gt.frame(t).middleRows(y * W + r.left, keep);
  Plane m = Plane::Zero(gt.height(), W);
  m.leftCols(r.left).setOnes();
  m.rightCols(r.right).setOnes();
  r.mask = replicate_mask(m, gt.frames());
  return r;
}

void write_dataset_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  nlohmann::json j;
  j["format"] = "m3ddm-dataset";
  j["version"] = 1;
  j["videos"] = nlohmann::json::array();
  for (const auto& e : entries) j["videos"].push_back({{"path", e.path}, {"split", e.split}, {"kind", e.kind}});
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw IoError("cannot write dataset manifest: " + path.string());
  os << j.dump(2) << "\n";
}

std::vector<ManifestEntry> read_dataset_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read dataset manifest: " + path.string());
  try {
    const auto j = nlohmann::json::parse(is);
    std::vector<ManifestEntry> out;
    for (const auto& v : j.at("videos"))
      out.push_back({v.at("path").get<std::string>(), v.at("split").get<std::string>(),
                     v.value("kind", std::string())});
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed dataset manifest " + path.string() + ": " + e.what());
  }
}

std::vector<VideoTensor> load_dataset(const fs::path& manifest_path, const std::string& split) {
  std::vector<VideoTensor> out;
  for (const auto& e : read_dataset_manifest(manifest_path))
    if (split.empty() || e.split == split) out.push_back(load_frames(manifest_path.parent_path() / e.path));
  return out;
}

}  // namespace m3ddm
