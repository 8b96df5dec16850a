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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "m3ddm/core.hpp"

namespace m3ddm {

/// Reads every *.ppm / *.pgm file in `dir` in lexicographic name order. Gray frames are
/// replicated to RGB. Throws IoError on an empty directory, unreadable image, or a
/// frame whose size differs from the first (the message names the file).
VideoTensor load_frames(const std::filesystem::path& dir);

/// Writes 000000.ppm, 000001.ppm, ... (8-bit, values clamped to [0, 1]). Refuses to
/// write into a non-empty directory unless `overwrite` is set.
void save_frames(const VideoTensor& video, const std::filesystem::path& dir, bool overwrite = false);

/// Mask preview: 8-bit gray frames, 0 = known, 255 = outpaint.
void save_mask_frames(const MaskVideo& mask, const std::filesystem::path& dir, bool overwrite = false);

/// Replaces every frame with the first one.
VideoTensor make_static(const VideoTensor& video);

enum class MotionKind { Pan, Object, Static };
std::string to_string(MotionKind kind);
MotionKind parse_motion_kind(const std::string& text);

struct SynthConfig {
  Index videos = 32;
  Index frames = 16;
  Index height = 64;
  Index width = 64;
  std::vector<MotionKind> kinds{MotionKind::Pan, MotionKind::Object, MotionKind::Static};
  Index shapes_per_video = 3;
  /// Pan velocity bound in whole pixels per frame.
  Index max_pan_speed = 2;
  /// Edge softness of rendered shapes, in pixels.
  double edge_softness = 1.5;
  std::uint64_t seed = 0;
};

struct SynthVideo {
  VideoTensor video;
  MotionKind kind = MotionKind::Static;
  /// Pan only: the hidden scene (one frame) and per-frame viewport offset
  /// (origin + k * velocity).
  VideoTensor scene;
  Index origin_x = 0;
  Index origin_y = 0;
  Index velocity_x = 0;
  Index velocity_y = 0;
};

/// Soft-edged shapes over smooth backgrounds; video i uses kinds[i % kinds.size()] and
/// an rng derived from (seed, i), so output is deterministic per seed.
std::vector<SynthVideo> synth_videos(const SynthConfig& config);
std::vector<VideoTensor> videos_of(const std::vector<SynthVideo>& samples);

struct EvalInput {
  VideoTensor input;
  MaskVideo mask;
  Index left = 0;   // masked columns on the left
  Index right = 0;  // masked columns on the right
};

/// Keeps the central columns of `gt` and masks floor(ratio * W) columns split evenly
/// between the sides (odd remainder on the right).
EvalInput crop_eval_input(const VideoTensor& gt, double mask_ratio);

struct ManifestEntry {
  std::string path;  // relative to the manifest directory
  std::string split;
  std::string kind;
};

void write_dataset_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_dataset_manifest(const std::filesystem::path& path);
/// Loads every video listed in a manifest, optionally filtered by split.
std::vector<VideoTensor> load_dataset(const std::filesystem::path& manifest_path, const std::string& split = "");

}  // namespace m3ddm
