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

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "m3ddm/core.hpp"

namespace m3ddm {

enum class MaskKind { FourSided = 0, TwoSided, SingleSided, Random, FullFrame };
inline constexpr int kMaskKindCount = 5;

enum Side : std::uint8_t { kLeft = 1, kRight = 2, kTop = 4, kBottom = 8 };
inline constexpr std::uint8_t kAllSides = kLeft | kRight | kTop | kBottom;

/// Training-time mask sampling regime.
/// M3DDM draws a strategy per frame; M3DDMPlus draws one per clip and repeats it.
enum class MaskMode { M3DDM, M3DDMPlus };

inline constexpr double kMinMaskRatio = 0.15;
inline constexpr double kMaxMaskRatio = 0.75;

/// Which frame edges are banded and how far in. `ratio` is a fraction of the
/// boundary-to-center distance. Random strategies carry one ratio per side in
/// `side_ratios` (indexed left, right, top, bottom).
struct MaskStrategy {
  MaskKind kind = MaskKind::FourSided;
  std::uint8_t sides = kAllSides;
  double ratio = 0.5;
  std::array<double, 4> side_ratios{};

  bool operator==(const MaskStrategy&) const = default;
};

/// Categorical probabilities over MaskKind (in enum order) for a mode.
std::array<double, kMaskKindCount> strategy_probabilities(MaskMode mode);

MaskStrategy sample_strategy(MaskMode mode, Rng& rng);

/// Band width in pixels for a ratio over a dimension: round-half-up of
/// ratio * dim / 2, at least 1 when ratio > 0.
Index band_width(double ratio, Index dim);

Plane render_frame_mask(const MaskStrategy& strategy, Index height, Index width);

MaskVideo sample_video_mask(MaskMode mode, Index frames, Index height, Index width, Rng& rng);

/// Mask for an input_h x input_w video centered in a canvas: 0 on the input
/// rectangle, 1 elsewhere. Odd margins put the extra row/column bottom/right.
Plane outpaint_mask(Index canvas_h, Index canvas_w, Index input_h, Index input_w);

/// x * (1 - M), channel-broadcast.
VideoTensor apply_mask(const VideoTensor& video, const MaskVideo& mask);

std::string to_string(MaskMode mode);
std::string to_string(MaskKind kind);
/// Accepts "m3ddm" and "m3ddm-plus"; throws ConfigError otherwise.
MaskMode parse_mask_mode(std::string_view text);

}  // namespace m3ddm
