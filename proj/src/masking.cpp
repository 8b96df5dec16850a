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

#include "m3ddm/masking.hpp"

#include <algorithm>
#include <cmath>

namespace m3ddm {

std::array<double, kMaskKindCount> strategy_probabilities(MaskMode mode) {
  // Order: four-sided, two-sided, single-sided, random, full-frame.
  if (mode == MaskMode::M3DDM) return {0.2, 0.1, 0.35, 0.1, 0.25};
  return {0.3, 0.55, 0.15, 0.0, 0.0};
}

namespace {

double sample_ratio(Rng& rng) {
  return std::uniform_real_distribution<double>(kMinMaskRatio, kMaxMaskRatio)(rng);
}

constexpr std::array<std::uint8_t, 4> kSideOrder = {kLeft, kRight, kTop, kBottom};

}  // namespace

MaskStrategy sample_strategy(MaskMode mode, Rng& rng) {
  const auto probs = strategy_probabilities(mode);
  std::discrete_distribution<int> pick_kind(probs.begin(), probs.end());
  MaskStrategy s;
  s.kind = static_cast<MaskKind>(pick_kind(rng));
  switch (s.kind) {
    case MaskKind::FourSided:
      s.sides = kAllSides;
      break;
    case MaskKind::TwoSided:
      s.sides = std::uniform_int_distribution<int>(0, 1)(rng) == 0 ? (kLeft | kRight)
                                                                   : (kTop | kBottom);
      break;
    case MaskKind::SingleSided:
      s.sides = kSideOrder[std::uniform_int_distribution<int>(0, 3)(rng)];
      break;
    case MaskKind::Random: {
      std::bernoulli_distribution coin(0.5);
      do {
        s.sides = 0;
        for (auto side : kSideOrder)
          if (coin(rng)) s.sides |= side;
      } while (s.sides == 0);
      for (int i = 0; i < 4; ++i) s.side_ratios[i] = (s.sides & kSideOrder[i]) ? sample_ratio(rng) : 0.0;
      break;
    }
    case MaskKind::FullFrame:
      s.sides = kAllSides;
      break;
  }
  s.ratio = sample_ratio(rng);
  return s;
}

Index band_width(double ratio, Index dim) {
  if (ratio <= 0.0) return 0;
  const auto w = static_cast<Index>(std::floor(ratio * static_cast<double>(dim) / 2.0 + 0.5));
  return std::clamp<Index>(w, 1, dim);
}

Plane render_frame_mask(const MaskStrategy& strategy, Index height, Index width) {
  if (height < kMinFrameSide || width < kMinFrameSide)
    throw ShapeError(height < kMinFrameSide ? "height" : "width", "mask frames must be at least 8x8");
  Plane m = Plane::Zero(height, width);
  if (strategy.kind == MaskKind::FullFrame) {
    m.setOnes();
    return m;
  }
  for (int i = 0; i < 4; ++i) {
    const auto side = kSideOrder[i];
    if (!(strategy.sides & side)) continue;
    const double r = strategy.kind == MaskKind::Random ? strategy.side_ratios[i] : strategy.ratio;
    const bool horizontal = side == kLeft || side == kRight;
    const Index band = band_width(r, horizontal ? width : height);
    switch (side) {
      case kLeft: m.leftCols(band).setOnes(); break;
      case kRight: m.rightCols(band).setOnes(); break;
      case kTop: m.topRows(band).setOnes(); break;
      case kBottom: m.bottomRows(band).setOnes(); break;
    }
  }
  return m;
}

MaskVideo sample_video_mask(MaskMode mode, Index frames, Index height, Index width, Rng& rng) {
  if (frames < 1) throw ShapeError("frames", "mask video needs at least one frame");
  if (mode == MaskMode::M3DDMPlus)
    return replicate_mask(render_frame_mask(sample_strategy(mode, rng), height, width), frames);
  MaskVideo mask(frames, height, width, 1);
  for (Index t = 0; t < frames; ++t) {
    const Plane m = render_frame_mask(sample_strategy(mode, rng), height, width);
    mask.frame(t).col(0) = Eigen::Map<const Vector<double>>(m.data(), m.size());
  }
  return mask;
}

Plane outpaint_mask(Index canvas_h, Index canvas_w, Index input_h, Index input_w) {
  if (input_h > canvas_h || input_w > canvas_w || input_h < 0 || input_w < 0)
    throw ShapeError(input_h > canvas_h ? "height" : "width",
                     "input does not fit inside the canvas");
  Plane m = Plane::Ones(canvas_h, canvas_w);
  const Index top = (canvas_h - input_h) / 2;
  const Index left = (canvas_w - input_w) / 2;
  m.block(top, left, input_h, input_w).setZero();
  return m;
}

VideoTensor apply_mask(const VideoTensor& video, const MaskVideo& mask) {
  validate_pair(video, mask);
  VideoTensor out = video;
  const auto keep = (1.0 - mask.matrix().col(0).array()).matrix();
  out.matrix().array().colwise() *= keep.array();
  return out;
}

std::string to_string(MaskMode mode) {
  return mode == MaskMode::M3DDM ? "m3ddm" : "m3ddm-plus";
}

std::string to_string(MaskKind kind) {
  switch (kind) {
    case MaskKind::FourSided: return "four-sided";
    case MaskKind::TwoSided: return "two-sided";
    case MaskKind::SingleSided: return "single-sided";
    case MaskKind::Random: return "random";
    case MaskKind::FullFrame: return "full-frame";
  }
  return "unknown";
}

MaskMode parse_mask_mode(std::string_view text) {
  if (text == "m3ddm") return MaskMode::M3DDM;
  if (text == "m3ddm-plus" || text == "m3ddm+") return MaskMode::M3DDMPlus;
  throw ConfigError("unknown mask mode '" + std::string(text) + "' (expected m3ddm or m3ddm-plus)");
}

}  // namespace m3ddm
