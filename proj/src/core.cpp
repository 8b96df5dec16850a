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

#include "m3ddm/core.hpp"

#include <cmath>
#include <sstream>

namespace m3ddm {

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << frames << "," << height << "," << width << "," << channels << ")";
  return os.str();
}

void require_same_shape(const Shape& a, const Shape& b, std::string_view context,
                        bool check_channels) {
  auto fail = [&](const char* axis, Index x, Index y) {
    std::ostringstream os;
    os << context << ": " << axis << " mismatch (" << x << " vs " << y << ")";
    throw ShapeError(axis, os.str());
  };
  if (a.frames != b.frames) fail("frames", a.frames, b.frames);
  if (a.height != b.height) fail("height", a.height, b.height);
  if (a.width != b.width) fail("width", a.width, b.width);
  if (check_channels && a.channels != b.channels) fail("channels", a.channels, b.channels);
}

void validate_video(const VideoTensor& video) {
  if (video.frames() < 1) throw ShapeError("frames", "video has no frames");
  if (video.height() < kMinFrameSide || video.width() < kMinFrameSide)
    throw ShapeError(video.height() < kMinFrameSide ? "height" : "width",
                     "video frames must be at least 8x8, got " + video.shape().str());
  if (!video.all_finite()) throw ValueError("video contains non-finite values");
}

bool is_binary(const MaskVideo& mask) {
  return (mask.matrix().array() == 0.0 || mask.matrix().array() == 1.0).all();
}

void validate_pair(const VideoTensor& video, const MaskVideo& mask) {
  require_same_shape(video.shape(), mask.shape(), "video/mask pair", false);
  if (mask.channels() != 1) throw ShapeError("channels", "mask must have one channel");
  if (!is_binary(mask)) throw ValueError("mask is not binary (values must be exactly 0 or 1)");
}

MaskVideo replicate_mask(const Plane& frame_mask, Index frames) {
  MaskVideo mask(frames, frame_mask.rows(), frame_mask.cols(), 1);
  const Eigen::Map<const Vector<double>> flat(frame_mask.data(), frame_mask.size());
  for (Index t = 0; t < frames; ++t) mask.frame(t).col(0) = flat;
  return mask;
}

Plane mask_frame(const MaskVideo& mask, Index t) {
  Plane plane(mask.height(), mask.width());
  Eigen::Map<Vector<double>>(plane.data(), plane.size()) = mask.frame(t).col(0);
  return plane;
}

VideoTensor clamp01(VideoTensor video) {
  video.matrix() = video.matrix().cwiseMax(0.0).cwiseMin(1.0);
  return video;
}

VideoTensor quantize8(const VideoTensor& video) {
  VideoTensor out = clamp01(video);
  out.matrix() = (out.matrix().array() * 255.0).round() / 255.0;
  return out;
}

}  // namespace m3ddm
