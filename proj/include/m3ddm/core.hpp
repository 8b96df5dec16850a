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

#include <Eigen/Core>

#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace m3ddm {

using Index = Eigen::Index;
using Rng = std::mt19937_64;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// A single H x W frame plane (masks, gray images), row-major.
using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  ShapeError(std::string axis, const std::string& message)
      : Error(message), axis_(std::move(axis)) {}
  const std::string& axis() const { return axis_; }

 private:
  std::string axis_;
};

class ValueError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Raised when training produces a non-finite loss or activation.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

struct Shape {
  Index frames = 0;
  Index height = 0;
  Index width = 0;
  Index channels = 0;

  Index rows() const { return frames * height * width; }
  Index size() const { return rows() * channels; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Throws ShapeError naming the first differing axis among (frames, height, width)
/// and, if `check_channels`, channels.
void require_same_shape(const Shape& a, const Shape& b, std::string_view context,
                        bool check_channels = true);

/// Dense (time, height, width, channel) volume. Storage is a row-major matrix with
/// one row per (t, y, x) site and one column per channel, so the flat memory order is
/// exactly t-h-w-c and a 1x1 convolution is a single matrix product.
template <typename Scalar>
class Volume {
 public:
  using Matrix = RowMatrix<Scalar>;

  Volume() = default;
  explicit Volume(const Shape& shape, Scalar fill = Scalar(0))
      : shape_(shape), data_(Matrix::Constant(shape.rows(), shape.channels, fill)) {}
  Volume(Index frames, Index height, Index width, Index channels, Scalar fill = Scalar(0))
      : Volume(Shape{frames, height, width, channels}, fill) {}
  Volume(const Shape& shape, Matrix data) : shape_(shape), data_(std::move(data)) {
    if (data_.rows() != shape_.rows() || data_.cols() != shape_.channels)
      throw ShapeError("storage", "volume storage does not match shape " + shape_.str());
  }

  const Shape& shape() const { return shape_; }
  Index frames() const { return shape_.frames; }
  Index height() const { return shape_.height; }
  Index width() const { return shape_.width; }
  Index channels() const { return shape_.channels; }
  Index sites_per_frame() const { return shape_.height * shape_.width; }

  Index site(Index t, Index y, Index x) const { return (t * shape_.height + y) * shape_.width + x; }
  Scalar& operator()(Index t, Index y, Index x, Index c) { return data_(site(t, y, x), c); }
  Scalar operator()(Index t, Index y, Index x, Index c) const { return data_(site(t, y, x), c); }

  Matrix& matrix() { return data_; }
  const Matrix& matrix() const { return data_; }

  auto frame(Index t) { return data_.middleRows(t * sites_per_frame(), sites_per_frame()); }
  auto frame(Index t) const { return data_.middleRows(t * sites_per_frame(), sites_per_frame()); }

  bool all_finite() const { return data_.allFinite(); }

  template <typename To>
  Volume<To> cast() const {
    return Volume<To>(shape_, data_.template cast<To>());
  }

 private:
  Shape shape_;
  Matrix data_;
};

/// Strongly typed volume: same storage, distinct domain meaning.
template <typename Tag, typename Scalar = double>
class Typed : public Volume<Scalar> {
 public:
  using Volume<Scalar>::Volume;
  Typed() = default;
  explicit Typed(Volume<Scalar> v) : Volume<Scalar>(std::move(v)) {}

  template <typename To>
  Typed<Tag, To> cast() const {
    return Typed<Tag, To>(Volume<Scalar>::template cast<To>());
  }
};

struct PixelSpace;
struct MaskSpace;
struct LatentSpace;
struct LatentMaskSpace;

/// Pixel video, (T, H, W, 3), values in [0, 1].
using VideoTensor = Typed<PixelSpace>;
/// Binary outpaint mask, (T, H, W, 1); 1 marks the region to generate.
using MaskVideo = Typed<MaskSpace>;
/// Codec latent, (T, H/s, W/s, c).
using LatentVideo = Typed<LatentSpace>;
/// Soft mask at latent resolution, (T, h, w, 1), values in [0, 1].
using LatentMask = Typed<LatentMaskSpace>;

inline constexpr Index kMinFrameSide = 8;

/// Checks the VideoTensor invariants: T >= 1, H, W >= 8, finite values.
void validate_video(const VideoTensor& video);

/// Succeeds iff `mask` matches `video` on (frames, height, width) and is exactly binary.
void validate_pair(const VideoTensor& video, const MaskVideo& mask);

bool is_binary(const MaskVideo& mask);

MaskVideo replicate_mask(const Plane& frame_mask, Index frames);
Plane mask_frame(const MaskVideo& mask, Index t);

VideoTensor clamp01(VideoTensor video);
/// Clamp to [0, 1] then round to the nearest of 256 levels.
VideoTensor quantize8(const VideoTensor& video);

}  // namespace m3ddm
