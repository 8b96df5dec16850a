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

#include <filesystem>
#include <vector>

#include "m3ddm/core.hpp"

namespace m3ddm {

inline constexpr char kCodecMagic[] = "M3DCODEC";

struct CodecConfig {
  Index stride = 4;
  Index latent_channels = 4;
  /// Decoder reads a (2r+1) x (2r+1) latent neighbourhood per output block.
  Index decoder_radius = 1;
  /// Upper bound on pixel blocks used to fit the encoder.
  Index max_blocks = 200000;
  double ridge = 1e-6;
};

/// Frame-wise latent codec. The encoder is a stride-s, s x s convolution from RGB
/// to c channels; the decoder is a transposed convolution reading a latent
/// neighbourhood and emitting an s x s RGB block.
struct CodecParams {
  Index stride = 4;
  Index latent_channels = 4;
  Index decoder_radius = 1;
  RowMatrix<double> encoder_weight;  // (s*s*3) x c
  RowVector<double> encoder_bias;    // 1 x c
  RowMatrix<double> decoder_weight;  // ((2r+1)^2 * c) x (s*s*3)
  RowVector<double> decoder_bias;    // 1 x (s*s*3)
  /// Per-channel variance of the (centred) training latents, 1 x c.
  RowVector<double> latent_variance;

  Index block_size() const { return stride * stride * 3; }
  Index neighbourhood() const { return (2 * decoder_radius + 1) * (2 * decoder_radius + 1); }
};

/// (T, H, W, 3) -> (T, H/s, W/s, c). Throws ShapeError when H or W is not divisible by s.
LatentVideo encode(const VideoTensor& video, const CodecParams& params);
/// (T, h, w, c) -> (T, s*h, s*w, 3), clamped to [0, 1].
VideoTensor decode(const LatentVideo& latent, const CodecParams& params);

/// Block-mean downsampling of a pixel mask to latent resolution.
LatentMask downsample_mask(const MaskVideo& mask, Index stride);

/// Fits the codec to minimise frame-wise reconstruction MSE: principal blocks
/// (one shared scale, unit mean latent variance) for the encoder, then a ridge least-squares decoder over latent
/// neighbourhoods. Throws ValueError on an empty dataset and DivergenceError if
/// the fit is non-finite.
CodecParams train_codec(const std::vector<VideoTensor>& dataset, const CodecConfig& config);

/// Mean squared reconstruction error of decode(encode(x)) over a dataset.
double reconstruction_mse(const std::vector<VideoTensor>& dataset, const CodecParams& params);

void save_codec(const CodecParams& params, const std::filesystem::path& path);
CodecParams load_codec(const std::filesystem::path& path);

}  // namespace m3ddm
