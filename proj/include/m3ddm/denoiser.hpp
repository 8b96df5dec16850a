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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "m3ddm/codec.hpp"
#include "m3ddm/core.hpp"
#include "m3ddm/masking.hpp"

namespace m3ddm {

inline constexpr char kDenoiserMagic[] = "M3DDENOI";
inline constexpr Index kDefaultGlobalFrames = 16;

/// Sizes of the toy spatiotemporal U-Net.
///
/// Layout: input conv (2c+1 -> F) + time embedding, spatial conv, temporal conv,
/// 2x2 pooling, conv (F -> 2F) + time embedding, temporal conv, cross-attention
/// over global-frame tokens, spatial conv, nearest upsampling, skip concat,
/// conv (3F -> F), temporal conv, output conv (F -> c), plus a linear 1x1 skip from the
/// condition straight to the output. Residual connections wrap
/// every conv pair; activations are SiLU.
struct DenoiserConfig {
  Index latent_channels = 4;
  Index base_channels = 32;
  Index context_channels = 32;
  Index attention_channels = 32;
  Index time_features = 32;
  /// 1: one context token per global-frame latent site; 2: tokens are 2x2-pooled,
  /// which quarters the attention cost.
  Index context_pool = 1;

  Index condition_channels() const { return 2 * latent_channels + 1; }
  bool operator==(const DenoiserConfig&) const = default;
};

struct ParamSlot {
  std::string name;
  Index offset = 0;
  Index rows = 0;
  Index cols = 0;
  Index size() const { return rows * cols; }
};

/// Named row-major tensors packed into one flat parameter vector.
class ParamLayout {
 public:
  Index add(const std::string& name, Index rows, Index cols);
  const ParamSlot& operator[](const std::string& name) const;
  const std::vector<ParamSlot>& slots() const { return slots_; }
  Index size() const { return size_; }

 private:
  std::vector<ParamSlot> slots_;
  std::map<std::string, std::size_t> index_;
  Index size_ = 0;
};

ParamLayout denoiser_layout(const DenoiserConfig& config);

/// Noise predictor weights plus the lightweight global-frame encoder, flat.
template <typename S>
struct DenoiserParams {
  DenoiserConfig config;
  Vector<S> values;
  std::int64_t steps_trained = 0;

  template <typename To>
  DenoiserParams<To> cast() const {
    return DenoiserParams<To>{config, values.template cast<To>(), steps_trained};
  }
};

template <typename S>
DenoiserParams<S> init_denoiser(const DenoiserConfig& config, Rng& rng);

/// Cross-attention key/value tokens, (tokens, context_channels).
using ContextTokens = RowMatrix<double>;

struct ConditionBundle {
  LatentVideo z_t;
  LatentVideo z_masked;
  LatentMask latent_mask;
  ContextTokens global_context;
  int timestep = 0;
};

/// Channel-wise concat(Z_t, Z_masked, m): c + c + 1 channels.
Volume<double> concat_condition(const LatentVideo& z_t, const LatentVideo& z_masked, const LatentMask& latent_mask);

/// round(i * (frames - 1) / (n - 1)) for i = 0..n-1.
std::vector<Index> global_frame_indices(Index frames, Index n);
VideoTensor sample_global_frames(const VideoTensor& masked_video, Index n = kDefaultGlobalFrames);

/// Shallow conv (c -> d_ctx) over codec latents of the global frames; one token per latent
/// site, or per 2x2 block when config.context_pool == 2 (latent extents must then be even).
template <typename S>
RowMatrix<S> project_context(const DenoiserParams<S>& params, const Volume<S>& global_latents);

template <typename S>
ContextTokens encode_global_frames(const VideoTensor& global_frames, const CodecParams& codec,
                                   const DenoiserParams<S>& params);

/// Raw forward pass on a (T, h, w, 2c+1) condition. Throws ShapeError on a channel
/// mismatch or odd latent extents and DivergenceError on non-finite activations.
template <typename S>
Volume<S> predict_noise(const DenoiserParams<S>& params, const Volume<S>& condition, int timestep,
                        const RowMatrix<S>& context);

template <typename S>
LatentVideo predict_noise(const ConditionBundle& bundle, const DenoiserParams<S>& params);

template <typename S>
struct LossGradient {
  double loss = 0.0;
  Vector<S> gradient;  // same layout as DenoiserParams::values
};

/// Denoising loss mean((eps - eps_hat)^2) and its gradient w.r.t. every parameter,
/// including the global-frame encoder.
template <typename S>
LossGradient<S> loss_and_gradient(const DenoiserParams<S>& params, const Volume<S>& condition, int timestep,
                                  const Volume<S>& global_latents, const Volume<S>& eps_true);

/// First-order adaptive-moment optimiser state (flat, matches the parameter vector).
struct AdamState {
  Vector<double> first;
  Vector<double> second;
  std::int64_t step = 0;
};

struct DenoiserCheckpoint {
  DenoiserParams<float> params;
  std::optional<AdamState> adam;
  MaskMode mask_mode = MaskMode::M3DDM;
  std::int64_t seed = 0;
};

void save_denoiser(const DenoiserCheckpoint& ck, const std::filesystem::path& path);
DenoiserCheckpoint load_denoiser(const std::filesystem::path& path);

}  // namespace m3ddm
