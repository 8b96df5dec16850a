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
#include <functional>
#include <vector>

#include "m3ddm/codec.hpp"
#include "m3ddm/core.hpp"
#include "m3ddm/denoiser.hpp"
#include "m3ddm/diffusion.hpp"
#include "m3ddm/masking.hpp"

namespace m3ddm {

struct TrainConfig {
  MaskMode mask_mode = MaskMode::M3DDM;
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t steps = 1000;
  Index batch_size = 2;
  Index clip_length = 16;
  Index global_frames = kDefaultGlobalFrames;
  std::uint64_t seed = 0;
};

struct TrainState {
  DenoiserParams<float> params;
  AdamState adam;
};

TrainState make_train_state(DenoiserParams<float> params);

/// Deterministic per-step generator: depends only on (seed, step), so a resumed run
/// draws exactly what an uninterrupted one would.
Rng step_rng(std::uint64_t seed, std::int64_t step);

/// Full noise estimate: the per-channel Gaussian estimate from the codec's latent
/// variances plus the network's residual. `bundle.timestep` indexes `train_sched`.
LatentVideo predict_total_noise(const ConditionBundle& bundle, const DenoiserParams<float>& denoiser,
                                const CodecParams& codec, const DiffusionSchedule& train_sched);

/// One optimisation step on `batch`: per clip, sample a mask for cfg.mask_mode, encode
/// the clip and its masked copy, diffuse at a random step, predict the noise from
/// concat(Z_t, Z_masked, m) with global frames of the masked clip (see
/// predict_total_noise), and accumulate the gradient of the denoising loss. Applies one Adam update and returns the batch loss
/// measured before the update. Throws DivergenceError on a non-finite loss.
double train_step(const std::vector<VideoTensor>& batch, const CodecParams& codec, TrainState& state,
                  const DiffusionSchedule& sched, const TrainConfig& cfg, Rng& rng);

using StepCallback = std::function<void(std::int64_t step, double loss)>;

/// Runs cfg.steps steps, continuing the step counter stored in `state`. Each step
/// draws batch_size clips (random video, random clip_length window) from step_rng.
std::vector<double> train(const std::vector<VideoTensor>& dataset, const CodecParams& codec, TrainState& state,
                          const DiffusionSchedule& sched, const TrainConfig& cfg, const StepCallback& on_step = {});

inline constexpr Index kDefaultFillIterations = 50;

/// Fills masked pixels of a single frame: nearest-known initialisation followed by
/// `iterations` Jacobi sweeps of the discrete Laplace equation with known pixels held
/// fixed. `frame` has one frame. Throws ValueError if every pixel is masked.
VideoTensor boundary_fill(const VideoTensor& frame, const Plane& mask, Index iterations = kDefaultFillIterations);

struct Canvas {
  VideoTensor filled;  // masked + smooth fill of the extension
  VideoTensor masked;  // input centred, zeros outside
  MaskVideo mask;      // 1 outside the input rectangle
  Index top = 0;
  Index left = 0;
};

Canvas build_canvas(const VideoTensor& input, Index canvas_h, Index canvas_w,
                    Index fill_iterations = kDefaultFillIterations);

struct PlanWindow {
  std::vector<Index> frames;
  /// True where the frame was produced by an earlier pass and is only conditioning.
  std::vector<bool> conditioning;
};

struct PlanPass {
  Index stride = 1;
  std::vector<PlanWindow> windows;
};

/// Pass k visits frames 0, s, 2s, ... plus the last frame (s = intervals[k]), in
/// windows of at most `window` frames; an overrunning last window is right-aligned.
std::vector<PlanPass> coarse_to_fine_plan(Index frames, const std::vector<Index>& intervals, Index window = 16);

/// y = x (1 - M) + x_hat M.
VideoTensor blend(const VideoTensor& x, const VideoTensor& x_hat, const MaskVideo& mask);

struct CropBox {
  Index top = 0;
  Index left = 0;
  Index height = 0;
  Index width = 0;
};

/// Largest centred aspect_w:aspect_h box inside height x width. Throws ValueError
/// when the aspect is non-positive or the box would be smaller than 8 pixels.
CropBox aspect_crop_box(Index height, Index width, Index aspect_w, Index aspect_h);
VideoTensor crop_to_aspect(const VideoTensor& canvas_video, Index aspect_w, Index aspect_h);
VideoTensor crop(const VideoTensor& video, const CropBox& box);

struct InferConfig {
  std::vector<Index> intervals{5, 3, 1};
  Index canvas_size = 64;
  Index window = 16;
  Index global_frames = kDefaultGlobalFrames;
  int inference_steps = kDefaultInferenceSteps;
  Index fill_iterations = kDefaultFillIterations;
  /// Bound on clean-latent estimates while sampling (codec latents have unit mean variance).
  double latent_clip = 4.0;
  Index aspect_w = 1;
  Index aspect_h = 1;
  std::uint64_t seed = 0;
  bool allow_untrained = false;
};

struct OutpaintResult {
  VideoTensor output;         // cropped to the target aspect
  VideoTensor canvas_output;  // full square canvas
  Canvas canvas;
  std::vector<VideoTensor> pass_canvases;  // canvas state after each pass
  std::vector<std::vector<Index>> pass_generated;
};

/// Coarse-to-fine outpainting of `input` onto a square canvas. Frames produced by an
/// earlier pass are re-encoded into the masked latent with their latent-mask rows set
/// to 0 and are never overwritten. Known pixels are preserved exactly by blending.
OutpaintResult outpaint(const VideoTensor& input, const CodecParams& codec, const DenoiserParams<float>& denoiser,
                        const DiffusionSchedule& train_sched, const InferConfig& cfg);

}  // namespace m3ddm
