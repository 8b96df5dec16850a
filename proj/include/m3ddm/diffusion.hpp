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

#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "m3ddm/core.hpp"

namespace m3ddm {

/// Noise schedule indexed by step t = 0..steps. alpha_bar[0] = 1 by convention.
/// A respaced schedule keeps a subset of a training schedule's steps;
/// `model_timestep[t]` is the training step the noise predictor is queried at.
struct DiffusionSchedule {
  int steps = 0;
  std::vector<double> beta;       // beta[0] = 0
  std::vector<double> alpha_bar;  // alpha_bar[0] = 1
  std::vector<int> model_timestep;

  double alpha(int t) const { return 1.0 - beta[t]; }
  /// Coefficient on the predicted clean latent in the posterior mean.
  double posterior_clean_coef(int t) const;
  /// Coefficient on Z_t in the posterior mean.
  double posterior_noisy_coef(int t) const;
  double posterior_variance(int t) const;
};

inline constexpr int kDefaultTrainSteps = 200;
inline constexpr int kDefaultInferenceSteps = 50;
// Linear ramp endpoints for the default 200-step schedule; a 1000-step
// 1e-4..0.02 ramp rescaled by 1000/200 so the last step is close to pure noise.
inline constexpr double kDefaultBetaStart = 5e-4;
inline constexpr double kDefaultBetaEnd = 0.1;

/// Linear beta ramp over t = 1..steps. Throws ValueError unless
/// 0 < beta_start <= beta_end < 1 and steps >= 2.
DiffusionSchedule make_schedule(int steps, double beta_start, double beta_end);
DiffusionSchedule default_schedule();

/// Keeps `steps` uniformly strided steps of `train` (always including the last).
DiffusionSchedule respace(const DiffusionSchedule& train, int steps);

LatentVideo forward_diffuse(const LatentVideo& z, int t, const LatentVideo& eps, const DiffusionSchedule& sched);

/// Clean-latent estimate (Z_t - sqrt(1 - abar_t) eps) / sqrt(abar_t).
LatentVideo predict_clean(const LatentVideo& z_t, const LatentVideo& eps, int t, const DiffusionSchedule& sched);

/// Mean of squared element-wise differences.
double denoising_loss(const LatentVideo& eps_true, const LatentVideo& eps_pred);

/// Ancestral update from step t to t-1 with the supplied standard-normal noise
/// (ignored at t = 1).
LatentVideo reverse_step(const LatentVideo& z_t, const LatentVideo& eps_pred, int t,
                         const DiffusionSchedule& sched, const LatentVideo& noise);
LatentVideo reverse_step(const LatentVideo& z_t, const LatentVideo& eps_pred, int t,
                         const DiffusionSchedule& sched, Rng& rng);

LatentVideo gaussian_like(const Shape& shape, Rng& rng);

/// E[eps | Z_t] when each channel of Z is an independent centred Gaussian with the given
/// variance: sqrt(1 - abar) Z_t / (abar var + 1 - abar), per channel.
LatentVideo gaussian_noise_estimate(const LatentVideo& z_t, double alpha_bar, const RowVector<double>& variance);

/// Noise predictor queried with the current latent and the training-schedule timestep.
using NoisePredictor = std::function<LatentVideo(const LatentVideo& z_t, int model_timestep)>;

/// Runs the reverse process from t = steps down to 1. Starts from pure noise, or from
/// forward_diffuse(init, steps) when `init` is given. A finite `clip_clean` clamps each
/// step's clean-latent estimate to [-clip_clean, clip_clean].
LatentVideo sample(const NoisePredictor& predictor, const Shape& latent_shape, const DiffusionSchedule& sched,
                   Rng& rng, const std::optional<LatentVideo>& init = std::nullopt,
                   double clip_clean = std::numeric_limits<double>::infinity());

}  // namespace m3ddm
