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

#include "m3ddm/diffusion.hpp"

#include <cmath>
#include <string>

namespace m3ddm {

double DiffusionSchedule::posterior_clean_coef(int t) const {
  return std::sqrt(alpha_bar[t - 1]) * beta[t] / (1.0 - alpha_bar[t]);
}

double DiffusionSchedule::posterior_noisy_coef(int t) const {
  return std::sqrt(alpha(t)) * (1.0 - alpha_bar[t - 1]) / (1.0 - alpha_bar[t]);
}

double DiffusionSchedule::posterior_variance(int t) const {
  return (1.0 - alpha_bar[t - 1]) / (1.0 - alpha_bar[t]) * beta[t];
}

DiffusionSchedule make_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 2) throw ValueError("diffusion schedule needs at least 2 steps");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
    throw ValueError("diffusion schedule requires 0 < beta_start <= beta_end < 1");
  DiffusionSchedule s;
  s.steps = steps;
  s.beta.assign(steps + 1, 0.0);
  s.alpha_bar.assign(steps + 1, 1.0);
  s.model_timestep.resize(steps + 1);
  for (int t = 1; t <= steps; ++t) {
    s.beta[t] = beta_start + (beta_end - beta_start) * static_cast<double>(t - 1) / static_cast<double>(steps - 1);
    s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - s.beta[t]);
  }
  for (int t = 0; t <= steps; ++t) s.model_timestep[t] = t;
  return s;
}

DiffusionSchedule default_schedule() {
  return make_schedule(kDefaultTrainSteps, kDefaultBetaStart, kDefaultBetaEnd);
}

DiffusionSchedule respace(const DiffusionSchedule& train, int steps) {
  if (steps < 1 || steps > train.steps)
    throw ValueError("respace: step count must be in [1, " + std::to_string(train.steps) + "]");
  DiffusionSchedule s;
  s.steps = steps;
  s.beta.assign(steps + 1, 0.0);
  s.alpha_bar.assign(steps + 1, 1.0);
  s.model_timestep.assign(steps + 1, 0);
  for (int k = 1; k <= steps; ++k) {
    // Uniform stride ending exactly at the final training step.
    const int t = static_cast<int>(std::lround(static_cast<double>(k) * train.steps / steps));
    s.model_timestep[k] = train.model_timestep[t];
    s.alpha_bar[k] = train.alpha_bar[t];
    s.beta[k] = 1.0 - s.alpha_bar[k] / s.alpha_bar[k - 1];
  }
  return s;
}

namespace {

void check_step(int t, int lo, const DiffusionSchedule& sched) {
  if (t < lo || t > sched.steps)
    throw ValueError("diffusion step " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                     std::to_string(sched.steps) + "]");
}

}  // namespace

LatentVideo forward_diffuse(const LatentVideo& z, int t, const LatentVideo& eps, const DiffusionSchedule& sched) {
  require_same_shape(z.shape(), eps.shape(), "forward_diffuse");
  check_step(t, 0, sched);
  LatentVideo out(z.shape());
  out.matrix() = std::sqrt(sched.alpha_bar[t]) * z.matrix() + std::sqrt(1.0 - sched.alpha_bar[t]) * eps.matrix();
  return out;
}

LatentVideo predict_clean(const LatentVideo& z_t, const LatentVideo& eps, int t, const DiffusionSchedule& sched) {
  require_same_shape(z_t.shape(), eps.shape(), "predict_clean");
  check_step(t, 0, sched);
  LatentVideo out(z_t.shape());
  out.matrix() = (z_t.matrix() - std::sqrt(1.0 - sched.alpha_bar[t]) * eps.matrix()) / std::sqrt(sched.alpha_bar[t]);
  return out;
}

double denoising_loss(const LatentVideo& eps_true, const LatentVideo& eps_pred) {
  require_same_shape(eps_true.shape(), eps_pred.shape(), "denoising_loss");
  const Index n = eps_true.shape().size();
  if (n == 0) return 0.0;
  return (eps_true.matrix() - eps_pred.matrix()).squaredNorm() / static_cast<double>(n);
}

LatentVideo reverse_step(const LatentVideo& z_t, const LatentVideo& eps_pred, int t,
                         const DiffusionSchedule& sched, const LatentVideo& noise) {
  check_step(t, 1, sched);
  const LatentVideo clean = predict_clean(z_t, eps_pred, t, sched);
  LatentVideo out(z_t.shape());
  out.matrix() = sched.posterior_clean_coef(t) * clean.matrix() + sched.posterior_noisy_coef(t) * z_t.matrix();
  if (t > 1) {
    require_same_shape(noise.shape(), z_t.shape(), "reverse_step noise");
    out.matrix() += std::sqrt(sched.posterior_variance(t)) * noise.matrix();
  }
  return out;
}

LatentVideo gaussian_like(const Shape& shape, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  LatentVideo out(shape);
  double* data = out.matrix().data();
  for (Index i = 0; i < out.shape().size(); ++i) data[i] = normal(rng);
  return out;
}

LatentVideo gaussian_noise_estimate(const LatentVideo& z_t, double alpha_bar, const RowVector<double>& variance) {
  if (variance.size() != z_t.channels())
    throw ShapeError("channels", "gaussian_noise_estimate: " + std::to_string(variance.size()) +
                                     " variances for " + std::to_string(z_t.channels()) + " channels");
  const RowVector<double> gain =
      std::sqrt(1.0 - alpha_bar) * (alpha_bar * variance.array() + (1.0 - alpha_bar)).inverse().matrix();
  LatentVideo out(z_t.shape());
  out.matrix() = z_t.matrix() * gain.asDiagonal();
  return out;
}

LatentVideo reverse_step(const LatentVideo& z_t, const LatentVideo& eps_pred, int t,
                         const DiffusionSchedule& sched, Rng& rng) {
  check_step(t, 1, sched);
  if (t == 1) return reverse_step(z_t, eps_pred, t, sched, LatentVideo{});
  return reverse_step(z_t, eps_pred, t, sched, gaussian_like(z_t.shape(), rng));
}

LatentVideo sample(const NoisePredictor& predictor, const Shape& latent_shape, const DiffusionSchedule& sched,
                   Rng& rng, const std::optional<LatentVideo>& init, double clip_clean) {
  LatentVideo z = gaussian_like(latent_shape, rng);
  if (init) z = forward_diffuse(*init, sched.steps, z, sched);
  for (int t = sched.steps; t >= 1; --t) {
    LatentVideo eps = predictor(z, sched.model_timestep[t]);
    require_same_shape(eps.shape(), latent_shape, "noise predictor output");
    if (std::isfinite(clip_clean)) {
      // Clamp the clean estimate, then re-derive the noise consistent with it.
      LatentVideo clean = predict_clean(z, eps, t, sched);
      clean.matrix() = clean.matrix().cwiseMax(-clip_clean).cwiseMin(clip_clean);
      eps.matrix() = (z.matrix() - std::sqrt(sched.alpha_bar[t]) * clean.matrix()) / std::sqrt(1.0 - sched.alpha_bar[t]);
    }
    z = reverse_step(z, eps, t, sched, rng);
  }
  return z;
}

}  // namespace m3ddm
