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

#include <gtest/gtest.h>

#include <cmath>

#include "m3ddm/diffusion.hpp"
#include "test_util.hpp"

namespace m3ddm {
namespace {

LatentVideo filled(const Shape& s, double v) {
  LatentVideo z(s);
  z.matrix().setConstant(v);
  return z;
}

const Shape kShape{2, 4, 4, 4};

TEST(Schedule, CumulativeProductOracle) {
  const auto s = make_schedule(200, 1e-4, 0.02);
  double prod = 1.0;
  for (int t = 1; t <= 200; ++t) {
    const double beta = 1e-4 + (0.02 - 1e-4) * (t - 1) / 199.0;
    prod *= 1.0 - beta;
    EXPECT_NEAR(s.alpha_bar[t], prod, 1e-12);
    EXPECT_LT(s.alpha_bar[t], s.alpha_bar[t - 1]);
  }
  EXPECT_EQ(s.alpha_bar[0], 1.0);
  // This ramp ends well above pure noise; the default schedule compensates.
  EXPECT_NEAR(s.alpha_bar[200], 0.1322, 5e-4);
}

TEST(Schedule, DefaultEndsNearPureNoise) {
  const auto s = default_schedule();
  EXPECT_EQ(s.steps, 200);
  EXPECT_LT(s.alpha_bar[200], 0.01);
  for (int t = 1; t <= s.steps; ++t) {
    EXPECT_LT(s.alpha_bar[t], s.alpha_bar[t - 1]);
    EXPECT_TRUE(std::isfinite(s.posterior_clean_coef(t)));
    EXPECT_TRUE(std::isfinite(s.posterior_noisy_coef(t)));
    EXPECT_TRUE(std::isfinite(s.posterior_variance(t)));
  }
}

TEST(Schedule, ConstantRampClosedForm) {
  const double b = 0.01;
  const auto s = make_schedule(50, b, b);
  for (int t = 0; t <= 50; ++t) EXPECT_NEAR(s.alpha_bar[t], std::pow(1 - b, t), 1e-14);
}

TEST(Schedule, RangeErrors) {
  EXPECT_THROW(make_schedule(200, 1e-4, 1.0), ValueError);
  EXPECT_THROW(make_schedule(200, 0.0, 0.02), ValueError);
  EXPECT_THROW(make_schedule(200, 0.03, 0.02), ValueError);
  EXPECT_THROW(make_schedule(1, 1e-4, 0.02), ValueError);
}

TEST(Respace, KeepsUniformStridedSteps) {
  const auto train = default_schedule();
  const auto s = respace(train, 50);
  EXPECT_EQ(s.steps, 50);
  for (int k = 1; k <= 50; ++k) {
    EXPECT_EQ(s.model_timestep[k], 4 * k);
    EXPECT_DOUBLE_EQ(s.alpha_bar[k], train.alpha_bar[4 * k]);
  }
  EXPECT_THROW(respace(train, 0), ValueError);
  EXPECT_THROW(respace(train, 201), ValueError);
}

TEST(ForwardDiffuse, IdentityAtZero) {
  const auto s = default_schedule();
  Rng rng(1);
  const LatentVideo z = gaussian_like(kShape, rng), eps = gaussian_like(kShape, rng);
  EXPECT_EQ(forward_diffuse(z, 0, eps, s).matrix(), z.matrix());
}

TEST(ForwardDiffuse, QuarterAlphaBarHalvesSignal) {
  auto s = make_schedule(2, 0.5, 0.5);  // alpha_bar[2] = 0.25
  const LatentVideo out = forward_diffuse(filled(kShape, 2.0), 2, filled(kShape, 0.0), s);
  EXPECT_NEAR(out.matrix().maxCoeff(), 1.0, 1e-15);
  EXPECT_NEAR(out.matrix().minCoeff(), 1.0, 1e-15);
}

TEST(ForwardDiffuse, ZeroSignalIsScaledNoise) {
  const auto s = default_schedule();
  Rng rng(2);
  const LatentVideo eps = gaussian_like(kShape, rng);
  const LatentVideo out = forward_diffuse(filled(kShape, 0.0), 70, eps, s);
  EXPECT_TRUE(out.matrix().isApprox(std::sqrt(1 - s.alpha_bar[70]) * eps.matrix(), 1e-14));
}

TEST(ForwardDiffuse, Errors) {
  const auto s = default_schedule();
  EXPECT_THROW(forward_diffuse(filled(kShape, 0), 201, filled(kShape, 0), s), ValueError);
  EXPECT_THROW(forward_diffuse(filled(kShape, 0), 3, filled(Shape{1, 4, 4, 4}, 0), s), ShapeError);
}

TEST(ForwardDiffuse, MarginalVariance) {
  const auto s = default_schedule();
  Rng rng(3);
  const Shape big{1, 250, 100, 4};  // 1e5 elements
  for (int t : {10, 60, 150}) {
    const LatentVideo out = forward_diffuse(filled(big, 0.0), t, gaussian_like(big, rng), s);
    const double mean = out.matrix().mean();
    const double var = (out.matrix().array() - mean).square().mean();
    EXPECT_NEAR(var / (1 - s.alpha_bar[t]), 1.0, 0.02) << "t=" << t;
  }
}

TEST(ForwardDiffuse, OneStepInvertibility) {
  const auto s = default_schedule();
  Rng rng(4);
  const LatentVideo z = gaussian_like(kShape, rng);
  for (int t : {1, 50, 200}) {
    const LatentVideo eps = gaussian_like(kShape, rng);
    const LatentVideo back = predict_clean(forward_diffuse(z, t, eps, s), eps, t, s);
    EXPECT_LT((back.matrix() - z.matrix()).cwiseAbs().maxCoeff(), 1e-6) << "t=" << t;
  }
}

TEST(Loss, Examples) {
  Rng rng(5);
  const LatentVideo a = gaussian_like(kShape, rng), b = gaussian_like(kShape, rng);
  EXPECT_EQ(denoising_loss(a, a), 0.0);
  EXPECT_DOUBLE_EQ(denoising_loss(filled(kShape, 0), filled(kShape, 1)), 1.0);
  EXPECT_DOUBLE_EQ(denoising_loss(a, b), denoising_loss(b, a));
  EXPECT_THROW(denoising_loss(a, filled(Shape{1, 4, 4, 4}, 0)), ShapeError);
}

TEST(ReverseStep, OneStepCorruptionInverts) {
  const auto s = default_schedule();
  Rng rng(6);
  const LatentVideo z0 = gaussian_like(kShape, rng), eps = gaussian_like(kShape, rng);
  const LatentVideo z1 = forward_diffuse(z0, 1, eps, s);
  const LatentVideo back = reverse_step(z1, eps, 1, s, rng);
  EXPECT_LT((back.matrix() - z0.matrix()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(ReverseStep, ZeroIsFixedPoint) {
  const auto s = default_schedule();
  const LatentVideo zero = filled(kShape, 0.0);
  for (int t : {1, 2, 100, 200}) EXPECT_EQ(reverse_step(zero, zero, t, s, zero).matrix().cwiseAbs().maxCoeff(), 0.0);
}

TEST(ReverseStep, TwoStepRetrace) {
  const auto s = make_schedule(2, 0.1, 0.3);
  Rng rng(7);
  const LatentVideo z0 = gaussian_like(kShape, rng), n1 = gaussian_like(kShape, rng), n2 = gaussian_like(kShape, rng);
  const double a1 = 0.9, a2 = 0.7, ab1 = a1, ab2 = a1 * a2;
  // Step-by-step forward chain.
  LatentVideo z1(kShape), z2(kShape);
  z1.matrix() = std::sqrt(a1) * z0.matrix() + std::sqrt(1 - a1) * n1.matrix();
  z2.matrix() = std::sqrt(a2) * z1.matrix() + std::sqrt(1 - a2) * n2.matrix();
  // Total noise relative to z0 at each step.
  LatentVideo e2(kShape), e1 = n1;
  e2.matrix() = (z2.matrix() - std::sqrt(ab2) * z0.matrix()) / std::sqrt(1 - ab2);
  // Gaussian posterior q(z1 | z2, z0) and the standard-normal draw that lands on z1.
  const double var = (1 - ab1) * (1 - a2) / (1 - ab2);
  LatentVideo noise(kShape);
  noise.matrix() = (z1.matrix() - std::sqrt(ab1) * (1 - a2) / (1 - ab2) * z0.matrix() -
                    std::sqrt(a2) * (1 - ab1) / (1 - ab2) * z2.matrix()) /
                   std::sqrt(var);
  const LatentVideo r1 = reverse_step(z2, e2, 2, s, noise);
  EXPECT_LT((r1.matrix() - z1.matrix()).cwiseAbs().maxCoeff(), 1e-5);
  const LatentVideo r0 = reverse_step(r1, e1, 1, s, rng);
  EXPECT_LT((r0.matrix() - z0.matrix()).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(ReverseStep, StepZeroRejected) {
  const auto s = default_schedule();
  Rng rng(8);
  EXPECT_THROW(reverse_step(filled(kShape, 0), filled(kShape, 0), 0, s, rng), ValueError);
}

TEST(Sample, DeterministicGivenSeed) {
  const auto s = respace(default_schedule(), 10);
  const NoisePredictor pred = [](const LatentVideo& z, int t) {
    LatentVideo e = z;
    e.matrix() *= 0.5 + 0.001 * t;
    return e;
  };
  Rng a(9), b(9);
  const LatentVideo za = sample(pred, kShape, s, a), zb = sample(pred, kShape, s, b);
  EXPECT_EQ(za.shape(), kShape);
  EXPECT_EQ(za.matrix(), zb.matrix());
}

TEST(Sample, ZeroPredictorMatchesScriptedOracle) {
  const auto s = respace(default_schedule(), 20);
  const NoisePredictor zero = [](const LatentVideo& z, int) { return LatentVideo(z.shape()); };
  Rng rng(10);
  const LatentVideo out = sample(zero, kShape, s, rng);

  // Replay: same draw order, update written from the schedule's betas.
  Rng replay(10);
  LatentVideo z = gaussian_like(kShape, replay);
  for (int t = s.steps; t >= 1; --t) {
    const double ab = s.alpha_bar[t], ab_prev = s.alpha_bar[t - 1], beta = 1 - ab / ab_prev;
    const RowMatrix<double> x0 = z.matrix() / std::sqrt(ab);
    RowMatrix<double> next = std::sqrt(ab_prev) * beta / (1 - ab) * x0 +
                             std::sqrt(1 - beta) * (1 - ab_prev) / (1 - ab) * z.matrix();
    if (t > 1) next += std::sqrt(beta * (1 - ab_prev) / (1 - ab)) * gaussian_like(kShape, replay).matrix();
    z.matrix() = next;
  }
  EXPECT_LT((out.matrix() - z.matrix()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Sample, ClampedCleanEstimateStaysBounded) {
  const auto s = respace(default_schedule(), 10);
  const NoisePredictor zero = [](const LatentVideo& z, int) { return LatentVideo(z.shape()); };
  Rng rng(11);
  const LatentVideo out = sample(zero, kShape, s, rng, std::nullopt, 1.0);
  EXPECT_LE(out.matrix().cwiseAbs().maxCoeff(), 1.0 + 1e-12);
}

}  // namespace
}  // namespace m3ddm
