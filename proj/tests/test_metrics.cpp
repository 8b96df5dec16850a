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

#include <algorithm>
#include <cmath>

#include "m3ddm/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace m3ddm {
namespace {

VideoTensor constant(Index t, Index h, Index w, double v) {
  VideoTensor x(t, h, w, 3);
  x.matrix().setConstant(v);
  return x;
}

TEST(Mse, Examples) {
  const VideoTensor a = testing::random_video(2, 8, 8, 1), b = testing::random_video(2, 8, 8, 2);
  EXPECT_EQ(mse(a, a), 0.0);
  EXPECT_NEAR(mse(constant(1, 8, 8, 0.0), constant(1, 8, 8, 0.1)), 0.01, 1e-15);
  EXPECT_DOUBLE_EQ(mse(a, b), mse(b, a));
  EXPECT_NEAR(mse(a, b), testing::oracle_mse(a, b), 1e-9);
  EXPECT_THROW(mse(a, testing::random_video(1, 8, 8, 3)), ShapeError);
}

TEST(MaskedMse, OnlyCountsMaskedPixels) {
  const VideoTensor a = constant(1, 8, 8, 0.0);
  VideoTensor b = constant(1, 8, 8, 0.5);
  Plane p = Plane::Zero(8, 8);
  p.leftCols(2).setOnes();
  for (Index y = 0; y < 8; ++y)
    for (Index x = 0; x < 2; ++x) b.matrix().row(b.site(0, y, x)).setConstant(0.2);
  EXPECT_NEAR(masked_mse(a, b, replicate_mask(p, 1)), 0.04, 1e-15);
  EXPECT_EQ(masked_mse(a, b, MaskVideo(1, 8, 8, 1)), 0.0);
}

TEST(Psnr, Examples) {
  EXPECT_NEAR(psnr_from_mse(0.01), 20.0, 1e-12);
  EXPECT_NEAR(psnr_from_mse(1.0), 0.0, 1e-12);
  EXPECT_EQ(psnr_from_mse(0.0), kPsnrReportCap);
  const VideoTensor a = testing::random_video(1, 8, 8, 4);
  EXPECT_EQ(psnr(a, a), 100.0);
  const VideoTensor b = testing::random_video(1, 8, 8, 5);
  EXPECT_NEAR(psnr(a, b), 10 * std::log10(1.0 / testing::oracle_mse(a, b)), 1e-9);
  double last = -1;
  for (double m : {1.0, 0.5, 0.1, 1e-3, 1e-6}) {
    EXPECT_GT(psnr_from_mse(m), last);
    last = psnr_from_mse(m);
  }
}

TEST(Ssim, SelfSimilarity) {
  const VideoTensor a = testing::random_video(2, 16, 16, 6);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-9);
}

TEST(Ssim, ConstantsOracle) {
  // Constant windows: means 0 and 1, zero variance and covariance.
  const double c1 = 1e-4;
  EXPECT_NEAR(ssim(constant(1, 16, 16, 0.0), constant(1, 16, 16, 1.0)), c1 / (1.0 + c1), 1e-9);
}

TEST(Ssim, SymmetricAndMatchesBruteForce) {
  const VideoTensor a = testing::random_video(2, 8, 8, 7), b = testing::random_video(2, 8, 8, 8);
  SsimOptions o;
  o.window = 7;  // an 11-wide window does not fit an 8x8 frame
  EXPECT_NEAR(ssim(a, b, o), ssim(b, a, o), 1e-12);
  EXPECT_NEAR(ssim(a, b, o), testing::oracle_ssim(a, b, 7, 1.5), 1e-9);
  const VideoTensor c = testing::random_video(1, 16, 16, 9), d = testing::random_video(1, 16, 16, 10);
  EXPECT_NEAR(ssim(c, d), testing::oracle_ssim(c, d, 11, 1.5), 1e-9);
}

TEST(Ssim, FrameSmallerThanWindow) {
  EXPECT_THROW(ssim(constant(1, 8, 8, 0), constant(1, 8, 8, 0)), ShapeError);
}

VideoTensor checkerboard(Index t, Index h, Index w) {
  VideoTensor v(t, h, w, 3);
  for (Index f = 0; f < t; ++f)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) v.matrix().row(v.site(f, y, x)).setConstant(((x / 2 + y / 2) % 2) ? 1.0 : 0.0);
  return v;
}

TEST(Bmse, ConstantVideoIsZero) {
  EXPECT_NEAR(bmse(constant(2, 16, 16, 0.6)), 0.0, 1e-20);
}

TEST(Bmse, BlurOracle) {
  // Reflect-padded separable blur written as a direct 2-D sum.
  const VideoTensor v = testing::random_video(1, 8, 8, 11);
  const double sigma = 1.0;
  const Index r = 3;
  std::vector<double> g(2 * r + 1);
  double gs = 0;
  for (Index i = 0; i <= 2 * r; ++i) gs += g[i] = std::exp(-double((i - r) * (i - r)) / (2 * sigma * sigma));
  auto refl = [](Index i, Index n) { return i < 0 ? -i - 1 : (i >= n ? 2 * n - i - 1 : i); };
  VideoTensor blurred(v.shape());
  for (Index y = 0; y < 8; ++y)
    for (Index x = 0; x < 8; ++x)
      for (Index c = 0; c < 3; ++c) {
        double acc = 0;
        for (Index i = -r; i <= r; ++i)
          for (Index j = -r; j <= r; ++j) acc += g[i + r] * g[j + r] / (gs * gs) * v(0, refl(y + i, 8), refl(x + j, 8), c);
        blurred(0, y, x, c) = acc;
      }
  EXPECT_LT((gaussian_blur(v, sigma).matrix() - blurred.matrix()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(bmse(v, sigma), testing::oracle_mse(blurred, v), 1e-12);
}

TEST(Bmse, SharpBeatsPreBlurred) {
  const VideoTensor v = checkerboard(2, 16, 16);
  EXPECT_GT(bmse(v), bmse(gaussian_blur(v, kDefaultBlurSigma)));
}

TEST(Bmse, BlurNeverIncreasesOverRandomVideos) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const VideoTensor v = testing::random_video(1, 12, 12, 1000 + s);
    EXPECT_LE(bmse(gaussian_blur(v, 1.5)), bmse(v)) << "seed " << s;
  }
}

TEST(Bmse, FrameOrderInvariant) {
  const VideoTensor v = testing::random_video(3, 12, 12, 12);
  VideoTensor p(v.shape());
  p.frame(0) = v.frame(2);
  p.frame(1) = v.frame(0);
  p.frame(2) = v.frame(1);
  EXPECT_NEAR(bmse(v), bmse(p), 1e-15);
}

TEST(Evaluate, IdenticalVideos) {
  const VideoTensor v = testing::random_video(2, 16, 16, 13);
  MaskVideo m(2, 16, 16, 1);
  EvalConfig cfg;
  cfg.model = "m3ddm-plus";
  cfg.mask_ratio = 0.25;
  const MetricsReport r = evaluate(v, v, m, cfg);
  ASSERT_EQ(r.videos.size(), 1u);
  EXPECT_EQ(r.videos[0].mse, 0.0);
  EXPECT_EQ(r.videos[0].psnr, 100.0);
  EXPECT_NEAR(r.videos[0].ssim, 1.0, 1e-9);
  EXPECT_EQ(r.model, "m3ddm-plus");
  EXPECT_EQ(r.mask_ratio, 0.25);
}

TEST(Evaluate, MeanOfIdenticalEntries) {
  const VideoTensor a = testing::random_video(1, 16, 16, 14), b = testing::random_video(1, 16, 16, 15);
  MaskVideo m(1, 16, 16, 1);
  MetricsReport r = evaluate(a, b, m, EvalConfig{});
  r.videos.push_back(r.videos[0]);
  r.videos.push_back(r.videos[0]);
  const VideoMetrics mean = r.mean();
  EXPECT_NEAR(mean.mse, r.videos[0].mse, 1e-15);
  EXPECT_NEAR(mean.ssim, r.videos[0].ssim, 1e-15);
  EXPECT_NEAR(mean.bmse, r.videos[0].bmse, 1e-15);
}

TEST(Report, RoundTripsBitExactly) {
  const VideoTensor a = testing::random_video(1, 16, 16, 16), b = testing::random_video(1, 16, 16, 17);
  EvalConfig cfg;
  cfg.dataset = "synthetic-static";
  cfg.model = "m3ddm";
  cfg.mask_ratio = 0.66;
  const MetricsReport r = evaluate(a, b, MaskVideo(1, 16, 16, 1), cfg);
  EXPECT_EQ(report_from_json(report_to_json(r)), r);
  const auto dir = testing::scratch_dir("report");
  write_report(r, dir / "r.json");
  EXPECT_EQ(read_report(dir / "r.json"), r);
  const std::string table = report_table(r);
  EXPECT_NE(table.find("mse"), std::string::npos);
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 2);
}

}  // namespace
}  // namespace m3ddm
