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
#include <fstream>

#include "m3ddm/codec.hpp"
#include "m3ddm/data.hpp"
#include "m3ddm/metrics.hpp"
#include "test_util.hpp"

namespace m3ddm {
namespace {

std::vector<VideoTensor> small_dataset(std::uint64_t seed, Index videos = 8) {
  SynthConfig cfg;
  cfg.videos = videos;
  cfg.frames = 4;
  cfg.seed = seed;
  return videos_of(synth_videos(cfg));
}

const CodecParams& fitted() {
  static const CodecParams params = train_codec(small_dataset(11, 16), CodecConfig{});
  return params;
}

TEST(Encode, ShapeArithmetic) {
  const LatentVideo z = encode(VideoTensor(16, 64, 64, 3), fitted());
  EXPECT_EQ(z.shape(), (Shape{16, 16, 16, 4}));
}

TEST(Encode, IdenticalFramesGiveIdenticalLatents) {
  VideoTensor v = testing::random_video(2, 16, 16, 3);
  v.frame(1) = v.frame(0);
  const LatentVideo z = encode(v, fitted());
  EXPECT_EQ(z.frame(0), z.frame(1));
}

TEST(Encode, NonDivisibleHeightRejected) {
  try {
    encode(VideoTensor(1, 63, 64, 3), fitted());
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_EQ(e.axis(), "height");
  }
}

TEST(Encode, FramePermutationCommutes) {
  const VideoTensor v = testing::random_video(3, 16, 16, 5);
  VideoTensor p(3, 16, 16, 3);
  p.frame(0) = v.frame(2);
  p.frame(1) = v.frame(0);
  p.frame(2) = v.frame(1);
  const LatentVideo zv = encode(v, fitted()), zp = encode(p, fitted());
  EXPECT_EQ(zp.frame(0), zv.frame(2));
  EXPECT_EQ(zp.frame(1), zv.frame(0));
  EXPECT_EQ(zp.frame(2), zv.frame(1));
}

TEST(Decode, ZeroLatentIsFiniteAndClamped) {
  const VideoTensor x = decode(LatentVideo(2, 4, 4, 4), fitted());
  EXPECT_EQ(x.shape(), (Shape{2, 16, 16, 3}));
  EXPECT_TRUE(x.matrix().allFinite());
  EXPECT_GE(x.matrix().minCoeff(), 0.0);
  EXPECT_LE(x.matrix().maxCoeff(), 1.0);
}

TEST(Decode, ChannelMismatchRejected) {
  EXPECT_THROW(decode(LatentVideo(1, 4, 4, 3), fitted()), ShapeError);
}

TEST(Decode, RoundTripStaysInUnitRange) {
  const VideoTensor v = testing::random_video(2, 32, 32, 8);
  const VideoTensor x = decode(encode(v, fitted()), fitted());
  EXPECT_EQ(x.shape(), v.shape());
  EXPECT_GE(x.matrix().minCoeff(), 0.0);
  EXPECT_LE(x.matrix().maxCoeff(), 1.0);
}

TEST(TrainCodec, ReconstructionPsnrOnHeldOutSynthetic) {
  const auto held_out = small_dataset(99, 6);
  const double err = reconstruction_mse(held_out, fitted());
  EXPECT_GE(psnr_from_mse(err), 30.0) << "mse " << err;
}

TEST(TrainCodec, BeatsMeanPredictor) {
  const auto data = small_dataset(11, 16);
  double sum = 0, sq = 0, n = 0;
  for (const auto& v : data) {
    sum += v.matrix().sum();
    sq += v.matrix().squaredNorm();
    n += static_cast<double>(v.matrix().size());
  }
  const double variance = sq / n - (sum / n) * (sum / n);
  EXPECT_LT(reconstruction_mse(data, fitted()), variance);
}

TEST(TrainCodec, ConstantColourIsExact) {
  VideoTensor v(2, 16, 16, 3);
  for (Index r = 0; r < v.matrix().rows(); ++r) v.matrix().row(r) << 0.2, 0.5, 0.7;
  const CodecParams p = train_codec({v}, CodecConfig{});
  EXPECT_LT(reconstruction_mse({v}, p), 1e-4);
}

TEST(TrainCodec, EmptyDatasetRejected) {
  EXPECT_THROW(train_codec({}, CodecConfig{}), ValueError);
}

TEST(TrainCodec, Deterministic) {
  const auto data = small_dataset(4, 4);
  const CodecParams a = train_codec(data, CodecConfig{}), b = train_codec(data, CodecConfig{});
  EXPECT_EQ(a.encoder_weight, b.encoder_weight);
  EXPECT_EQ(a.decoder_weight, b.decoder_weight);
}

// Block-average oracle written against raw pixel indices.
double block_mean(const MaskVideo& m, Index t, Index by, Index bx, Index s) {
  double acc = 0;
  for (Index y = 0; y < s; ++y)
    for (Index x = 0; x < s; ++x) acc += m(t, by * s + y, bx * s + x, 0);
  return acc / static_cast<double>(s * s);
}

TEST(DownsampleMask, AllOnes) {
  MaskVideo m(2, 16, 16, 1);
  m.matrix().setOnes();
  const LatentMask lm = downsample_mask(m, 4);
  EXPECT_EQ(lm.shape(), (Shape{2, 4, 4, 1}));
  EXPECT_EQ(lm.matrix().minCoeff(), 1.0);
}

TEST(DownsampleMask, AlignedHalfIsBinary) {
  Plane p = Plane::Zero(16, 16);
  p.leftCols(8).setOnes();
  const LatentMask lm = downsample_mask(replicate_mask(p, 1), 4);
  for (Index y = 0; y < 4; ++y)
    for (Index x = 0; x < 4; ++x) EXPECT_EQ(lm(0, y, x, 0), x < 2 ? 1.0 : 0.0);
}

TEST(DownsampleMask, PartialBlockIsCoveredFraction) {
  Plane p = Plane::Zero(16, 16);
  p.leftCols(6).setOnes();
  const MaskVideo m = replicate_mask(p, 1);
  const LatentMask lm = downsample_mask(m, 4);
  EXPECT_DOUBLE_EQ(lm(0, 0, 1, 0), 0.5);
  for (Index y = 0; y < 4; ++y)
    for (Index x = 0; x < 4; ++x) EXPECT_DOUBLE_EQ(lm(0, y, x, 0), block_mean(m, 0, y, x, 4));
}

TEST(DownsampleMask, PreservesMean) {
  Rng rng(5);
  MaskVideo m(3, 16, 24, 1);
  std::bernoulli_distribution coin(0.3);
  for (Index i = 0; i < m.matrix().rows(); ++i) m.matrix()(i, 0) = coin(rng) ? 1.0 : 0.0;
  EXPECT_NEAR(downsample_mask(m, 4).matrix().mean(), m.matrix().mean(), 1e-12);
}

TEST(DownsampleMask, NonDivisibleRejected) {
  EXPECT_THROW(downsample_mask(MaskVideo(1, 16, 18, 1), 4), ShapeError);
}

TEST(CodecCheckpoint, BitExactReload) {
  const auto dir = testing::scratch_dir("codec_ck");
  save_codec(fitted(), dir / "c.bin");
  const CodecParams p = load_codec(dir / "c.bin");
  EXPECT_EQ(p.stride, fitted().stride);
  EXPECT_EQ(p.latent_channels, fitted().latent_channels);
  EXPECT_EQ(p.encoder_weight, fitted().encoder_weight);
  EXPECT_EQ(p.encoder_bias, fitted().encoder_bias);
  EXPECT_EQ(p.decoder_weight, fitted().decoder_weight);
  EXPECT_EQ(p.decoder_bias, fitted().decoder_bias);
}

TEST(CodecCheckpoint, BadMagicRejected) {
  const auto dir = testing::scratch_dir("codec_bad");
  std::ofstream(dir / "c.bin") << "NOTACODEC";
  EXPECT_THROW(load_codec(dir / "c.bin"), IoError);
}

}  // namespace
}  // namespace m3ddm
