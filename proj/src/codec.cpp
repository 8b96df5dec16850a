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

#include "m3ddm/codec.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

#include "m3ddm/checkpoint.hpp"
#include "m3ddm/nn.hpp"

namespace m3ddm {

namespace {

void require_divisible(const Shape& shape, Index stride) {
  if (shape.height % stride != 0)
    throw ShapeError("height", "height " + std::to_string(shape.height) + " is not divisible by stride " +
                                   std::to_string(stride));
  if (shape.width % stride != 0)
    throw ShapeError("width", "width " + std::to_string(shape.width) + " is not divisible by stride " +
                                  std::to_string(stride));
}

// One row per latent site, block entries ordered (dy, dx, channel).
RowMatrix<double> gather_blocks(const VideoTensor& video, Index stride) {
  const Index h = video.height() / stride, w = video.width() / stride, C = video.channels();
  RowMatrix<double> blocks(video.frames() * h * w, stride * stride * C);
  for (Index t = 0; t < video.frames(); ++t)
    for (Index i = 0; i < h; ++i)
      for (Index j = 0; j < w; ++j) {
        const Index row = (t * h + i) * w + j;
        for (Index dy = 0; dy < stride; ++dy)
          blocks.row(row).segment(dy * stride * C, stride * C) =
              Eigen::Map<const RowVector<double>>(&video.matrix()(video.site(t, i * stride + dy, j * stride), 0),
                                                  stride * C);
      }
  return blocks;
}

VideoTensor scatter_blocks(const RowMatrix<double>& blocks, Index frames, Index h, Index w, Index stride) {
  VideoTensor video(frames, h * stride, w * stride, 3);
  const Index C = 3;
  for (Index t = 0; t < frames; ++t)
    for (Index i = 0; i < h; ++i)
      for (Index j = 0; j < w; ++j) {
        const Index row = (t * h + i) * w + j;
        for (Index dy = 0; dy < stride; ++dy)
          Eigen::Map<RowVector<double>>(&video.matrix()(video.site(t, i * stride + dy, j * stride), 0),
                                        stride * C) = blocks.row(row).segment(dy * stride * C, stride * C);
      }
  return video;
}

nn::Kernel decoder_kernel(const CodecParams& p) {
  return {1, 2 * p.decoder_radius + 1, 2 * p.decoder_radius + 1};
}

}  // namespace

LatentVideo encode(const VideoTensor& video, const CodecParams& params) {
  require_divisible(video.shape(), params.stride);
  if (video.channels() != 3) throw ShapeError("channels", "codec expects RGB input");
  const RowMatrix<double> blocks = gather_blocks(video, params.stride);
  RowMatrix<double> z(blocks.rows(), params.latent_channels);
  z.noalias() = blocks * params.encoder_weight;
  z.rowwise() += params.encoder_bias;
  return LatentVideo(Shape{video.frames(), video.height() / params.stride, video.width() / params.stride,
                           params.latent_channels},
                     std::move(z));
}

VideoTensor decode(const LatentVideo& latent, const CodecParams& params) {
  if (latent.channels() != params.latent_channels)
    throw ShapeError("channels", "latent has " + std::to_string(latent.channels()) + " channels, codec expects " +
                                     std::to_string(params.latent_channels));
  const RowMatrix<double> features = nn::im2col<double>(latent, decoder_kernel(params));
  RowMatrix<double> blocks(features.rows(), params.block_size());
  blocks.noalias() = features * params.decoder_weight;
  blocks.rowwise() += params.decoder_bias;
  return clamp01(scatter_blocks(blocks, latent.frames(), latent.height(), latent.width(), params.stride));
}

LatentMask downsample_mask(const MaskVideo& mask, Index stride) {
  require_divisible(mask.shape(), stride);
  const Index h = mask.height() / stride, w = mask.width() / stride;
  LatentMask out(mask.frames(), h, w, 1);
  const double inv = 1.0 / static_cast<double>(stride * stride);
  for (Index t = 0; t < mask.frames(); ++t)
    for (Index i = 0; i < h; ++i)
      for (Index j = 0; j < w; ++j) {
        double sum = 0.0;
        for (Index dy = 0; dy < stride; ++dy)
          for (Index dx = 0; dx < stride; ++dx) sum += mask(t, i * stride + dy, j * stride + dx, 0);
        out(t, i, j, 0) = sum * inv;
      }
  return out;
}

CodecParams train_codec(const std::vector<VideoTensor>& dataset, const CodecConfig& config) {
  if (dataset.empty()) throw ValueError("train_codec: empty dataset");
  if (config.stride != 2 && config.stride != 4 && config.stride != 8)
    throw ConfigError("codec stride must be 2, 4 or 8");
  if (config.latent_channels < 1) throw ConfigError("codec needs at least one latent channel");

  CodecParams p;
  p.stride = config.stride;
  p.latent_channels = config.latent_channels;
  p.decoder_radius = config.decoder_radius;
  const Index dim = p.block_size();
  if (p.latent_channels > dim) throw ConfigError("more latent channels than block entries");

  Index total = 0;
  for (const auto& v : dataset) {
    require_divisible(v.shape(), p.stride);
    if (v.channels() != 3) throw ShapeError("channels", "codec expects RGB input");
    total += v.frames() * (v.height() / p.stride) * (v.width() / p.stride);
  }
  const Index keep_every = std::max<Index>(1, (total + config.max_blocks - 1) / config.max_blocks);

  // Encoder: leading principal directions of the pixel blocks.
  RowVector<double> mean = RowVector<double>::Zero(dim);
  Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(dim, dim);
  Index used = 0, seen = 0;
  std::vector<RowMatrix<double>> all_blocks;
  all_blocks.reserve(dataset.size());
  for (const auto& v : dataset) all_blocks.push_back(gather_blocks(v, p.stride));
  for (const auto& blocks : all_blocks)
    for (Index r = 0; r < blocks.rows(); ++r, ++seen)
      if (seen % keep_every == 0) {
        mean += blocks.row(r);
        ++used;
      }
  mean /= static_cast<double>(used);
  seen = 0;
  for (const auto& blocks : all_blocks)
    for (Index r = 0; r < blocks.rows(); ++r, ++seen)
      if (seen % keep_every == 0) {
        const RowVector<double> d = blocks.row(r) - mean;
        scatter.selfadjointView<Eigen::Lower>().rankUpdate(d.transpose());
      }
  scatter = scatter.selfadjointView<Eigen::Lower>();
  scatter /= static_cast<double>(used);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scatter);
  const Eigen::VectorXd& values = eig.eigenvalues();  // ascending
  // One shared scale so latents average unit variance per element while keeping the
  // principal energies in proportion (detail channels stay small, as in pixel space).
  const double kept = values.tail(p.latent_channels).sum() / static_cast<double>(p.latent_channels);
  const double scale = 1.0 / std::sqrt(std::max(kept, 1e-10));
  p.encoder_weight.resize(dim, p.latent_channels);
  p.latent_variance.resize(p.latent_channels);
  for (Index k = 0; k < p.latent_channels; ++k) {
    Eigen::VectorXd u = eig.eigenvectors().col(dim - 1 - k);
    Index arg = 0;
    u.cwiseAbs().maxCoeff(&arg);
    if (u(arg) < 0) u = -u;
    p.encoder_weight.col(k) = u * scale;
    p.latent_variance(k) = std::max(values(dim - 1 - k), 0.0) * scale * scale;
  }
  p.encoder_bias = -mean * p.encoder_weight;

  // Decoder: ridge least squares from latent neighbourhoods (+1 bias column) to blocks.
  const Index features = p.neighbourhood() * p.latent_channels;
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(features + 1, features + 1);
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(features + 1, dim);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const LatentVideo z = encode(dataset[i], p);
    RowMatrix<double> f(z.shape().rows(), features + 1);
    f.leftCols(features) = nn::im2col<double>(z, decoder_kernel(p));
    f.col(features).setOnes();
    gram.noalias() += f.transpose() * f;
    cross.noalias() += f.transpose() * all_blocks[i];
  }
  const double n = static_cast<double>(total);
  gram.diagonal().head(features).array() += config.ridge * n;
  const Eigen::MatrixXd solution = gram.ldlt().solve(cross);
  p.decoder_weight = solution.topRows(features);
  p.decoder_bias = solution.row(features);

  const double mse = reconstruction_mse(dataset, p);
  if (!std::isfinite(mse) || !p.decoder_weight.allFinite() || !p.encoder_weight.allFinite())
    throw DivergenceError("train_codec: non-finite fit");
  return p;
}

double reconstruction_mse(const std::vector<VideoTensor>& dataset, const CodecParams& params) {
  double sum = 0.0;
  Index count = 0;
  for (const auto& v : dataset) {
    const VideoTensor r = decode(encode(v, params), params);
    sum += (r.matrix() - v.matrix()).squaredNorm();
    count += v.shape().size();
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

void save_codec(const CodecParams& p, const std::filesystem::path& path) {
  Checkpoint ck;
  ck.magic = kCodecMagic;
  ck.header = {p.stride, p.latent_channels, p.decoder_radius};
  auto append = [&](const auto& m) {
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) ck.payload.push_back(m(r, c));
  };
  append(p.encoder_weight);
  append(p.encoder_bias);
  append(p.decoder_weight);
  append(p.decoder_bias);
  append(p.latent_variance);
  write_checkpoint(path, ck);
}

CodecParams load_codec(const std::filesystem::path& path) {
  const Checkpoint ck = read_checkpoint(path, kCodecMagic);
  if (ck.header.size() != 3) throw IoError("malformed codec checkpoint header: " + path.string());
  CodecParams p;
  p.stride = ck.header[0];
  p.latent_channels = ck.header[1];
  p.decoder_radius = ck.header[2];
  const Index dim = p.block_size(), features = p.neighbourhood() * p.latent_channels;
  const std::size_t expected = static_cast<std::size_t>(dim * p.latent_channels + p.latent_channels +
                                                        features * dim + dim + p.latent_channels);
  if (ck.payload.size() != expected) throw IoError("codec checkpoint payload size mismatch: " + path.string());
  std::size_t pos = 0;
  auto take = [&](auto& m, Index rows, Index cols) {
    m.resize(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) m(r, c) = ck.payload[pos++];
  };
  take(p.encoder_weight, dim, p.latent_channels);
  take(p.encoder_bias, 1, p.latent_channels);
  take(p.decoder_weight, features, dim);
  take(p.decoder_bias, 1, dim);
  take(p.latent_variance, 1, p.latent_channels);
  return p;
}

}  // namespace m3ddm
