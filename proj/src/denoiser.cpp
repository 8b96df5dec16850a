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

#include "m3ddm/denoiser.hpp"

#include <cmath>

#include "m3ddm/checkpoint.hpp"
#include "m3ddm/nn.hpp"

namespace m3ddm {

Index ParamLayout::add(const std::string& name, Index rows, Index cols) {
  if (index_.count(name)) throw ValueError("duplicate parameter slot: " + name);
  index_[name] = slots_.size();
  slots_.push_back({name, size_, rows, cols});
  size_ += rows * cols;
  return slots_.back().offset;
}

const ParamSlot& ParamLayout::operator[](const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ValueError("unknown parameter slot: " + name);
  return slots_[it->second];
}

ParamLayout denoiser_layout(const DenoiserConfig& cfg) {
  const Index c = cfg.latent_channels, F = cfg.base_channels, F2 = 2 * cfg.base_channels;
  const Index A = cfg.attention_channels, D = cfg.context_channels, E = cfg.time_features;
  ParamLayout L;
  auto conv = [&](const std::string& name, const nn::Kernel& k, Index in, Index out) {
    L.add(name + ".weight", k.taps() * in, out);
    L.add(name + ".bias", 1, out);
  };
  L.add("time.weight", E, E);
  L.add("time.bias", 1, E);
  L.add("time.level1.weight", E, F);
  L.add("time.level1.bias", 1, F);
  L.add("time.level2.weight", E, F2);
  L.add("time.level2.bias", 1, F2);
  conv("conv_in", nn::kSpatial3, cfg.condition_channels(), F);
  conv("down.spatial", nn::kSpatial3, F, F);
  conv("down.temporal", nn::kTemporal3, F, F);
  conv("mid.in", nn::kSpatial3, F, F2);
  conv("mid.temporal", nn::kTemporal3, F2, F2);
  L.add("attn.query", F2, A);
  L.add("attn.key", D, A);
  L.add("attn.value", D, A);
  L.add("attn.out.weight", A, F2);
  L.add("attn.out.bias", 1, F2);
  conv("mid.spatial", nn::kSpatial3, F2, F2);
  conv("up.in", nn::kSpatial3, F2 + F, F);
  conv("up.temporal", nn::kTemporal3, F, F);
  conv("conv_out", nn::kSpatial3, F, c);
  conv("context", nn::kSpatial3, c, D);
  L.add("skip.weight", cfg.condition_channels(), c);
  return L;
}

template <typename S>
DenoiserParams<S> init_denoiser(const DenoiserConfig& config, Rng& rng) {
  if (config.latent_channels < 1 || config.base_channels < 1 || config.context_channels < 1 ||
      config.attention_channels < 1 || config.time_features < 2 || config.time_features % 2 ||
      (config.context_pool != 1 && config.context_pool != 2))
    throw ConfigError("invalid denoiser configuration");
  const ParamLayout layout = denoiser_layout(config);
  DenoiserParams<S> p{config, Vector<S>::Zero(layout.size()), 0};
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& slot : layout.slots()) {
    if (slot.name.ends_with(".bias")) continue;
    if (slot.name == "skip.weight") continue;  // linear path starts closed
    double scale = 1.0 / std::sqrt(static_cast<double>(slot.rows));
    if (slot.name == "conv_out.weight") scale *= 0.1;
    for (Index i = 0; i < slot.size(); ++i) p.values(slot.offset + i) = static_cast<S>(scale * normal(rng));
  }
  return p;
}

Volume<double> concat_condition(const LatentVideo& z_t, const LatentVideo& z_masked, const LatentMask& latent_mask) {
  require_same_shape(z_t.shape(), z_masked.shape(), "concat_condition (Z_t vs masked latent)");
  require_same_shape(z_t.shape(), latent_mask.shape(), "concat_condition (Z_t vs latent mask)", false);
  if (latent_mask.channels() != 1) throw ShapeError("channels", "latent mask must have one channel");
  return nn::concat_channels<double>({&z_t, &z_masked, &latent_mask});
}

std::vector<Index> global_frame_indices(Index frames, Index n) {
  if (frames < 1 || n < 1) throw ValueError("global_frame_indices: frames and n must be positive");
  std::vector<Index> idx(n);
  for (Index i = 0; i < n; ++i)
    idx[i] = n == 1 ? 0
                    : static_cast<Index>(std::floor(static_cast<double>(i) * static_cast<double>(frames - 1) /
                                                        static_cast<double>(n - 1) +
                                                    0.5));
  return idx;
}

VideoTensor sample_global_frames(const VideoTensor& masked_video, Index n) {
  const auto idx = global_frame_indices(masked_video.frames(), n);
  VideoTensor out(n, masked_video.height(), masked_video.width(), masked_video.channels());
  for (Index i = 0; i < n; ++i) out.frame(i) = masked_video.frame(idx[i]);
  return out;
}

namespace {

template <typename S>
class Weights {
 public:
  Weights(const DenoiserConfig& cfg, const S* data) : layout_(denoiser_layout(cfg)), data_(data) {}

  Eigen::Map<const RowMatrix<S>> mat(const std::string& name) const {
    const auto& s = layout_[name];
    return {data_ + s.offset, s.rows, s.cols};
  }
  Eigen::Map<const RowVector<S>> row(const std::string& name) const {
    const auto& s = layout_[name];
    return {data_ + s.offset, s.cols};
  }

 private:
  ParamLayout layout_;
  const S* data_;
};

template <typename S>
class Grads {
 public:
  Grads(const DenoiserConfig& cfg, S* data) : layout_(denoiser_layout(cfg)), data_(data) {}

  Eigen::Map<RowMatrix<S>> mat(const std::string& name) {
    const auto& s = layout_[name];
    return {data_ + s.offset, s.rows, s.cols};
  }
  Eigen::Map<RowVector<S>> row(const std::string& name) {
    const auto& s = layout_[name];
    return {data_ + s.offset, s.cols};
  }

 private:
  ParamLayout layout_;
  S* data_;
};

template <typename S>
struct Tape {
  RowVector<S> time_in, time_pre, time_hidden;
  nn::ConvCache<S> in, down_s, down_t, mid_in, mid_t, mid_s, up_in, up_t, out, context;
  Volume<S> a0, a2, a4, h1, b0, b2, b3, b4, b6, b7, u2, u4, u5;
  RowMatrix<S> ctx, q, k, v, p, o;
  Volume<S> x;
};

template <typename S>
Volume<S> add(Volume<S> a, const Volume<S>& b) {
  a.matrix() += b.matrix();
  return a;
}

template <typename S>
RowMatrix<S> context_forward(const Weights<S>& w, Index pool, const Volume<S>& global_latents,
                             nn::ConvCache<S>& cache) {
  Volume<S> tokens = nn::conv(global_latents, nn::kSpatial3, w.mat("context.weight"), w.row("context.bias"), cache);
  if (pool == 2) tokens = nn::avgpool2(tokens);
  return std::move(tokens.matrix());
}

template <typename S>
Volume<S> network_forward(const DenoiserParams<S>& params, const Volume<S>& x, int timestep,
                          const RowMatrix<S>& context, Tape<S>& tp) {
  const DenoiserConfig& cfg = params.config;
  if (params.values.size() != denoiser_layout(cfg).size())
    throw ShapeError("parameters", "parameter vector does not match the denoiser configuration");
  if (x.channels() != cfg.condition_channels())
    throw ShapeError("channels", "condition has " + std::to_string(x.channels()) + " channels, expected 2c+1 = " +
                                     std::to_string(cfg.condition_channels()));
  if (x.height() % 2 || x.width() % 2)
    throw ShapeError(x.height() % 2 ? "height" : "width", "latent extents must be even, got " + x.shape().str());
  if (context.cols() != cfg.context_channels || context.rows() < 1)
    throw ShapeError("context", "global context must be (tokens >= 1, " + std::to_string(cfg.context_channels) + ")");

  const Weights<S> w(cfg, params.values.data());
  const S inv_sqrt_a = S(1) / std::sqrt(static_cast<S>(cfg.attention_channels));

  tp.time_in = nn::timestep_features<S>(timestep, cfg.time_features);
  tp.time_pre = tp.time_in * w.mat("time.weight") + w.row("time.bias");
  tp.time_hidden = tp.time_pre.unaryExpr([](S v) { return v * nn::sigmoid(v); });
  const RowVector<S> e1 = tp.time_hidden * w.mat("time.level1.weight") + w.row("time.level1.bias");
  const RowVector<S> e2 = tp.time_hidden * w.mat("time.level2.weight") + w.row("time.level2.bias");

  // Level 1.
  tp.a0 = nn::conv(x, nn::kSpatial3, w.mat("conv_in.weight"), w.row("conv_in.bias"), tp.in);
  tp.a0.matrix().rowwise() += e1;
  tp.a2 = nn::conv(nn::silu(tp.a0), nn::kSpatial3, w.mat("down.spatial.weight"), w.row("down.spatial.bias"), tp.down_s);
  tp.a4 = nn::conv(nn::silu(tp.a2), nn::kTemporal3, w.mat("down.temporal.weight"), w.row("down.temporal.bias"),
                   tp.down_t);
  tp.h1 = add(tp.a0, tp.a4);

  // Bottleneck.
  tp.b0 = nn::conv(nn::avgpool2(tp.h1), nn::kSpatial3, w.mat("mid.in.weight"), w.row("mid.in.bias"), tp.mid_in);
  tp.b0.matrix().rowwise() += e2;
  tp.b2 = nn::conv(nn::silu(tp.b0), nn::kTemporal3, w.mat("mid.temporal.weight"), w.row("mid.temporal.bias"), tp.mid_t);
  tp.b3 = add(tp.b0, tp.b2);

  tp.ctx = context;
  tp.q.noalias() = tp.b3.matrix() * w.mat("attn.query");
  tp.k.noalias() = context * w.mat("attn.key");
  tp.v.noalias() = context * w.mat("attn.value");
  RowMatrix<S> scores(tp.q.rows(), tp.k.rows());
  scores.noalias() = tp.q * tp.k.transpose();
  scores *= inv_sqrt_a;
  tp.p = nn::softmax_rows(scores);
  tp.o.noalias() = tp.p * tp.v;
  tp.b4 = tp.b3;
  tp.b4.matrix().noalias() += tp.o * w.mat("attn.out.weight");
  tp.b4.matrix().rowwise() += w.row("attn.out.bias");

  tp.b6 = nn::conv(nn::silu(tp.b4), nn::kSpatial3, w.mat("mid.spatial.weight"), w.row("mid.spatial.bias"), tp.mid_s);
  tp.b7 = add(tp.b4, tp.b6);

  // Level 1 again, with the skip.
  const Volume<S> up = nn::upsample2(tp.b7);
  tp.u2 = nn::conv(nn::concat_channels<S>({&up, &tp.h1}), nn::kSpatial3, w.mat("up.in.weight"), w.row("up.in.bias"),
                   tp.up_in);
  tp.u4 = nn::conv(nn::silu(tp.u2), nn::kTemporal3, w.mat("up.temporal.weight"), w.row("up.temporal.bias"), tp.up_t);
  tp.u5 = add(tp.u2, tp.u4);
  Volume<S> out = nn::conv(nn::silu(tp.u5), nn::kSpatial3, w.mat("conv_out.weight"), w.row("conv_out.bias"), tp.out);
  out.matrix().noalias() += x.matrix() * w.mat("skip.weight");
  tp.x = x;
  if (!out.all_finite()) throw DivergenceError("denoiser produced non-finite activations");
  return out;
}

template <typename S>
RowMatrix<S> network_backward(const DenoiserParams<S>& params, const Volume<S>& grad_out, Tape<S>& tp,
                              Vector<S>& gradient) {
  const DenoiserConfig& cfg = params.config;
  const Weights<S> w(cfg, params.values.data());
  Grads<S> g(cfg, gradient.data());
  const S inv_sqrt_a = S(1) / std::sqrt(static_cast<S>(cfg.attention_channels));
  const Index F = cfg.base_channels, F2 = 2 * F;

  auto conv_back = [&](const Volume<S>& grad, const nn::Kernel& k, const std::string& name,
                       const nn::ConvCache<S>& cache, bool need_input = true) {
    return nn::conv_backward(grad, k, w.mat(name + ".weight"), cache, g.mat(name + ".weight"),
                             g.row(name + ".bias"), need_input);
  };

  g.mat("skip.weight").noalias() += tp.x.matrix().transpose() * grad_out.matrix();
  Volume<S> d_u5 = nn::silu_backward(conv_back(grad_out, nn::kSpatial3, "conv_out", tp.out), tp.u5);
  Volume<S> d_u2 = add(d_u5, nn::silu_backward(conv_back(d_u5, nn::kTemporal3, "up.temporal", tp.up_t), tp.u2));
  const Volume<S> d_cat = conv_back(d_u2, nn::kSpatial3, "up.in", tp.up_in);
  const Shape up_shape{d_cat.frames(), d_cat.height(), d_cat.width(), F2};
  const Shape skip_shape{d_cat.frames(), d_cat.height(), d_cat.width(), F};
  Volume<S> d_h1(skip_shape, RowMatrix<S>(d_cat.matrix().rightCols(F)));
  const Volume<S> d_b7 = nn::upsample2_backward(Volume<S>(up_shape, RowMatrix<S>(d_cat.matrix().leftCols(F2))));

  Volume<S> d_b4 = add(d_b7, nn::silu_backward(conv_back(d_b7, nn::kSpatial3, "mid.spatial", tp.mid_s), tp.b4));

  // Cross-attention.
  const RowMatrix<S>& d_o_out = d_b4.matrix();
  g.mat("attn.out.weight").noalias() += tp.o.transpose() * d_o_out;
  g.row("attn.out.bias") += d_o_out.colwise().sum();
  RowMatrix<S> d_o(tp.o.rows(), tp.o.cols());
  d_o.noalias() = d_o_out * w.mat("attn.out.weight").transpose();
  RowMatrix<S> d_p(tp.p.rows(), tp.p.cols());
  d_p.noalias() = d_o * tp.v.transpose();
  RowMatrix<S> d_v(tp.v.rows(), tp.v.cols());
  d_v.noalias() = tp.p.transpose() * d_o;
  const Vector<S> inner = (d_p.array() * tp.p.array()).rowwise().sum();
  RowMatrix<S> d_s = (tp.p.array() * (d_p.array().colwise() - inner.array())).matrix();
  d_s *= inv_sqrt_a;
  RowMatrix<S> d_q(tp.q.rows(), tp.q.cols());
  d_q.noalias() = d_s * tp.k;
  RowMatrix<S> d_k(tp.k.rows(), tp.k.cols());
  d_k.noalias() = d_s.transpose() * tp.q;
  g.mat("attn.query").noalias() += tp.b3.matrix().transpose() * d_q;
  g.mat("attn.key").noalias() += tp.ctx.transpose() * d_k;
  g.mat("attn.value").noalias() += tp.ctx.transpose() * d_v;
  RowMatrix<S> d_ctx(tp.ctx.rows(), tp.ctx.cols());
  d_ctx.noalias() = d_k * w.mat("attn.key").transpose();
  d_ctx.noalias() += d_v * w.mat("attn.value").transpose();

  Volume<S> d_b3 = d_b4;
  d_b3.matrix().noalias() += d_q * w.mat("attn.query").transpose();

  Volume<S> d_b0 = add(d_b3, nn::silu_backward(conv_back(d_b3, nn::kTemporal3, "mid.temporal", tp.mid_t), tp.b0));
  const RowVector<S> d_e2 = d_b0.matrix().colwise().sum();
  d_h1.matrix() += nn::avgpool2_backward(conv_back(d_b0, nn::kSpatial3, "mid.in", tp.mid_in)).matrix();

  const Volume<S> d_a2 = nn::silu_backward(conv_back(d_h1, nn::kTemporal3, "down.temporal", tp.down_t), tp.a2);
  Volume<S> d_a0 = add(d_h1, nn::silu_backward(conv_back(d_a2, nn::kSpatial3, "down.spatial", tp.down_s), tp.a0));
  const RowVector<S> d_e1 = d_a0.matrix().colwise().sum();
  conv_back(d_a0, nn::kSpatial3, "conv_in", tp.in, false);

  // Time embedding.
  g.mat("time.level1.weight").noalias() += tp.time_hidden.transpose() * d_e1;
  g.row("time.level1.bias") += d_e1;
  g.mat("time.level2.weight").noalias() += tp.time_hidden.transpose() * d_e2;
  g.row("time.level2.bias") += d_e2;
  RowVector<S> d_hidden = d_e1 * w.mat("time.level1.weight").transpose() + d_e2 * w.mat("time.level2.weight").transpose();
  const RowVector<S> d_pre = d_hidden.cwiseProduct(tp.time_pre.unaryExpr([](S v) {
    const S s = nn::sigmoid(v);
    return s * (S(1) + v * (S(1) - s));
  }));
  g.mat("time.weight").noalias() += tp.time_in.transpose() * d_pre;
  g.row("time.bias") += d_pre;
  return d_ctx;
}

}  // namespace

template <typename S>
RowMatrix<S> project_context(const DenoiserParams<S>& params, const Volume<S>& global_latents) {
  if (global_latents.channels() != params.config.latent_channels)
    throw ShapeError("channels", "global latents have " + std::to_string(global_latents.channels()) +
                                     " channels, expected " + std::to_string(params.config.latent_channels));
  const Weights<S> w(params.config, params.values.data());
  nn::ConvCache<S> cache;
  return context_forward(w, params.config.context_pool, global_latents, cache);
}

template <typename S>
ContextTokens encode_global_frames(const VideoTensor& global_frames, const CodecParams& codec,
                                   const DenoiserParams<S>& params) {
  const LatentVideo latents = encode(global_frames, codec);
  return project_context(params, Volume<S>(latents.template cast<S>())).template cast<double>();
}

template <typename S>
Volume<S> predict_noise(const DenoiserParams<S>& params, const Volume<S>& condition, int timestep,
                        const RowMatrix<S>& context) {
  Tape<S> tape;
  Volume<S> out = network_forward(params, condition, timestep, context, tape);
  return out;
}

template <typename S>
LatentVideo predict_noise(const ConditionBundle& bundle, const DenoiserParams<S>& params) {
  const Volume<double> cond = concat_condition(bundle.z_t, bundle.z_masked, bundle.latent_mask);
  const Volume<S> out = predict_noise<S>(params, cond.template cast<S>(), bundle.timestep,
                                         bundle.global_context.template cast<S>());
  return LatentVideo(out.template cast<double>());
}

template <typename S>
LossGradient<S> loss_and_gradient(const DenoiserParams<S>& params, const Volume<S>& condition, int timestep,
                                  const Volume<S>& global_latents, const Volume<S>& eps_true) {
  const Weights<S> w(params.config, params.values.data());
  Tape<S> tape;
  const RowMatrix<S> context = context_forward(w, params.config.context_pool, global_latents, tape.context);
  const Volume<S> pred = network_forward(params, condition, timestep, context, tape);
  require_same_shape(pred.shape(), eps_true.shape(), "loss_and_gradient");

  LossGradient<S> result;
  const Index n = eps_true.shape().size();
  Volume<S> grad_out = pred;
  grad_out.matrix() -= eps_true.matrix();
  result.loss = static_cast<double>(grad_out.matrix().template cast<double>().squaredNorm()) / static_cast<double>(n);
  if (!std::isfinite(result.loss)) throw DivergenceError("non-finite denoising loss");
  grad_out.matrix() *= static_cast<S>(2.0 / static_cast<double>(n));

  result.gradient = Vector<S>::Zero(params.values.size());
  const RowMatrix<S> d_ctx = network_backward(params, grad_out, tape, result.gradient);
  Grads<S> g(params.config, result.gradient.data());
  const Shape& in = tape.context.input_shape;
  const Index pool = params.config.context_pool;
  const Volume<S> d_tokens(Shape{in.frames, in.height / pool, in.width / pool, d_ctx.cols()}, d_ctx);
  const Volume<S> d_conv = pool == 2 ? nn::avgpool2_backward(d_tokens) : d_tokens;
  g.mat("context.weight").noalias() += tape.context.cols.transpose() * d_conv.matrix();
  g.row("context.bias") += d_conv.matrix().colwise().sum();
  return result;
}

void save_denoiser(const DenoiserCheckpoint& ck, const std::filesystem::path& path) {
  const DenoiserConfig& c = ck.params.config;
  Checkpoint out;
  out.magic = kDenoiserMagic;
  out.header = {c.latent_channels,
                c.base_channels,
                c.context_channels,
                c.attention_channels,
                c.time_features,
                ck.params.steps_trained,
                ck.mask_mode == MaskMode::M3DDMPlus ? 1 : 0,
                ck.seed,
                ck.adam ? 1 : 0,
                ck.adam ? ck.adam->step : 0,
                c.context_pool};
  const Index n = ck.params.values.size();
  out.payload.reserve(static_cast<std::size_t>(ck.adam ? 3 * n : n));
  for (Index i = 0; i < n; ++i) out.payload.push_back(static_cast<double>(ck.params.values(i)));
  if (ck.adam) {
    for (Index i = 0; i < n; ++i) out.payload.push_back(ck.adam->first(i));
    for (Index i = 0; i < n; ++i) out.payload.push_back(ck.adam->second(i));
  }
  write_checkpoint(path, out);
}

DenoiserCheckpoint load_denoiser(const std::filesystem::path& path) {
  const Checkpoint in = read_checkpoint(path, kDenoiserMagic);
  if (in.header.size() != 11) throw IoError("malformed denoiser checkpoint header: " + path.string());
  DenoiserCheckpoint ck;
  DenoiserConfig& c = ck.params.config;
  c.latent_channels = in.header[0];
  c.base_channels = in.header[1];
  c.context_channels = in.header[2];
  c.attention_channels = in.header[3];
  c.time_features = in.header[4];
  c.context_pool = in.header[10];
  if (c.context_pool != 1 && c.context_pool != 2) throw IoError("malformed denoiser checkpoint header: " + path.string());
  ck.params.steps_trained = in.header[5];
  ck.mask_mode = in.header[6] ? MaskMode::M3DDMPlus : MaskMode::M3DDM;
  ck.seed = in.header[7];
  const bool has_adam = in.header[8] != 0;
  const Index n = denoiser_layout(c).size();
  if (static_cast<Index>(in.payload.size()) != (has_adam ? 3 * n : n))
    throw IoError("denoiser checkpoint payload size mismatch: " + path.string());
  ck.params.values.resize(n);
  for (Index i = 0; i < n; ++i) ck.params.values(i) = static_cast<float>(in.payload[i]);
  if (has_adam) {
    AdamState a;
    a.step = in.header[9];
    a.first = Eigen::Map<const Vector<double>>(in.payload.data() + n, n);
    a.second = Eigen::Map<const Vector<double>>(in.payload.data() + 2 * n, n);
    ck.adam = std::move(a);
  }
  return ck;
}

#define M3DDM_INSTANTIATE(S)                                                                               \
  template DenoiserParams<S> init_denoiser<S>(const DenoiserConfig&, Rng&);                                \
  template RowMatrix<S> project_context<S>(const DenoiserParams<S>&, const Volume<S>&);                    \
  template ContextTokens encode_global_frames<S>(const VideoTensor&, const CodecParams&,                   \
                                                 const DenoiserParams<S>&);                                \
  template Volume<S> predict_noise<S>(const DenoiserParams<S>&, const Volume<S>&, int, const RowMatrix<S>&); \
  template LatentVideo predict_noise<S>(const ConditionBundle&, const DenoiserParams<S>&);                 \
  template LossGradient<S> loss_and_gradient<S>(const DenoiserParams<S>&, const Volume<S>&, int,           \
                                                const Volume<S>&, const Volume<S>&);

M3DDM_INSTANTIATE(float)
M3DDM_INSTANTIATE(double)

#undef M3DDM_INSTANTIATE

}  // namespace m3ddm
