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

#include "m3ddm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

namespace m3ddm {

TrainState make_train_state(DenoiserParams<float> params) {
  TrainState s{std::move(params), {}};
  s.adam.first = Vector<double>::Zero(s.params.values.size());
  s.adam.second = Vector<double>::Zero(s.params.values.size());
  s.adam.step = 0;
  return s;
}

Rng step_rng(std::uint64_t seed, std::int64_t step) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(static_cast<std::uint64_t>(step) >> 32),
                    0x6d33u};
  return Rng(seq);
}

namespace {

void adam_update(TrainState& state, const Vector<double>& grad, const TrainConfig& cfg) {
  AdamState& a = state.adam;
  if (a.first.size() != grad.size()) {
    a.first = Vector<double>::Zero(grad.size());
    a.second = Vector<double>::Zero(grad.size());
  }
  ++a.step;
  a.first = cfg.beta1 * a.first + (1.0 - cfg.beta1) * grad;
  a.second = cfg.beta2 * a.second + (1.0 - cfg.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(a.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(a.step));
  const Vector<double> update =
      (cfg.learning_rate * (a.first / c1).array() / ((a.second / c2).array().sqrt() + cfg.epsilon)).matrix();
  state.params.values -= update.cast<float>();
}

VideoTensor single_frame(const VideoTensor& video, Index t) {
  VideoTensor f(1, video.height(), video.width(), video.channels());
  f.frame(0) = video.frame(t);
  return f;
}

}  // namespace

LatentVideo predict_total_noise(const ConditionBundle& bundle, const DenoiserParams<float>& denoiser,
                                const CodecParams& codec, const DiffusionSchedule& train_sched) {
  LatentVideo eps = predict_noise<float>(bundle, denoiser);
  eps.matrix() += gaussian_noise_estimate(bundle.z_t, train_sched.alpha_bar[bundle.timestep], codec.latent_variance)
                      .matrix();
  return eps;
}

double train_step(const std::vector<VideoTensor>& batch, const CodecParams& codec, TrainState& state,
                  const DiffusionSchedule& sched, const TrainConfig& cfg, Rng& rng) {
  if (batch.empty()) throw ValueError("train_step: empty batch");
  Vector<double> grad = Vector<double>::Zero(state.params.values.size());
  double loss = 0.0;
  std::uniform_int_distribution<int> pick_t(1, sched.steps);
  for (const auto& clip : batch) {
    validate_video(clip);
    const MaskVideo mask = sample_video_mask(cfg.mask_mode, clip.frames(), clip.height(), clip.width(), rng);
    const VideoTensor masked = apply_mask(clip, mask);
    const LatentVideo z = encode(clip, codec);
    const LatentVideo z_masked = encode(masked, codec);
    const LatentMask m = downsample_mask(mask, codec.stride);
    const LatentVideo global = encode(sample_global_frames(masked, cfg.global_frames), codec);
    const int t = pick_t(rng);
    const LatentVideo eps = gaussian_like(z.shape(), rng);
    const LatentVideo z_t = forward_diffuse(z, t, eps, sched);
    const Volume<double> cond = concat_condition(z_t, z_masked, m);
    // The network fits what the per-channel Gaussian estimate leaves over.
    LatentVideo residual = eps;
    residual.matrix() -= gaussian_noise_estimate(z_t, sched.alpha_bar[t], codec.latent_variance).matrix();
    const LossGradient<float> lg = loss_and_gradient<float>(state.params, cond.cast<float>(),
                                                            sched.model_timestep[t], global.cast<float>(),
                                                            residual.cast<float>());
    loss += lg.loss;
    grad += lg.gradient.cast<double>();
  }
  const double n = static_cast<double>(batch.size());
  loss /= n;
  grad /= n;
  if (!std::isfinite(loss) || !grad.allFinite())
    throw DivergenceError("non-finite loss at step " + std::to_string(state.params.steps_trained + 1));
  adam_update(state, grad, cfg);
  ++state.params.steps_trained;
  return loss;
}

std::vector<double> train(const std::vector<VideoTensor>& dataset, const CodecParams& codec, TrainState& state,
                          const DiffusionSchedule& sched, const TrainConfig& cfg, const StepCallback& on_step) {
  if (dataset.empty()) throw ValueError("train: empty dataset");
  if (cfg.batch_size < 1 || cfg.clip_length < 1) throw ConfigError("train: batch_size and clip_length must be >= 1");
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(std::max<std::int64_t>(cfg.steps, 0)));
  for (std::int64_t i = 0; i < cfg.steps; ++i) {
    const std::int64_t step = state.params.steps_trained + 1;
    Rng rng = step_rng(cfg.seed, step);
    std::uniform_int_distribution<std::size_t> pick_video(0, dataset.size() - 1);
    std::vector<VideoTensor> batch;
    for (Index b = 0; b < cfg.batch_size; ++b) {
      const VideoTensor& v = dataset[pick_video(rng)];
      const Index len = std::min(cfg.clip_length, v.frames());
      const Index start = std::uniform_int_distribution<Index>(0, v.frames() - len)(rng);
      VideoTensor clip(len, v.height(), v.width(), v.channels());
      clip.matrix() = v.matrix().middleRows(start * v.sites_per_frame(), len * v.sites_per_frame());
      batch.push_back(std::move(clip));
    }
    const double loss = train_step(batch, codec, state, sched, cfg, rng);
    losses.push_back(loss);
    if (on_step) on_step(step, loss);
  }
  return losses;
}

VideoTensor boundary_fill(const VideoTensor& frame, const Plane& mask, Index iterations) {
  if (frame.frames() != 1) throw ShapeError("frames", "boundary_fill operates on a single frame");
  if (mask.rows() != frame.height() || mask.cols() != frame.width())
    throw ShapeError(mask.rows() != frame.height() ? "height" : "width", "boundary_fill: mask/frame size mismatch");
  const Index Hh = frame.height(), Ww = frame.width(), n = Hh * Ww;
  const Eigen::Map<const Eigen::Array<double, Eigen::Dynamic, 1>> masked(mask.data(), n);
  if ((masked == 0.0).all()) return frame;
  if ((masked != 0.0).all()) throw ValueError("boundary_fill: every pixel is masked");

  VideoTensor out = frame;
  auto& data = out.matrix();
  // Nearest-known initialisation by breadth-first propagation in raster order.
  std::vector<Index> source(static_cast<std::size_t>(n), -1);
  std::deque<Index> queue;
  for (Index p = 0; p < n; ++p)
    if (masked(p) == 0.0) {
      source[static_cast<std::size_t>(p)] = p;
      queue.push_back(p);
    }
  while (!queue.empty()) {
    const Index p = queue.front();
    queue.pop_front();
    const Index y = p / Ww, x = p % Ww;
    const Index nbrs[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
    for (const auto& nb : nbrs) {
      if (nb[0] < 0 || nb[0] >= Hh || nb[1] < 0 || nb[1] >= Ww) continue;
      const Index q = nb[0] * Ww + nb[1];
      if (source[static_cast<std::size_t>(q)] >= 0) continue;
      source[static_cast<std::size_t>(q)] = source[static_cast<std::size_t>(p)];
      queue.push_back(q);
    }
  }
  for (Index p = 0; p < n; ++p)
    if (masked(p) != 0.0) data.row(p) = frame.matrix().row(source[static_cast<std::size_t>(p)]);

  // Jacobi relaxation; image borders are reflecting (missing neighbours are skipped).
  RowMatrix<double> next = data;
  for (Index it = 0; it < iterations; ++it) {
    for (Index p = 0; p < n; ++p) {
      if (masked(p) == 0.0) continue;
      const Index y = p / Ww, x = p % Ww;
      next.row(p).setZero();
      double count = 0.0;
      if (y > 0) next.row(p) += data.row(p - Ww), count += 1.0;
      if (y + 1 < Hh) next.row(p) += data.row(p + Ww), count += 1.0;
      if (x > 0) next.row(p) += data.row(p - 1), count += 1.0;
      if (x + 1 < Ww) next.row(p) += data.row(p + 1), count += 1.0;
      next.row(p) /= count;
    }
    data.swap(next);
    for (Index p = 0; p < n; ++p)
      if (masked(p) == 0.0) next.row(p) = data.row(p);
  }
  return out;
}

Canvas build_canvas(const VideoTensor& input, Index canvas_h, Index canvas_w, Index fill_iterations) {
  validate_video(input);
  const Plane frame_mask = outpaint_mask(canvas_h, canvas_w, input.height(), input.width());
  Canvas c;
  c.top = (canvas_h - input.height()) / 2;
  c.left = (canvas_w - input.width()) / 2;
  c.mask = replicate_mask(frame_mask, input.frames());
  c.masked = VideoTensor(input.frames(), canvas_h, canvas_w, input.channels());
  for (Index t = 0; t < input.frames(); ++t)
    for (Index y = 0; y < input.height(); ++y)
      c.masked.frame(t).middleRows((y + c.top) * canvas_w + c.left, input.width()) =
          input.frame(t).middleRows(y * input.width(), input.width());
  c.filled = c.masked;
  for (Index t = 0; t < input.frames(); ++t)
    c.filled.frame(t) = boundary_fill(single_frame(c.masked, t), frame_mask, fill_iterations).frame(0);
  return c;
}

std::vector<PlanPass> coarse_to_fine_plan(Index frames, const std::vector<Index>& intervals, Index window) {
  if (frames < 1) throw ValueError("coarse_to_fine_plan: need at least one frame");
  if (window < 1) throw ConfigError("coarse_to_fine_plan: window must be positive");
  if (intervals.empty() || intervals.back() != 1) throw ConfigError("intervals must end with 1");
  for (std::size_t i = 1; i < intervals.size(); ++i)
    if (intervals[i] >= intervals[i - 1]) throw ConfigError("intervals must be strictly decreasing");
  if (intervals.front() < 1) throw ConfigError("intervals must be positive");

  std::vector<PlanPass> plan;
  std::set<Index> generated;
  for (const Index stride : intervals) {
    std::vector<Index> idx;
    for (Index f = 0; f < frames; f += stride) idx.push_back(f);
    if (idx.back() != frames - 1) idx.push_back(frames - 1);
    PlanPass pass;
    pass.stride = stride;
    const Index count = static_cast<Index>(idx.size());
    for (Index start = 0; start < count; start += window) {
      const Index begin = std::max<Index>(0, std::min(start, count - window));
      const Index end = std::min(begin + window, count);
      PlanWindow w;
      for (Index i = begin; i < end; ++i) {
        w.frames.push_back(idx[static_cast<std::size_t>(i)]);
        w.conditioning.push_back(generated.count(idx[static_cast<std::size_t>(i)]) != 0);
      }
      pass.windows.push_back(std::move(w));
      if (end == count) break;
    }
    generated.insert(idx.begin(), idx.end());
    plan.push_back(std::move(pass));
  }
  return plan;
}

VideoTensor blend(const VideoTensor& x, const VideoTensor& x_hat, const MaskVideo& mask) {
  require_same_shape(x.shape(), x_hat.shape(), "blend");
  validate_pair(x, mask);
  VideoTensor y = x;
  const auto m = mask.matrix().col(0).array();
  for (Index c = 0; c < x.channels(); ++c)
    y.matrix().col(c) = (x.matrix().col(c).array() * (1.0 - m) + x_hat.matrix().col(c).array() * m).matrix();
  return y;
}

CropBox aspect_crop_box(Index height, Index width, Index aspect_w, Index aspect_h) {
  if (aspect_w <= 0 || aspect_h <= 0) throw ValueError("aspect ratio terms must be positive");
  CropBox b;
  if (width * aspect_h >= height * aspect_w) {
    b.height = height;
    b.width = height * aspect_w / aspect_h;
  } else {
    b.width = width;
    b.height = width * aspect_h / aspect_w;
  }
  if (b.height < kMinFrameSide || b.width < kMinFrameSide)
    throw ValueError("aspect " + std::to_string(aspect_w) + ":" + std::to_string(aspect_h) + " impossible on a " +
                     std::to_string(height) + "x" + std::to_string(width) + " canvas");
  b.top = (height - b.height) / 2;
  b.left = (width - b.width) / 2;
  return b;
}

VideoTensor crop(const VideoTensor& video, const CropBox& box) {
  VideoTensor out(video.frames(), box.height, box.width, video.channels());
  for (Index t = 0; t < video.frames(); ++t)
    for (Index y = 0; y < box.height; ++y)
      out.frame(t).middleRows(y * box.width, box.width) =
          video.frame(t).middleRows((y + box.top) * video.width() + box.left, box.width);
  return out;
}

VideoTensor crop_to_aspect(const VideoTensor& canvas_video, Index aspect_w, Index aspect_h) {
  return crop(canvas_video, aspect_crop_box(canvas_video.height(), canvas_video.width(), aspect_w, aspect_h));
}

OutpaintResult outpaint(const VideoTensor& input, const CodecParams& codec, const DenoiserParams<float>& denoiser,
                        const DiffusionSchedule& train_sched, const InferConfig& cfg) {
  if (denoiser.steps_trained == 0 && !cfg.allow_untrained)
    throw ValueError("outpaint: denoiser has not been trained");
  if (denoiser.config.latent_channels != codec.latent_channels)
    throw ConfigError("outpaint: codec and denoiser latent channels differ");
  if (cfg.canvas_size % (2 * codec.stride) != 0)
    throw ConfigError("canvas size must be divisible by twice the codec stride");
  if (input.height() > cfg.canvas_size || input.width() > cfg.canvas_size)
    throw ShapeError(input.height() > cfg.canvas_size ? "height" : "width", "input does not fit the canvas");

  OutpaintResult r;
  r.canvas = build_canvas(input, cfg.canvas_size, cfg.canvas_size, cfg.fill_iterations);
  const Canvas& cv = r.canvas;
  const Index T = input.frames();
  const auto plan = coarse_to_fine_plan(T, cfg.intervals, cfg.window);
  const DiffusionSchedule isched = respace(train_sched, cfg.inference_steps);

  LatentVideo z_fill = encode(cv.filled, codec);
  LatentVideo z_masked = encode(cv.masked, codec);
  LatentMask m = downsample_mask(cv.mask, codec.stride);
  VideoTensor context_video = cv.masked;
  VideoTensor result = cv.filled;
  Rng rng(cfg.seed);

  auto gather = [](const auto& src, const std::vector<Index>& frames) {
    std::decay_t<decltype(src)> out(static_cast<Index>(frames.size()), src.height(), src.width(), src.channels());
    for (std::size_t i = 0; i < frames.size(); ++i) out.frame(static_cast<Index>(i)) = src.frame(frames[i]);
    return out;
  };

  for (const auto& pass : plan) {
    const ContextTokens tokens =
        encode_global_frames(sample_global_frames(context_video, cfg.global_frames), codec, denoiser);
    std::vector<Index> produced;
    for (const auto& w : pass.windows) {
      if (std::all_of(w.conditioning.begin(), w.conditioning.end(), [](bool b) { return b; })) continue;
      const LatentVideo zf = gather(z_fill, w.frames);
      const LatentVideo zm = gather(z_masked, w.frames);
      const LatentMask mw = gather(m, w.frames);
      const NoisePredictor predictor = [&](const LatentVideo& z_t, int timestep) {
        return predict_total_noise(ConditionBundle{z_t, zm, mw, tokens, timestep}, denoiser, codec, train_sched);
      };
      const LatentVideo z0 = sample(predictor, zf.shape(), isched, rng, zf, cfg.latent_clip);
      const VideoTensor x_hat = decode(z0, codec);
      const VideoTensor y = blend(gather(cv.masked, w.frames), x_hat, gather(cv.mask, w.frames));
      for (std::size_t i = 0; i < w.frames.size(); ++i) {
        if (w.conditioning[i]) continue;
        result.frame(w.frames[i]) = y.frame(static_cast<Index>(i));
        produced.push_back(w.frames[i]);
      }
    }
    std::sort(produced.begin(), produced.end());
    produced.erase(std::unique(produced.begin(), produced.end()), produced.end());
    for (const Index f : produced) {
      const VideoTensor frame = single_frame(result, f);
      const LatentVideo zf = encode(frame, codec);
      z_masked.frame(f) = zf.frame(0);
      z_fill.frame(f) = zf.frame(0);
      m.frame(f).setZero();
      context_video.frame(f) = frame.frame(0);
    }
    r.pass_canvases.push_back(result);
    r.pass_generated.push_back(std::move(produced));
  }
  r.canvas_output = result;
  r.output = crop_to_aspect(result, cfg.aspect_w, cfg.aspect_h);
  return r;
}

}  // namespace m3ddm
