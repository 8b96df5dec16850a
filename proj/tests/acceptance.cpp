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

// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero if any fail.
// The directional training experiment (criterion 7) dominates the runtime (~30 min).

#include <malloc.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "m3ddm/cli.hpp"
#include "m3ddm/codec.hpp"
#include "m3ddm/data.hpp"
#include "m3ddm/denoiser.hpp"
#include "m3ddm/diffusion.hpp"
#include "m3ddm/masking.hpp"
#include "m3ddm/metrics.hpp"
#include "m3ddm/pipeline.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace m3ddm {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------------------

Outcome mask_distribution() {
  const auto start = Clock::now();
  const int n = 100000;
  std::ostringstream detail;
  bool ok = true;
  for (MaskMode mode : {MaskMode::M3DDM, MaskMode::M3DDMPlus}) {
    Rng rng(11);
    std::array<int, kMaskKindCount> counts{};
    for (int i = 0; i < n; ++i) ++counts[static_cast<int>(sample_strategy(mode, rng).kind)];
    const std::array<double, kMaskKindCount> want =
        mode == MaskMode::M3DDM ? std::array<double, kMaskKindCount>{0.2, 0.1, 0.35, 0.1, 0.25}
                                : std::array<double, kMaskKindCount>{0.3, 0.55, 0.15, 0.0, 0.0};
    detail << to_string(mode) << " [";
    for (int k = 0; k < kMaskKindCount; ++k) {
      const double f = counts[k] / static_cast<double>(n);
      ok = ok && std::abs(f - want[k]) <= 0.01;
      detail << (k ? " " : "") << std::fixed << std::setprecision(4) << f;
    }
    detail << "] ";
  }
  const double secs = seconds_since(start);
  detail << std::setprecision(2) << secs << " s";
  return {ok && secs < 10.0, detail.str()};
}

Outcome temporal_consistency() {
  Rng rng(12);
  int consistent = 0;
  for (int i = 0; i < 1000; ++i) {
    const MaskVideo m = sample_video_mask(MaskMode::M3DDMPlus, 16, 32, 32, rng);
    bool same = true;
    for (Index t = 1; t < 16; ++t) same = same && m.frame(t) == m.frame(0);
    consistent += same;
  }
  int varying = 0;
  for (int i = 0; i < 1000; ++i) {
    const MaskVideo m = sample_video_mask(MaskMode::M3DDM, 16, 32, 32, rng);
    bool differs = false;
    for (Index t = 1; t < 16 && !differs; ++t) differs = m.frame(t) != m.frame(0);
    varying += differs;
  }
  std::ostringstream d;
  d << "m3ddm-plus consistent " << consistent << "/1000, m3ddm varying " << varying << "/1000";
  return {consistent == 1000 && varying >= 990, d.str()};
}

Outcome diffusion_algebra() {
  const auto s = default_schedule();
  Rng rng(13);
  const Shape shape{2, 8, 8, 4};
  const LatentVideo z = gaussian_like(shape, rng);
  // alpha_bar[0] = 1.
  const double identity_err =
      (forward_diffuse(z, 0, gaussian_like(shape, rng), s).matrix() - z.matrix()).cwiseAbs().maxCoeff();

  double worst_var = 0;
  const Shape big{1, 250, 100, 4};
  const LatentVideo zero(big);
  for (int t : {1, 10, 50, 100, 150, 200}) {
    const LatentVideo out = forward_diffuse(zero, t, gaussian_like(big, rng), s);
    const double mean = out.matrix().mean();
    const double var = (out.matrix().array() - mean).square().mean();
    worst_var = std::max(worst_var, std::abs(var / (1 - s.alpha_bar[t]) - 1));
  }

  double inv_err = 0;
  for (int t : {1, 50, 200}) {
    const LatentVideo eps = gaussian_like(shape, rng);
    inv_err = std::max(
        inv_err, (predict_clean(forward_diffuse(z, t, eps, s), eps, t, s).matrix() - z.matrix()).cwiseAbs().maxCoeff());
    if (t == 1) {
      const LatentVideo back = reverse_step(forward_diffuse(z, 1, eps, s), eps, 1, s, rng);
      inv_err = std::max(inv_err, (back.matrix() - z.matrix()).cwiseAbs().maxCoeff());
    }
  }
  std::ostringstream d;
  d << std::scientific << std::setprecision(2) << "identity " << identity_err << ", variance rel " << worst_var
    << ", inversion " << inv_err;
  return {identity_err == 0.0 && worst_var <= 0.02 && inv_err < 1e-6, d.str()};
}

Volume<double> normal_volume(Index t, Index h, Index w, Index c, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Volume<double> v(t, h, w, c);
  for (Index i = 0; i < v.shape().size(); ++i) v.matrix().data()[i] = normal(rng);
  return v;
}

Outcome gradient_correctness() {
  DenoiserConfig cfg;
  cfg.base_channels = cfg.context_channels = cfg.attention_channels = cfg.time_features = 4;
  std::ostringstream d;
  bool ok = true;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    auto p = init_denoiser<double>(cfg, rng);
    std::normal_distribution<double> jitter(0.0, 0.2);
    for (Index i = 0; i < p.values.size(); ++i) p.values(i) += jitter(rng);
    const auto cond = normal_volume(2, 8, 8, cfg.condition_channels(), rng);
    const auto global = normal_volume(2, 8, 8, cfg.latent_channels, rng);
    const auto eps = normal_volume(2, 8, 8, cfg.latent_channels, rng);
    const int t = 37;
    const Vector<double> grad = loss_and_gradient(p, cond, t, global, eps).gradient;
    Vector<double> fd(p.values.size());
    const double h = 1e-5;
    for (Index i = 0; i < p.values.size(); ++i) {
      const double keep = p.values(i);
      p.values(i) = keep + h;
      const double up = loss_and_gradient(p, cond, t, global, eps).loss;
      p.values(i) = keep - h;
      const double down = loss_and_gradient(p, cond, t, global, eps).loss;
      p.values(i) = keep;
      fd(i) = (up - down) / (2 * h);
    }
    const double rel = (grad - fd).norm() / (grad.norm() + fd.norm());
    ok = ok && rel <= 1e-3;
    d << "seed " << seed << " rel " << std::scientific << std::setprecision(2) << rel << "  ";
  }
  return {ok, d.str()};
}

Outcome metric_oracles() {
  double worst = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const VideoTensor a = testing::random_video(2, 8, 8, 100 + s), b = testing::random_video(2, 8, 8, 200 + s);
    SsimOptions o;
    o.window = 7;
    worst = std::max(worst, std::abs(mse(a, b) - testing::oracle_mse(a, b)));
    worst = std::max(worst, std::abs(psnr(a, b) - 10 * std::log10(1.0 / testing::oracle_mse(a, b))));
    worst = std::max(worst, std::abs(ssim(a, b, o) - testing::oracle_ssim(a, b, 7, 1.5)));
    worst = std::max(worst, std::abs(ssim(a, a, o) - 1.0));
  }
  VideoTensor flat(2, 16, 16, 3);
  flat.matrix().setConstant(0.4);
  const double flat_bmse = bmse(flat);
  int blur_ok = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const VideoTensor v = testing::random_video(2, 16, 16, 300 + s);
    blur_ok += bmse(gaussian_blur(v, kDefaultBlurSigma)) <= bmse(v);
  }
  std::ostringstream d;
  d << "oracle diff " << std::scientific << std::setprecision(2) << worst << ", bmse(const) " << flat_bmse
    << ", blur monotone " << blur_ok << "/100";
  return {worst <= 1e-9 && flat_bmse < 1e-20 && blur_ok == 100, d.str()};
}

// A small codec and an untrained denoiser: the invariants below hold for any weights.
struct ToyModel {
  CodecParams codec;
  DenoiserParams<float> denoiser;
};

ToyModel toy_model() {
  SynthConfig sc;
  sc.videos = 4;
  sc.frames = 4;
  sc.seed = 21;
  ToyModel m;
  m.codec = train_codec(videos_of(synth_videos(sc)), CodecConfig{});
  DenoiserConfig dc;
  dc.base_channels = dc.context_channels = dc.attention_channels = dc.time_features = 8;
  dc.context_pool = 2;
  Rng rng(22);
  m.denoiser = init_denoiser<float>(dc, rng);
  return m;
}

Outcome known_region_invariance(const ToyModel& model) {
  Rng rng(31);
  std::uniform_int_distribution<Index> frames(2, 12), side(8, 64);
  int exact = 0;
  for (int i = 0; i < 20; ++i) {
    const Index t = frames(rng), h = side(rng), w = side(rng);
    const VideoTensor input = quantize8(testing::random_video(t, h, w, 400 + i));
    InferConfig cfg;
    cfg.seed = 500 + i;
    cfg.inference_steps = 10;
    cfg.allow_untrained = true;
    const OutpaintResult r = outpaint(input, model.codec, model.denoiser, default_schedule(), cfg);
    const VideoTensor out = quantize8(r.canvas_output);
    bool same = true;
    for (Index f = 0; f < t && same; ++f)
      for (Index y = 0; y < h && same; ++y)
        same = out.frame(f).middleRows((y + r.canvas.top) * out.width() + r.canvas.left, w) ==
               input.frame(f).middleRows(y * w, w);
    exact += same;
  }
  return {exact == 20, std::to_string(exact) + "/20 inputs bit-equal inside the input rectangle"};
}

Outcome coarse_to_fine(const ToyModel& model) {
  bool ok = true;
  std::ostringstream d;
  for (Index frames : {5, 16, 69}) {
    const auto plan = coarse_to_fine_plan(frames, {5, 3, 1});
    std::set<Index> done;
    for (const auto& pass : plan) {
      std::set<Index> produced;
      for (const auto& w : pass.windows)
        for (std::size_t i = 0; i < w.frames.size(); ++i) {
          ok = ok && (w.conditioning[i] == (done.count(w.frames[i]) > 0));
          produced.insert(w.frames[i]);
        }
      done.insert(produced.begin(), produced.end());
    }
    std::set<Index> last;
    for (const auto& w : plan.back().windows) last.insert(w.frames.begin(), w.frames.end());
    ok = ok && static_cast<Index>(last.size()) == frames;

    InferConfig cfg;
    cfg.canvas_size = 32;
    cfg.inference_steps = 4;
    cfg.seed = 41;
    cfg.allow_untrained = true;
    const OutpaintResult r =
        outpaint(testing::random_video(frames, 32, 16, 600 + frames), model.codec, model.denoiser, default_schedule(), cfg);
    Index kept = 0, total = 0;
    for (std::size_t p = 0; p + 1 < r.pass_generated.size(); ++p)
      for (Index f : r.pass_generated[p]) {
        ++total;
        kept += r.canvas_output.frame(f) == r.pass_canvases[p].frame(f);
      }
    ok = ok && kept == total;
    d << "T=" << frames << " passes " << plan.size() << " keyframes " << kept << "/" << total << "  ";
  }
  return {ok, d.str()};
}

// ---------------------------------------------------------------------------
// Directional experiment: same data, same initialisation, only the mask mode differs.

struct VideoScore {
  double masked_mse = 0;
  double bmse = 0;
};

std::vector<VideoScore> score_model(const DenoiserParams<float>& params, const CodecParams& codec,
                                    const std::vector<VideoTensor>& test) {
  std::vector<VideoScore> scores;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const EvalInput ei = crop_eval_input(test[i], 0.66);
    InferConfig cfg;
    cfg.seed = 900 + i;
    const VideoTensor out = quantize8(outpaint(ei.input, codec, params, default_schedule(), cfg).output);
    scores.push_back({masked_mse(test[i], out, ei.mask), bmse(out)});
  }
  return scores;
}

Outcome directional_replication() {
  const auto start = Clock::now();
  SynthConfig sc;
  sc.videos = 48;
  sc.seed = 71;
  const auto videos = videos_of(synth_videos(sc));
  const std::vector<VideoTensor> train_set(videos.begin(), videos.begin() + 32);
  std::vector<VideoTensor> test_set;
  for (auto it = videos.begin() + 32; it != videos.end(); ++it) test_set.push_back(make_static(*it));
  const CodecParams codec = train_codec(train_set, CodecConfig{});

  DenoiserConfig dc;
  dc.latent_channels = codec.latent_channels;
  dc.base_channels = dc.context_channels = dc.attention_channels = 16;
  dc.context_pool = 2;

  double train_seconds = 0;
  std::vector<VideoScore> base_all, plus_all;
  std::ostringstream d;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng init_rng(1000 + seed);
    const DenoiserParams<float> init = init_denoiser<float>(dc, init_rng);
    std::map<MaskMode, std::vector<VideoScore>> scores;
    for (MaskMode mode : {MaskMode::M3DDM, MaskMode::M3DDMPlus}) {
      TrainConfig tc;
      tc.mask_mode = mode;
      tc.learning_rate = 3e-4;
      tc.steps = 4000;
      tc.seed = seed;
      TrainState state = make_train_state(init);
      const auto t0 = Clock::now();
      train(train_set, codec, state, default_schedule(), tc);
      train_seconds += seconds_since(t0);
      scores[mode] = score_model(state.params, codec, test_set);
    }
    int mse_wins = 0, bmse_wins = 0;
    for (std::size_t i = 0; i < test_set.size(); ++i) {
      mse_wins += scores[MaskMode::M3DDMPlus][i].masked_mse < scores[MaskMode::M3DDM][i].masked_mse;
      bmse_wins += scores[MaskMode::M3DDMPlus][i].bmse > scores[MaskMode::M3DDM][i].bmse;
    }
    d << "seed " << seed << ": masked_mse wins " << mse_wins << "/16, bmse wins " << bmse_wins << "/16; ";
    base_all.insert(base_all.end(), scores[MaskMode::M3DDM].begin(), scores[MaskMode::M3DDM].end());
    plus_all.insert(plus_all.end(), scores[MaskMode::M3DDMPlus].begin(), scores[MaskMode::M3DDMPlus].end());
  }

  // Pooled over the three seeds: per-video win rate and aggregate means.
  const std::size_t n = base_all.size();
  int mse_wins = 0, bmse_wins = 0;
  double base_mse = 0, plus_mse = 0, base_b = 0, plus_b = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mse_wins += plus_all[i].masked_mse < base_all[i].masked_mse;
    bmse_wins += plus_all[i].bmse > base_all[i].bmse;
    base_mse += base_all[i].masked_mse / n;
    plus_mse += plus_all[i].masked_mse / n;
    base_b += base_all[i].bmse / n;
    plus_b += plus_all[i].bmse / n;
  }
  const bool mse_ok = mse_wins >= 0.6 * n && plus_mse < base_mse;
  const bool bmse_ok = bmse_wins >= 0.6 * n && plus_b > base_b;
  d << std::setprecision(5) << "pooled masked_mse m3ddm " << base_mse << " vs m3ddm-plus " << plus_mse << " (wins "
    << mse_wins << "/" << n << "), bmse m3ddm " << base_b << " vs m3ddm-plus " << plus_b << " (wins " << bmse_wins
    << "/" << n << "); training " << std::setprecision(4) << train_seconds / 60 << " min, total "
    << seconds_since(start) / 60 << " min";
  return {mse_ok && bmse_ok && train_seconds <= 30 * 60, d.str()};
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> artifact_bytes(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    // Run manifests record wall-clock time; everything else must match byte for byte.
    if (name == "run_manifest.json" || name.size() > 9 && name.ends_with(".run.json")) continue;
    std::ifstream is(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    files[fs::relative(e.path(), dir).string()] = ss.str();
  }
  return files;
}

bool end_to_end(const fs::path& root) {
  std::ostringstream sink;
  auto run = [&](std::vector<std::string> args) { return run_cli(args, sink, sink) == kExitOk; };
  fs::create_directories(root);
  std::ofstream(root / "synth.cfg") << "videos = 4\ntest_videos = 2\nframes = 8\nheight = 32\nwidth = 32\nseed = 5\n";
  std::ofstream(root / "train.cfg") << "steps = 20\nlearning_rate = 1e-3\nbase_channels = 8\ncontext_channels = 8\n"
                                       "attention_channels = 8\ntime_features = 8\nclip_length = 8\nglobal_frames = 8\n"
                                       "log_every = 0\nseed = 6\n";
  const std::string r = root.string();
  bool ok = run({"synth", "--config", r + "/synth.cfg", "--out", r + "/data"}) &&
            run({"train", "--config", r + "/train.cfg", "--mask-mode", "m3ddm-plus", "--data", r + "/data", "--out",
                 r + "/ck/model.bin"}) &&
            run({"crop-input", "--in", r + "/data/test", "--mask-ratio", "0.66", "--out", r + "/inputs"});
  for (const char* video : {"0000", "0001"})
    ok = ok && run({"outpaint", "--checkpoint", r + "/ck/model.bin", "--input", r + "/inputs/" + video, "--out",
                    r + "/gen/" + video, "--seed", "7", "--inference-steps", "10"});
  return ok && run({"eval", "--gt", r + "/data/test", "--gen", r + "/gen", "--mask-ratio", "0.66", "--report",
                    r + "/report.json", "--model", "m3ddm-plus"});
}

Outcome end_to_end_determinism() {
  const fs::path a = testing::scratch_dir("acceptance_e2e_a"), b = testing::scratch_dir("acceptance_e2e_b");
  if (!end_to_end(a) || !end_to_end(b)) return {false, "pipeline run failed"};
  const auto fa = artifact_bytes(a), fb = artifact_bytes(b);
  return {fa == fb, std::to_string(fa.size()) + " artifacts compared, " + (fa == fb ? "identical" : "differ")};
}

}  // namespace
}  // namespace m3ddm

int main() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  using namespace m3ddm;
  const ToyModel toy = toy_model();
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"mask distribution", mask_distribution},
      {"temporal mask consistency", temporal_consistency},
      {"diffusion algebra", diffusion_algebra},
      {"gradient correctness", gradient_correctness},
      {"metric oracles", metric_oracles},
      {"known-region invariance", [&] { return known_region_invariance(toy); }},
      {"directional replication", directional_replication},
      {"coarse-to-fine plan", [&] { return coarse_to_fine(toy); }},
      {"end-to-end determinism", end_to_end_determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << "criterion " << i + 1 << " (" << criteria[i].first << "): " << (o.pass ? "PASS" : "FAIL") << "  "
              << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
