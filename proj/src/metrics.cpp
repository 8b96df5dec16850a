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

#include "m3ddm/metrics.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace m3ddm {

double mse(const VideoTensor& a, const VideoTensor& b) {
  require_same_shape(a.shape(), b.shape(), "mse");
  const Index n = a.shape().size();
  return n ? (a.matrix() - b.matrix()).squaredNorm() / static_cast<double>(n) : 0.0;
}

double masked_mse(const VideoTensor& a, const VideoTensor& b, const MaskVideo& mask) {
  require_same_shape(a.shape(), b.shape(), "masked_mse");
  validate_pair(a, mask);
  const auto sel = mask.matrix().col(0).array();
  const double count = sel.sum() * static_cast<double>(a.channels());
  if (count == 0.0) return 0.0;
  const double sum = ((a.matrix() - b.matrix()).array().square().rowwise().sum() * sel).sum();
  return sum / count;
}

double psnr_from_mse(double mse_value, double peak) {
  if (mse_value <= 0.0) return kPsnrReportCap;
  return 10.0 * std::log10(peak * peak / mse_value);
}

double psnr(const VideoTensor& a, const VideoTensor& b, double peak) { return psnr_from_mse(mse(a, b), peak); }

Vector<double> gaussian_taps(Index radius, double sigma) {
  Vector<double> taps(2 * radius + 1);
  for (Index i = 0; i <= 2 * radius; ++i) {
    const double d = static_cast<double>(i - radius);
    taps(i) = std::exp(-d * d / (2.0 * sigma * sigma));
  }
  return taps / taps.sum();
}

namespace {

using Image = Eigen::ArrayXXd;  // (H, W)

Image channel_plane(const VideoTensor& v, Index t, Index c) {
  Image img(v.height(), v.width());
  for (Index y = 0; y < v.height(); ++y)
    for (Index x = 0; x < v.width(); ++x) img(y, x) = v(t, y, x, c);
  return img;
}

// Correlates with taps over fully contained windows: (H - k + 1, W - k + 1).
Image filter_valid(const Image& img, const Vector<double>& taps) {
  const Index k = taps.size();
  const Index oh = img.rows() - k + 1, ow = img.cols() - k + 1;
  Image horiz = Image::Zero(img.rows(), ow);
  for (Index i = 0; i < k; ++i) horiz += taps(i) * img.middleCols(i, ow);
  Image out = Image::Zero(oh, ow);
  for (Index i = 0; i < k; ++i) out += taps(i) * horiz.middleRows(i, oh);
  return out;
}

Index reflect(Index i, Index n) {
  const Index period = 2 * n;
  Index m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

Image filter_reflect(const Image& img, const Vector<double>& taps) {
  const Index r = taps.size() / 2, H = img.rows(), W = img.cols();
  Image horiz = Image::Zero(H, W);
  for (Index x = 0; x < W; ++x)
    for (Index i = -r; i <= r; ++i) horiz.col(x) += taps(i + r) * img.col(reflect(x + i, W));
  Image out = Image::Zero(H, W);
  for (Index y = 0; y < H; ++y)
    for (Index i = -r; i <= r; ++i) out.row(y) += taps(i + r) * horiz.row(reflect(y + i, H));
  return out;
}

}  // namespace

double ssim(const VideoTensor& a, const VideoTensor& b, const SsimOptions& o) {
  require_same_shape(a.shape(), b.shape(), "ssim");
  if (o.window < 1 || o.window % 2 == 0) throw ValueError("ssim window must be a positive odd size");
  if (a.height() < o.window || a.width() < o.window)
    throw ShapeError(a.height() < o.window ? "height" : "width",
                     "ssim: frame " + a.shape().str() + " smaller than the " + std::to_string(o.window) + " window");
  const Vector<double> taps = gaussian_taps(o.window / 2, o.sigma);
  const double c1 = (o.k1 * o.peak) * (o.k1 * o.peak);
  const double c2 = (o.k2 * o.peak) * (o.k2 * o.peak);
  double total = 0.0;
  for (Index t = 0; t < a.frames(); ++t)
    for (Index c = 0; c < a.channels(); ++c) {
      const Image x = channel_plane(a, t, c), y = channel_plane(b, t, c);
      const Image mx = filter_valid(x, taps), my = filter_valid(y, taps);
      const Image sxx = filter_valid(x * x, taps) - mx * mx;
      const Image syy = filter_valid(y * y, taps) - my * my;
      const Image sxy = filter_valid(x * y, taps) - mx * my;
      const Image map = ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
      total += map.mean();
    }
  return total / static_cast<double>(a.frames() * a.channels());
}

VideoTensor gaussian_blur(const VideoTensor& video, double sigma) {
  if (!(sigma > 0.0)) throw ValueError("blur sigma must be positive");
  const Vector<double> taps = gaussian_taps(static_cast<Index>(std::ceil(3.0 * sigma)), sigma);
  VideoTensor out(video.shape());
  for (Index t = 0; t < video.frames(); ++t)
    for (Index c = 0; c < video.channels(); ++c) {
      const Image blurred = filter_reflect(channel_plane(video, t, c), taps);
      for (Index y = 0; y < video.height(); ++y)
        for (Index x = 0; x < video.width(); ++x) out(t, y, x, c) = blurred(y, x);
    }
  return out;
}

double bmse(const VideoTensor& gen, double sigma) { return mse(gaussian_blur(gen, sigma), gen); }

VideoMetrics MetricsReport::mean() const {
  VideoMetrics m;
  m.name = "mean";
  if (videos.empty()) return m;
  for (const auto& v : videos) {
    m.mse += v.mse;
    m.psnr += v.psnr;
    m.ssim += v.ssim;
    m.bmse += v.bmse;
    m.masked_mse += v.masked_mse;
    m.masked_psnr += v.masked_psnr;
  }
  const double n = static_cast<double>(videos.size());
  m.mse /= n;
  m.psnr /= n;
  m.ssim /= n;
  m.bmse /= n;
  m.masked_mse /= n;
  m.masked_psnr /= n;
  return m;
}

VideoMetrics evaluate_video(const VideoTensor& gt, const VideoTensor& gen, const MaskVideo& mask,
                            const EvalConfig& config) {
  require_same_shape(gt.shape(), gen.shape(), "evaluate");
  validate_pair(gt, mask);
  VideoMetrics m;
  m.name = config.video_name;
  m.mse = mse(gt, gen);
  m.psnr = psnr_from_mse(m.mse);
  m.ssim = ssim(gt, gen, config.ssim);
  m.bmse = bmse(gen, config.blur_sigma);
  m.masked_mse = masked_mse(gt, gen, mask);
  m.masked_psnr = psnr_from_mse(m.masked_mse);
  return m;
}

MetricsReport evaluate(const VideoTensor& gt, const VideoTensor& gen, const MaskVideo& mask,
                       const EvalConfig& config) {
  MetricsReport r;
  r.dataset = config.dataset;
  r.model = config.model;
  r.mask_ratio = config.mask_ratio;
  r.videos.push_back(evaluate_video(gt, gen, mask, config));
  return r;
}

namespace {

nlohmann::json to_json(const VideoMetrics& m) {
  return {{"name", m.name},   {"mse", m.mse},
          {"psnr", m.psnr},   {"ssim", m.ssim},
          {"bmse", m.bmse},   {"masked_mse", m.masked_mse},
          {"masked_psnr", m.masked_psnr}};
}

VideoMetrics from_json(const nlohmann::json& j) {
  VideoMetrics m;
  m.name = j.at("name").get<std::string>();
  m.mse = j.at("mse").get<double>();
  m.psnr = j.at("psnr").get<double>();
  m.ssim = j.at("ssim").get<double>();
  m.bmse = j.at("bmse").get<double>();
  m.masked_mse = j.at("masked_mse").get<double>();
  m.masked_psnr = j.at("masked_psnr").get<double>();
  return m;
}

}  // namespace

std::string report_to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["format"] = "m3ddm-metrics-report";
  j["version"] = 1;
  j["dataset"] = report.dataset;
  j["model"] = report.model;
  j["mask_ratio"] = report.mask_ratio;
  j["videos"] = nlohmann::json::array();
  for (const auto& v : report.videos) j["videos"].push_back(to_json(v));
  j["mean"] = to_json(report.mean());
  return j.dump(2);
}

MetricsReport report_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format") != "m3ddm-metrics-report") throw IoError("not a metrics report");
    MetricsReport r;
    r.dataset = j.at("dataset").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.mask_ratio = j.at("mask_ratio").get<double>();
    for (const auto& v : j.at("videos")) r.videos.push_back(from_json(v));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed metrics report: ") + e.what());
  }
}

void write_report(const MetricsReport& report, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw IoError("cannot write report: " + path.string());
  os << report_to_json(report) << "\n";
}

MetricsReport read_report(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read report: " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return report_from_json(ss.str());
}

std::string report_table(const MetricsReport& report) {
  const VideoMetrics m = report.mean();
  std::ostringstream os;
  os.precision(6);
  os << "dataset,model,mask_ratio,videos,mse,psnr,ssim,bmse,masked_mse,masked_psnr\n";
  os << report.dataset << "," << report.model << "," << report.mask_ratio << "," << report.videos.size() << ","
     << m.mse << "," << m.psnr << "," << m.ssim << "," << m.bmse << "," << m.masked_mse << "," << m.masked_psnr
     << "\n";
  return os.str();
}

}  // namespace m3ddm
