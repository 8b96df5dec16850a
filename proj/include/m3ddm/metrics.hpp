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

#include <filesystem>
#include <string>
#include <vector>

#include "m3ddm/core.hpp"

namespace m3ddm {

/// PSNR ceiling; identical inputs report exactly this value.
inline constexpr double kPsnrReportCap = 100.0;
inline constexpr double kDefaultBlurSigma = 1.5;

double mse(const VideoTensor& a, const VideoTensor& b);
/// MSE restricted to pixels where mask == 1 (all channels). Zero when the mask is empty.
double masked_mse(const VideoTensor& a, const VideoTensor& b, const MaskVideo& mask);
/// 10 log10(peak^2 / mse), capped at kPsnrReportCap.
double psnr_from_mse(double mse_value, double peak = 1.0);
double psnr(const VideoTensor& a, const VideoTensor& b, double peak = 1.0);

struct SsimOptions {
  Index window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;
};

/// Normalised 1-D Gaussian taps exp(-(i-r)^2 / 2 sigma^2), i = 0..2r.
Vector<double> gaussian_taps(Index radius, double sigma);

/// Gaussian-windowed SSIM over every fully contained window, averaged over
/// windows, channels and frames. Throws ShapeError if a frame is smaller than the window.
double ssim(const VideoTensor& a, const VideoTensor& b, const SsimOptions& options = {});

/// Separable per-frame Gaussian blur, radius ceil(3 sigma), half-sample symmetric
/// reflection at the borders.
VideoTensor gaussian_blur(const VideoTensor& video, double sigma);

/// mse(blur(gen), gen); larger means sharper.
double bmse(const VideoTensor& gen, double sigma = kDefaultBlurSigma);

struct VideoMetrics {
  std::string name;
  double mse = 0.0;
  double psnr = 0.0;  // capped at kPsnrReportCap
  double ssim = 0.0;
  double bmse = 0.0;
  double masked_mse = 0.0;
  double masked_psnr = 0.0;  // capped at kPsnrReportCap
  bool operator==(const VideoMetrics&) const = default;
};

struct MetricsReport {
  std::string dataset;
  std::string model;
  double mask_ratio = 0.0;
  std::vector<VideoMetrics> videos;

  /// Element-wise mean over videos (name "mean").
  VideoMetrics mean() const;
  bool operator==(const MetricsReport&) const = default;
};

struct EvalConfig {
  double blur_sigma = kDefaultBlurSigma;
  SsimOptions ssim;
  std::string video_name = "video";
  std::string dataset = "synthetic";
  std::string model;
  double mask_ratio = 0.0;
};

VideoMetrics evaluate_video(const VideoTensor& gt, const VideoTensor& gen, const MaskVideo& mask,
                            const EvalConfig& config);
/// Single-video report; merge with append_report for datasets.
MetricsReport evaluate(const VideoTensor& gt, const VideoTensor& gen, const MaskVideo& mask, const EvalConfig& config);

std::string report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const std::string& text);
void write_report(const MetricsReport& report, const std::filesystem::path& path);
MetricsReport read_report(const std::filesystem::path& path);
/// Delimited aggregate row(s): header plus one line for the mean.
std::string report_table(const MetricsReport& report);

}  // namespace m3ddm
