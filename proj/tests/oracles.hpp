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

// Scalar-loop reference implementations shared by the metric tests and the acceptance run.

#pragma once

#include <cmath>
#include <vector>

#include "m3ddm/core.hpp"

namespace m3ddm::testing {

inline double oracle_mse(const VideoTensor& a, const VideoTensor& b) {
  double acc = 0;
  for (Index t = 0; t < a.frames(); ++t)
    for (Index y = 0; y < a.height(); ++y)
      for (Index x = 0; x < a.width(); ++x)
        for (Index c = 0; c < a.channels(); ++c) {
          const double d = a(t, y, x, c) - b(t, y, x, c);
          acc += d * d;
        }
  return acc / static_cast<double>(a.frames() * a.height() * a.width() * a.channels());
}

inline double oracle_ssim(const VideoTensor& a, const VideoTensor& b, Index window, double sigma) {
  const Index r = window / 2;
  std::vector<double> g(window);
  double gsum = 0;
  for (Index i = 0; i < window; ++i) gsum += g[i] = std::exp(-double((i - r) * (i - r)) / (2 * sigma * sigma));
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0;
  for (Index t = 0; t < a.frames(); ++t)
    for (Index c = 0; c < a.channels(); ++c) {
      double sum = 0;
      Index count = 0;
      for (Index y0 = 0; y0 + window <= a.height(); ++y0)
        for (Index x0 = 0; x0 + window <= a.width(); ++x0) {
          double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
          for (Index i = 0; i < window; ++i)
            for (Index j = 0; j < window; ++j) {
              const double w = g[i] * g[j] / (gsum * gsum);
              const double p = a(t, y0 + i, x0 + j, c), q = b(t, y0 + i, x0 + j, c);
              mx += w * p;
              my += w * q;
              xx += w * p * p;
              yy += w * q * q;
              xy += w * p * q;
            }
          const double vx = xx - mx * mx, vy = yy - my * my, cov = xy - mx * my;
          sum += (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
          ++count;
        }
      total += sum / static_cast<double>(count);
    }
  return total / static_cast<double>(a.frames() * a.channels());
}

}  // namespace m3ddm::testing
