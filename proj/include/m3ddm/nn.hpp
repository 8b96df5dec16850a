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

// Differentiable building blocks over Volume<Scalar>. Every forward primitive has a
// matching *_backward that maps the output gradient to the input gradient.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "m3ddm/core.hpp"

namespace m3ddm::nn {

/// Odd kernel extents along (time, height, width); zero "same" padding.
struct Kernel {
  Index t = 1;
  Index h = 3;
  Index w = 3;
  Index taps() const { return t * h * w; }
};

inline constexpr Kernel kSpatial3{1, 3, 3};
inline constexpr Kernel kTemporal3{3, 1, 1};

/// Unfolds each site's neighborhood into a row: (T*H*W) x (taps * C).
/// Tap order is (dt, dy, dx) row-major, channels innermost.
template <typename S>
RowMatrix<S> im2col(const Volume<S>& x, const Kernel& k) {
  const Index T = x.frames(), H = x.height(), W = x.width(), C = x.channels();
  const Index rt = k.t / 2, ry = k.h / 2, rx = k.w / 2;
  RowMatrix<S> cols = RowMatrix<S>::Zero(x.shape().rows(), k.taps() * C);
  for (Index t = 0; t < T; ++t)
    for (Index y = 0; y < H; ++y)
      for (Index xx = 0; xx < W; ++xx) {
        const Index row = x.site(t, y, xx);
        Index tap = 0;
        for (Index dt = -rt; dt <= rt; ++dt)
          for (Index dy = -ry; dy <= ry; ++dy)
            for (Index dx = -rx; dx <= rx; ++dx, ++tap) {
              const Index st = t + dt, sy = y + dy, sx = xx + dx;
              if (st < 0 || st >= T || sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
              cols.row(row).segment(tap * C, C) = x.matrix().row(x.site(st, sy, sx));
            }
      }
  return cols;
}

/// Adjoint of im2col: scatters-and-adds neighborhood rows back onto sites.
template <typename S>
Volume<S> col2im(const RowMatrix<S>& cols, const Shape& shape, const Kernel& k) {
  const Index T = shape.frames, H = shape.height, W = shape.width, C = shape.channels;
  const Index rt = k.t / 2, ry = k.h / 2, rx = k.w / 2;
  Volume<S> x(shape);
  for (Index t = 0; t < T; ++t)
    for (Index y = 0; y < H; ++y)
      for (Index xx = 0; xx < W; ++xx) {
        const Index row = x.site(t, y, xx);
        Index tap = 0;
        for (Index dt = -rt; dt <= rt; ++dt)
          for (Index dy = -ry; dy <= ry; ++dy)
            for (Index dx = -rx; dx <= rx; ++dx, ++tap) {
              const Index st = t + dt, sy = y + dy, sx = xx + dx;
              if (st < 0 || st >= T || sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
              x.matrix().row(x.site(st, sy, sx)) += cols.row(row).segment(tap * C, C);
            }
      }
  return x;
}

template <typename S>
struct ConvCache {
  RowMatrix<S> cols;
  Shape input_shape;
};

/// y = im2col(x) * weight + bias. `weight` is (taps * Cin) x Cout.
template <typename S, typename WeightT, typename BiasT>
Volume<S> conv(const Volume<S>& x, const Kernel& k, const WeightT& weight, const BiasT& bias,
               ConvCache<S>& cache) {
  cache.cols = im2col(x, k);
  cache.input_shape = x.shape();
  Shape out = x.shape();
  out.channels = weight.cols();
  RowMatrix<S> y(out.rows(), out.channels);
  y.noalias() = cache.cols * weight;
  y.rowwise() += bias;
  return Volume<S>(out, std::move(y));
}

/// Accumulates weight/bias gradients and returns the input gradient.
template <typename S, typename WeightT, typename GradW, typename GradB>
Volume<S> conv_backward(const Volume<S>& grad_out, const Kernel& k, const WeightT& weight,
                        const ConvCache<S>& cache, GradW&& grad_weight, GradB&& grad_bias,
                        bool need_input_grad = true) {
  grad_weight.noalias() += cache.cols.transpose() * grad_out.matrix();
  grad_bias += grad_out.matrix().colwise().sum();
  if (!need_input_grad) return {};
  RowMatrix<S> dcols(cache.cols.rows(), cache.cols.cols());
  dcols.noalias() = grad_out.matrix() * weight.transpose();
  return col2im(dcols, cache.input_shape, k);
}

template <typename S>
S sigmoid(S v) {
  return S(1) / (S(1) + std::exp(-v));
}

template <typename S>
Volume<S> silu(const Volume<S>& x) {
  Volume<S> y = x;
  y.matrix() = x.matrix().unaryExpr([](S v) { return v * sigmoid(v); });
  return y;
}

/// d/dx [x * sigmoid(x)] applied to the incoming gradient; `x` is the pre-activation.
template <typename S>
Volume<S> silu_backward(const Volume<S>& grad_out, const Volume<S>& x) {
  Volume<S> g = grad_out;
  g.matrix().array() *= x.matrix().unaryExpr([](S v) {
    const S s = sigmoid(v);
    return s * (S(1) + v * (S(1) - s));
  }).array();
  return g;
}

/// 2x2 spatial average pooling; H and W must be even.
template <typename S>
Volume<S> avgpool2(const Volume<S>& x) {
  if (x.height() % 2 || x.width() % 2)
    throw ShapeError("height", "avgpool2 needs even spatial extents, got " + x.shape().str());
  Volume<S> y(x.frames(), x.height() / 2, x.width() / 2, x.channels());
  for (Index t = 0; t < y.frames(); ++t)
    for (Index i = 0; i < y.height(); ++i)
      for (Index j = 0; j < y.width(); ++j)
        y.matrix().row(y.site(t, i, j)) =
            S(0.25) * (x.matrix().row(x.site(t, 2 * i, 2 * j)) + x.matrix().row(x.site(t, 2 * i, 2 * j + 1)) +
                       x.matrix().row(x.site(t, 2 * i + 1, 2 * j)) +
                       x.matrix().row(x.site(t, 2 * i + 1, 2 * j + 1)));
  return y;
}

template <typename S>
Volume<S> avgpool2_backward(const Volume<S>& grad_out) {
  Volume<S> g(grad_out.frames(), grad_out.height() * 2, grad_out.width() * 2, grad_out.channels());
  for (Index t = 0; t < g.frames(); ++t)
    for (Index y = 0; y < g.height(); ++y)
      for (Index x = 0; x < g.width(); ++x)
        g.matrix().row(g.site(t, y, x)) = S(0.25) * grad_out.matrix().row(grad_out.site(t, y / 2, x / 2));
  return g;
}

/// Nearest-neighbour 2x spatial upsampling.
template <typename S>
Volume<S> upsample2(const Volume<S>& x) {
  Volume<S> y(x.frames(), x.height() * 2, x.width() * 2, x.channels());
  for (Index t = 0; t < y.frames(); ++t)
    for (Index i = 0; i < y.height(); ++i)
      for (Index j = 0; j < y.width(); ++j)
        y.matrix().row(y.site(t, i, j)) = x.matrix().row(x.site(t, i / 2, j / 2));
  return y;
}

template <typename S>
Volume<S> upsample2_backward(const Volume<S>& grad_out) {
  Volume<S> g(grad_out.frames(), grad_out.height() / 2, grad_out.width() / 2, grad_out.channels());
  for (Index t = 0; t < grad_out.frames(); ++t)
    for (Index y = 0; y < grad_out.height(); ++y)
      for (Index x = 0; x < grad_out.width(); ++x)
        g.matrix().row(g.site(t, y / 2, x / 2)) += grad_out.matrix().row(grad_out.site(t, y, x));
  return g;
}

/// Channel concatenation of volumes sharing (T, H, W).
template <typename S>
Volume<S> concat_channels(const std::vector<const Volume<S>*>& parts) {
  Shape out = parts.front()->shape();
  out.channels = 0;
  for (const auto* p : parts) {
    require_same_shape(p->shape(), parts.front()->shape(), "concat_channels", false);
    out.channels += p->channels();
  }
  Volume<S> y(out);
  Index offset = 0;
  for (const auto* p : parts) {
    y.matrix().middleCols(offset, p->channels()) = p->matrix();
    offset += p->channels();
  }
  return y;
}

/// Row-wise numerically stable softmax.
template <typename S>
RowMatrix<S> softmax_rows(const RowMatrix<S>& logits) {
  const Vector<S> row_max = logits.rowwise().maxCoeff();
  RowMatrix<S> p = (logits.colwise() - row_max).array().exp().matrix();
  const Vector<S> sums = p.rowwise().sum();
  p.array().colwise() /= sums.array();
  return p;
}

/// Fixed sinusoidal features of an integer timestep, `dims` even.
template <typename S>
RowVector<S> timestep_features(int timestep, Index dims) {
  RowVector<S> f(dims);
  const Index half = dims / 2;
  for (Index k = 0; k < half; ++k) {
    const double freq = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(half));
    f(k) = static_cast<S>(std::sin(timestep * freq));
    f(half + k) = static_cast<S>(std::cos(timestep * freq));
  }
  return f;
}

}  // namespace m3ddm::nn
