#pragma once

#include <string>
#include <vector>

#include "mghf/errors.hpp"
#include "mghf/rng.hpp"
#include "mghf/tensor.hpp"

namespace mghf {

// 2-D convolution parameters. Weights are [out][in][kh][kw] row-major,
// biases one per output channel. Out-of-bounds reads are zero padding.
struct Conv2d {
  int out_ch = 0;
  int in_ch = 0;
  int kh = 0;
  int kw = 0;
  int padding = 0;
  std::vector<double> w;
  std::vector<double> b;

  Conv2d() = default;

  Conv2d(int out_channels, int in_channels, int kernel_h, int kernel_w, int pad)
      : out_ch(out_channels), in_ch(in_channels), kh(kernel_h), kw(kernel_w), padding(pad) {
    if (out_ch <= 0 || in_ch <= 0 || kh <= 0 || kw <= 0)
      throw ShapeError("Conv2d dims must be positive");
    if (kh % 2 == 0 || kw % 2 == 0)
      throw ShapeError("Conv2d kernel sides must be odd, got " + std::to_string(kh) + "x" +
                       std::to_string(kw));
    if (padding < 0) throw ShapeError("Conv2d padding must be >= 0");
    w.assign(static_cast<std::size_t>(out_ch) * in_ch * kh * kw, 0.0);
    b.assign(static_cast<std::size_t>(out_ch), 0.0);
  }

  double& wat(int o, int i, int y, int x) {
    return w[((static_cast<std::size_t>(o) * in_ch + i) * kh + y) * kw + x];
  }
  double wat(int o, int i, int y, int x) const {
    return w[((static_cast<std::size_t>(o) * in_ch + i) * kh + y) * kw + x];
  }

  std::size_t param_count() const { return w.size() + b.size(); }

  void randomize(Rng& rng, double sd) {
    for (double& v : w) v = rng.normal(0.0, sd);
    for (double& v : b) v = rng.normal(0.0, sd);
  }
};

inline Tensor conv2d(const Tensor& input, const Conv2d& k) {
  if (input.channels != k.in_ch)
    throw ShapeError("conv2d: input has " + std::to_string(input.channels) +
                     " channels, kernel expects " + std::to_string(k.in_ch));
  const int oh = input.height + 2 * k.padding - (k.kh - 1);
  const int ow = input.width + 2 * k.padding - (k.kw - 1);
  if (oh <= 0 || ow <= 0)
    throw ShapeError("conv2d: kernel " + std::to_string(k.kh) + "x" + std::to_string(k.kw) +
                     " larger than padded input " + input.shape_str());

  Tensor out(k.out_ch, oh, ow);
  for (int o = 0; o < k.out_ch; ++o) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = k.b[o];
        for (int i = 0; i < k.in_ch; ++i) {
          for (int dy = 0; dy < k.kh; ++dy) {
            const int sy = y + dy - k.padding;
            if (sy < 0 || sy >= input.height) continue;
            for (int dx = 0; dx < k.kw; ++dx) {
              const int sx = x + dx - k.padding;
              if (sx < 0 || sx >= input.width) continue;
              acc += k.wat(o, i, dy, dx) * input.at(i, sy, sx);
            }
          }
        }
        out.at(o, y, x) = acc;
      }
    }
  }
  return out;
}

/// Gradient of sum(cotangent * conv2d(input, k)) with respect to the input.
inline Tensor conv2d_backward_input(const Tensor& input, const Conv2d& k, const Tensor& g_out) {
  Tensor g_in(input.channels, input.height, input.width);
  for (int o = 0; o < k.out_ch; ++o) {
    for (int y = 0; y < g_out.height; ++y) {
      for (int x = 0; x < g_out.width; ++x) {
        const double g = g_out.at(o, y, x);
        if (g == 0.0) continue;
        for (int i = 0; i < k.in_ch; ++i) {
          for (int dy = 0; dy < k.kh; ++dy) {
            const int sy = y + dy - k.padding;
            if (sy < 0 || sy >= input.height) continue;
            for (int dx = 0; dx < k.kw; ++dx) {
              const int sx = x + dx - k.padding;
              if (sx < 0 || sx >= input.width) continue;
              g_in.at(i, sy, sx) += g * k.wat(o, i, dy, dx);
            }
          }
        }
      }
    }
  }
  return g_in;
}

/// Accumulates weight/bias gradients into `g_k` (same shape as `k`).
inline void conv2d_backward_params(const Tensor& input, const Conv2d& k, const Tensor& g_out,
                                   Conv2d& g_k) {
  for (int o = 0; o < k.out_ch; ++o) {
    for (int y = 0; y < g_out.height; ++y) {
      for (int x = 0; x < g_out.width; ++x) {
        const double g = g_out.at(o, y, x);
        if (g == 0.0) continue;
        g_k.b[o] += g;
        for (int i = 0; i < k.in_ch; ++i) {
          for (int dy = 0; dy < k.kh; ++dy) {
            const int sy = y + dy - k.padding;
            if (sy < 0 || sy >= input.height) continue;
            for (int dx = 0; dx < k.kw; ++dx) {
              const int sx = x + dx - k.padding;
              if (sx < 0 || sx >= input.width) continue;
              g_k.wat(o, i, dy, dx) += g * input.at(i, sy, sx);
            }
          }
        }
      }
    }
  }
}

inline Tensor leaky_relu(const Tensor& x, double slope) {
  if (slope < 0.0 || slope >= 1.0)
    throw ArgumentError("leaky_relu: slope must be in [0, 1), got " + std::to_string(slope));
  Tensor out = x;
  for (double& v : out.data) v = v > 0.0 ? v : slope * v;
  return out;
}

/// Backward through leaky_relu given the pre-activation values.
inline Tensor leaky_relu_backward(const Tensor& pre, const Tensor& g_out, double slope) {
  check_same_shape(pre, g_out, "leaky_relu_backward");
  Tensor g = g_out;
  for (std::size_t i = 0; i < g.data.size(); ++i)
    if (pre.data[i] <= 0.0) g.data[i] *= slope;
  return g;
}

}  // namespace mghf
