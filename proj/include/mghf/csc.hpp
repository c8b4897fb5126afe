#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "mghf/errors.hpp"
#include "mghf/tensor.hpp"

namespace mghf {

// Content-style consistency over the weighted selected maps. All gradients
// are with respect to the S side; G is the fixed ground-truth reference.

struct CscWeights {
  double beta1 = 0.1333;
  double beta2 = 1.0;
  double beta3 = 0.1333;
};

struct LossWithGrad {
  double loss = 0.0;
  FeatureStack grad_sw;
};

/// Mean over all maps and pixels of (g - s)^2; grad = 2(s - g) / count.
inline LossWithGrad mse_content(const FeatureStack& gw, const FeatureStack& sw) {
  check_aligned(gw, sw, "mse_content");
  LossWithGrad r;
  std::size_t count = 0;
  for (const auto& m : gw) count += m.size();
  r.grad_sw.reserve(sw.size());
  for (std::size_t i = 0; i < gw.size(); ++i) {
    Tensor grad(sw[i].channels, sw[i].height, sw[i].width);
    for (std::size_t p = 0; p < grad.size(); ++p) {
      const double d = gw[i].data[p] - sw[i].data[p];
      r.loss += d * d;
      grad.data[p] = -2.0 * d / static_cast<double>(count);
    }
    r.grad_sw.push_back(std::move(grad));
  }
  r.loss /= static_cast<double>(count);
  return r;
}

/// Treats the 1xHxW map as an HxW matrix A and returns A * A^T / (H*W),
/// flattened row-major HxH.
inline std::vector<double> gram(const Tensor& map) {
  const int h = map.height, w = map.width;
  std::vector<double> out(static_cast<std::size_t>(h) * h, 0.0);
  const double norm = 1.0 / (static_cast<double>(h) * w);
  for (int a = 0; a < h; ++a)
    for (int b = 0; b < h; ++b) {
      double acc = 0.0;
      for (int x = 0; x < w; ++x) acc += map.at(0, a, x) * map.at(0, b, x);
      out[static_cast<std::size_t>(a) * h + b] = acc * norm;
    }
  return out;
}

/// (1/M) sum_i ||Gram(g_i) - Gram(s_i)||_F^2. Gradient through A*A^T:
/// with D = Gram(s) - Gram(g) (symmetric), d/dS = (4 / (H*W)) * D * S.
inline LossWithGrad gram_loss(const FeatureStack& gw, const FeatureStack& sw) {
  check_aligned(gw, sw, "gram_loss");
  LossWithGrad r;
  const double m_count = static_cast<double>(gw.size());
  r.grad_sw.reserve(sw.size());
  for (std::size_t i = 0; i < gw.size(); ++i) {
    const int h = sw[i].height, w = sw[i].width;
    const std::vector<double> gg = gram(gw[i]);
    const std::vector<double> gs = gram(sw[i]);
    std::vector<double> d(gg.size());
    double frob2 = 0.0;
    for (std::size_t p = 0; p < d.size(); ++p) {
      d[p] = gs[p] - gg[p];
      frob2 += d[p] * d[p];
    }
    r.loss += frob2 / m_count;

    Tensor grad(1, h, w);
    const double scale = 4.0 / (static_cast<double>(h) * w) / m_count;
    for (int a = 0; a < h; ++a)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int b = 0; b < h; ++b) acc += d[static_cast<std::size_t>(a) * h + b] * sw[i].at(0, b, x);
        grad.at(0, a, x) = scale * acc;
      }
    r.grad_sw.push_back(std::move(grad));
  }
  return r;
}

/// 1 - (1/M) sum_i pearson(g_i, s_i) over flattened maps. A pair where
/// either side has standard deviation < 1e-12 contributes correlation 0
/// and zero gradient.
inline LossWithGrad corr_loss(const FeatureStack& gw, const FeatureStack& sw) {
  check_aligned(gw, sw, "corr_loss");
  LossWithGrad r;
  const double m_count = static_cast<double>(gw.size());
  double corr_sum = 0.0;
  r.grad_sw.reserve(sw.size());
  for (std::size_t i = 0; i < gw.size(); ++i) {
    const std::size_t n = gw[i].size();
    const double mg = mean(gw[i]);
    const double ms = mean(sw[i]);
    Tensor gc = gw[i], sc = sw[i];
    for (double& v : gc.data) v -= mg;
    for (double& v : sc.data) v -= ms;
    double ng2 = 0.0, ns2 = 0.0, cross = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      ng2 += gc.data[p] * gc.data[p];
      ns2 += sc.data[p] * sc.data[p];
      cross += gc.data[p] * sc.data[p];
    }
    const double sd_g = std::sqrt(ng2 / static_cast<double>(n));
    const double sd_s = std::sqrt(ns2 / static_cast<double>(n));
    Tensor grad(1, sw[i].height, sw[i].width);
    if (sd_g < 1e-12 || sd_s < 1e-12) {
      r.grad_sw.push_back(std::move(grad));
      continue;  // degenerate pair: correlation term 0, gradient 0
    }
    // sqrt of the rounded product: for g == s this yields rho == 1 exactly.
    const double ngns = std::sqrt(ng2 * ns2);
    const double rho = cross / ngns;
    corr_sum += rho;
    // d rho / d s = gc/|gc||sc| - rho * sc/|sc|^2 (already centered);
    // loss contributes -rho/M.
    for (std::size_t p = 0; p < n; ++p)
      grad.data[p] = -(gc.data[p] / ngns - rho * sc.data[p] / ns2) / m_count;
    r.grad_sw.push_back(std::move(grad));
  }
  r.loss = 1.0 - corr_sum / m_count;
  return r;
}

struct CscBreakdown {
  double mse = 0.0;
  double corr = 0.0;
  double gram = 0.0;
  double total = 0.0;
  FeatureStack grad_sw;
};

/// beta1 * MSE + beta2 * corr + beta3 * Gram, gradients combined with the
/// same weights.
inline CscBreakdown csc_total(const FeatureStack& gw, const FeatureStack& sw,
                              const CscWeights& w) {
  LossWithGrad m = mse_content(gw, sw);
  LossWithGrad c = corr_loss(gw, sw);
  LossWithGrad g = gram_loss(gw, sw);
  CscBreakdown out;
  out.mse = m.loss;
  out.corr = c.loss;
  out.gram = g.loss;
  out.total = w.beta1 * m.loss + w.beta2 * c.loss + w.beta3 * g.loss;
  out.grad_sw.reserve(sw.size());
  for (std::size_t i = 0; i < sw.size(); ++i) {
    Tensor grad = scaled(m.grad_sw[i], w.beta1);
    add_scaled(grad, c.grad_sw[i], w.beta2);
    add_scaled(grad, g.grad_sw[i], w.beta3);
    out.grad_sw.push_back(std::move(grad));
  }
  return out;
}

}  // namespace mghf
