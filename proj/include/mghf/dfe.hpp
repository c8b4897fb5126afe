#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mghf/conv.hpp"
#include "mghf/errors.hpp"
#include "mghf/rng.hpp"
#include "mghf/tensor.hpp"

namespace mghf {

// ---------------------------------------------------------------------------
// Shallow CNN block: conv3x3 -> leaky_relu(0.2) -> conv3x3, spatial size
// preserved. Serves as the arbitrary mapping inside each coupling layer.
// ---------------------------------------------------------------------------

inline constexpr double kDfeLeakySlope = 0.2;

struct ShallowCnn {
  Conv2d conv1;  // in_ch -> hidden
  Conv2d conv2;  // hidden -> out_ch

  ShallowCnn() = default;
  ShallowCnn(int in_ch, int hidden, int out_ch)
      : conv1(hidden, in_ch, 3, 3, 1), conv2(out_ch, hidden, 3, 3, 1) {}

  std::size_t param_count() const { return conv1.param_count() + conv2.param_count(); }
};

struct ShallowCnnCache {
  Tensor input;
  Tensor h0;  // pre-activation of the hidden layer
  Tensor h1;  // post-activation
};

inline Tensor shallow_forward(const ShallowCnn& net, const Tensor& x, ShallowCnnCache* cache) {
  Tensor h0 = conv2d(x, net.conv1);
  Tensor h1 = leaky_relu(h0, kDfeLeakySlope);
  Tensor out = conv2d(h1, net.conv2);
  if (cache) {
    cache->input = x;
    cache->h0 = std::move(h0);
    cache->h1 = std::move(h1);
  }
  return out;
}

/// Input-gradient VJP; parameter gradients accumulate into `g_net` when given.
inline Tensor shallow_backward(const ShallowCnn& net, const ShallowCnnCache& cache,
                               const Tensor& g_out, ShallowCnn* g_net) {
  Tensor g_h1 = conv2d_backward_input(cache.h1, net.conv2, g_out);
  if (g_net) conv2d_backward_params(cache.h1, net.conv2, g_out, g_net->conv2);
  Tensor g_h0 = leaky_relu_backward(cache.h0, g_h1, kDfeLeakySlope);
  Tensor g_in = conv2d_backward_input(cache.input, net.conv1, g_h0);
  if (g_net) conv2d_backward_params(cache.input, net.conv1, g_h0, g_net->conv1);
  return g_in;
}

// ---------------------------------------------------------------------------
// Affine coupling layer. Channels split into halves (x1, x2):
//
//   s  = clamp * tanh(I1(x2) / clamp)     bounded log-scale
//   y1 = x1 * exp(s) + I2(x2)
//   y2 = x2 + I3(y1)                      mirrored half-step
//
// Exactly invertible for any weights; the clamp keeps exp(s) inside
// [e^-clamp, e^clamp] so inversion never divides by a vanishing scale.
// ---------------------------------------------------------------------------

struct CouplingLayer {
  int split_c = 0;
  ShallowCnn scale_net;      // I1
  ShallowCnn translate_net;  // I2
  ShallowCnn mirror_net;     // I3
  double scale_clamp = 2.0;

  CouplingLayer() = default;
  CouplingLayer(int split_channels, int hidden, double clamp)
      : split_c(split_channels),
        scale_net(split_channels, hidden, split_channels),
        translate_net(split_channels, hidden, split_channels),
        mirror_net(split_channels, hidden, split_channels),
        scale_clamp(clamp) {
    if (!(clamp > 0.0)) throw ArgumentError("CouplingLayer: scale_clamp must be > 0");
  }

  std::size_t param_count() const {
    return scale_net.param_count() + translate_net.param_count() + mirror_net.param_count();
  }
};

struct CouplingCache {
  Tensor x1, x2;
  Tensor raw;   // pre-clamp log-scale
  Tensor s;     // clamped log-scale
  Tensor exps;  // exp(s)
  Tensor y1;
  ShallowCnnCache scale_cache, translate_cache, mirror_cache;
};

namespace detail {

inline void split_halves(const Tensor& x, int split_c, Tensor& lo, Tensor& hi) {
  lo = Tensor(split_c, x.height, x.width);
  hi = Tensor(x.channels - split_c, x.height, x.width);
  const std::size_t half = lo.size();
  std::copy(x.data.begin(), x.data.begin() + half, lo.data.begin());
  std::copy(x.data.begin() + half, x.data.end(), hi.data.begin());
}

inline Tensor concat_halves(const Tensor& lo, const Tensor& hi) {
  Tensor out(lo.channels + hi.channels, lo.height, lo.width);
  std::copy(lo.data.begin(), lo.data.end(), out.data.begin());
  std::copy(hi.data.begin(), hi.data.end(), out.data.begin() + lo.size());
  return out;
}

inline void check_coupling_input(const CouplingLayer& layer, const Tensor& x, const char* where) {
  if (x.channels != 2 * layer.split_c)
    throw ShapeError(std::string(where) + ": expected " + std::to_string(2 * layer.split_c) +
                     " channels, got " + std::to_string(x.channels));
}

}  // namespace detail

inline Tensor coupling_forward(const CouplingLayer& layer, const Tensor& x,
                               CouplingCache* cache = nullptr) {
  detail::check_coupling_input(layer, x, "coupling_forward");
  Tensor x1, x2;
  detail::split_halves(x, layer.split_c, x1, x2);

  ShallowCnnCache sc, tc, mc;
  Tensor raw = shallow_forward(layer.scale_net, x2, cache ? &sc : nullptr);
  Tensor s = raw;
  for (double& v : s.data) v = layer.scale_clamp * std::tanh(v / layer.scale_clamp);
  for (double v : s.data)
    if (!(std::abs(v) <= layer.scale_clamp))
      throw NumericalError("coupling_forward: clamped log-scale out of bounds");
  Tensor exps = s;
  for (double& v : exps.data) v = std::exp(v);

  Tensor t = shallow_forward(layer.translate_net, x2, cache ? &tc : nullptr);
  Tensor y1 = x1;
  for (std::size_t i = 0; i < y1.data.size(); ++i)
    y1.data[i] = x1.data[i] * exps.data[i] + t.data[i];

  Tensor m = shallow_forward(layer.mirror_net, y1, cache ? &mc : nullptr);
  Tensor y2 = x2;
  for (std::size_t i = 0; i < y2.data.size(); ++i) y2.data[i] += m.data[i];

  if (cache) {
    cache->x1 = std::move(x1);
    cache->x2 = std::move(x2);
    cache->raw = std::move(raw);
    cache->s = std::move(s);
    cache->exps = std::move(exps);
    cache->y1 = y1;
    cache->scale_cache = std::move(sc);
    cache->translate_cache = std::move(tc);
    cache->mirror_cache = std::move(mc);
  }
  return detail::concat_halves(y1, y2);
}

inline Tensor coupling_inverse(const CouplingLayer& layer, const Tensor& y) {
  detail::check_coupling_input(layer, y, "coupling_inverse");
  Tensor y1, y2;
  detail::split_halves(y, layer.split_c, y1, y2);

  Tensor m = shallow_forward(layer.mirror_net, y1, nullptr);
  Tensor x2 = y2;
  for (std::size_t i = 0; i < x2.data.size(); ++i) x2.data[i] -= m.data[i];

  Tensor raw = shallow_forward(layer.scale_net, x2, nullptr);
  Tensor t = shallow_forward(layer.translate_net, x2, nullptr);
  Tensor x1 = y1;
  for (std::size_t i = 0; i < x1.data.size(); ++i) {
    const double s = layer.scale_clamp * std::tanh(raw.data[i] / layer.scale_clamp);
    x1.data[i] = (y1.data[i] - t.data[i]) * std::exp(-s);
  }
  return detail::concat_halves(x1, x2);
}

/// VJP through one coupling layer. Parameter gradients accumulate into
/// `g_layer` when given; returns the gradient with respect to the input.
inline Tensor coupling_backward(const CouplingLayer& layer, const CouplingCache& cache,
                                const Tensor& g_out, CouplingLayer* g_layer) {
  Tensor gy1, gy2;
  detail::split_halves(g_out, layer.split_c, gy1, gy2);

  // y2 = x2 + I3(y1)
  Tensor g_x2 = gy2;
  Tensor g_y1_mirror = shallow_backward(layer.mirror_net, cache.mirror_cache, gy2,
                                        g_layer ? &g_layer->mirror_net : nullptr);
  add_scaled(gy1, g_y1_mirror, 1.0);

  // y1 = x1 * exp(s) + t
  Tensor g_x1 = gy1;
  Tensor g_raw = gy1;
  for (std::size_t i = 0; i < g_x1.data.size(); ++i) {
    const double e = cache.exps.data[i];
    g_x1.data[i] = gy1.data[i] * e;
    const double th = std::tanh(cache.raw.data[i] / layer.scale_clamp);
    // d s / d raw = 1 - tanh^2(raw/clamp)
    g_raw.data[i] = gy1.data[i] * cache.x1.data[i] * e * (1.0 - th * th);
  }
  Tensor g_x2_scale = shallow_backward(layer.scale_net, cache.scale_cache, g_raw,
                                       g_layer ? &g_layer->scale_net : nullptr);
  Tensor g_x2_translate = shallow_backward(layer.translate_net, cache.translate_cache, gy1,
                                           g_layer ? &g_layer->translate_net : nullptr);
  add_scaled(g_x2, g_x2_scale, 1.0);
  add_scaled(g_x2, g_x2_translate, 1.0);

  return detail::concat_halves(g_x1, g_x2);
}

// ---------------------------------------------------------------------------
// Detail feature extractor: channel expansion followed by K coupling layers.
// Output channels are read as L = N single-channel detail maps.
// ---------------------------------------------------------------------------

struct DfeModel {
  Conv2d expand;  // 3 -> N, 3x3, padding 1, no activation
  std::vector<CouplingLayer> blocks;
  int n_channels = 0;

  std::size_t param_count() const {
    std::size_t n = expand.param_count();
    for (const auto& b : blocks) n += b.param_count();
    return n;
  }
};

/// Builds a zero-weight model. `hidden` 0 means split_c (= N/2).
inline DfeModel make_dfe(int n_channels, int n_blocks, int hidden = 0, double scale_clamp = 2.0) {
  if (n_channels < 2 || n_channels % 2 != 0)
    throw ArgumentError("make_dfe: n_channels must be even and >= 2, got " +
                        std::to_string(n_channels));
  if (n_blocks < 0) throw ArgumentError("make_dfe: n_blocks must be >= 0");
  const int split_c = n_channels / 2;
  if (hidden == 0) hidden = split_c;
  DfeModel m;
  m.n_channels = n_channels;
  m.expand = Conv2d(n_channels, 3, 3, 3, 1);
  for (int k = 0; k < n_blocks; ++k) m.blocks.emplace_back(split_c, hidden, scale_clamp);
  return m;
}

inline DfeModel zeros_like(const DfeModel& m) {
  DfeModel z = m;
  std::fill(z.expand.w.begin(), z.expand.w.end(), 0.0);
  std::fill(z.expand.b.begin(), z.expand.b.end(), 0.0);
  for (auto& blk : z.blocks) {
    for (ShallowCnn* net : {&blk.scale_net, &blk.translate_net, &blk.mirror_net}) {
      std::fill(net->conv1.w.begin(), net->conv1.w.end(), 0.0);
      std::fill(net->conv1.b.begin(), net->conv1.b.end(), 0.0);
      std::fill(net->conv2.w.begin(), net->conv2.w.end(), 0.0);
      std::fill(net->conv2.b.begin(), net->conv2.b.end(), 0.0);
    }
  }
  return z;
}

/// Training start: random first layers, zero-init final conv of every shallow
/// CNN so all couplings begin as the identity map.
inline void init_identity(DfeModel& m, Rng& rng, double sd = 0.1) {
  m.expand.randomize(rng, sd);
  for (auto& blk : m.blocks) {
    for (ShallowCnn* net : {&blk.scale_net, &blk.translate_net, &blk.mirror_net}) {
      net->conv1.randomize(rng, sd);
      std::fill(net->conv2.w.begin(), net->conv2.w.end(), 0.0);
      std::fill(net->conv2.b.begin(), net->conv2.b.end(), 0.0);
    }
  }
}

/// Test init: every layer random, so gradients flow through all branches.
inline void randomize_all(DfeModel& m, Rng& rng, double sd = 0.1) {
  m.expand.randomize(rng, sd);
  for (auto& blk : m.blocks) {
    for (ShallowCnn* net : {&blk.scale_net, &blk.translate_net, &blk.mirror_net}) {
      net->conv1.randomize(rng, sd);
      net->conv2.randomize(rng, sd);
    }
  }
}

inline FeatureStack split_channels(const Tensor& t) {
  FeatureStack maps;
  maps.reserve(t.channels);
  const std::size_t plane = static_cast<std::size_t>(t.height) * t.width;
  for (int c = 0; c < t.channels; ++c) {
    Tensor m(1, t.height, t.width);
    std::copy(t.data.begin() + c * plane, t.data.begin() + (c + 1) * plane, m.data.begin());
    maps.push_back(std::move(m));
  }
  return maps;
}

inline Tensor merge_channels(const FeatureStack& maps) {
  if (maps.empty()) throw ShapeError("merge_channels: empty stack");
  Tensor out(static_cast<int>(maps.size()), maps[0].height, maps[0].width);
  const std::size_t plane = maps[0].size();
  for (std::size_t c = 0; c < maps.size(); ++c) {
    check_same_shape(maps[c], maps[0], "merge_channels");
    std::copy(maps[c].data.begin(), maps[c].data.end(), out.data.begin() + c * plane);
  }
  return out;
}

struct DfeForwardCache {
  Tensor input;
  Tensor expanded;
  std::vector<CouplingCache> block_caches;
  Tensor features;  // N x H x W, pre-split
};

inline DfeForwardCache dfe_forward_cached(const DfeModel& model, const Tensor& image) {
  if (image.channels != 3)
    throw ShapeError("dfe: image must have 3 channels, got " + std::to_string(image.channels));
  DfeForwardCache cache;
  cache.input = image;
  cache.expanded = conv2d(image, model.expand);
  Tensor z = cache.expanded;
  cache.block_caches.resize(model.blocks.size());
  for (std::size_t k = 0; k < model.blocks.size(); ++k)
    z = coupling_forward(model.blocks[k], z, &cache.block_caches[k]);
  cache.features = std::move(z);
  return cache;
}

/// G = DFE(X): N single-channel detail maps, same spatial size as the image.
inline FeatureStack dfe_extract(const DfeModel& model, const Tensor& image) {
  return split_channels(dfe_forward_cached(model, image).features);
}

/// VJP against the pre-split feature tensor. Parameter gradients accumulate
/// into `param_grads` (a zeros_like model) when given.
inline Tensor dfe_backward(const DfeModel& model, const DfeForwardCache& cache,
                           const Tensor& g_features, DfeModel* param_grads) {
  check_same_shape(g_features, cache.features, "dfe_backward");
  Tensor g = g_features;
  for (std::size_t k = model.blocks.size(); k-- > 0;)
    g = coupling_backward(model.blocks[k], cache.block_caches[k], g,
                          param_grads ? &param_grads->blocks[k] : nullptr);
  Tensor g_image = conv2d_backward_input(cache.input, model.expand, g);
  if (param_grads) conv2d_backward_params(cache.input, model.expand, g, param_grads->expand);
  return g_image;
}

/// d(sum_l <cotangent_l, dfe_extract(image)_l>) / d image.
inline Tensor dfe_vjp(const DfeModel& model, const Tensor& image, const FeatureStack& cotangent) {
  if (static_cast<int>(cotangent.size()) != model.n_channels)
    throw ShapeError("dfe_vjp: cotangent has " + std::to_string(cotangent.size()) +
                     " maps, model emits " + std::to_string(model.n_channels));
  DfeForwardCache cache = dfe_forward_cached(model, image);
  Tensor g_features = merge_channels(cotangent);
  check_same_shape(g_features, cache.features, "dfe_vjp");
  return dfe_backward(model, cache, g_features, nullptr);
}

// ---------------------------------------------------------------------------
// Parameter accounting
// ---------------------------------------------------------------------------

struct DfeParamReport {
  std::size_t param_count = 0;
  std::size_t flops_per_pixel = 0;  // multiply-accumulates per output pixel
  std::size_t bytes = 0;            // f32 storage of all parameters
};

inline DfeParamReport dfe_param_report(const DfeModel& model) {
  DfeParamReport r;
  r.param_count = model.param_count();
  auto conv_macs = [](const Conv2d& c) {
    return static_cast<std::size_t>(c.out_ch) * c.in_ch * c.kh * c.kw;
  };
  r.flops_per_pixel = conv_macs(model.expand);
  for (const auto& blk : model.blocks)
    for (const ShallowCnn* net : {&blk.scale_net, &blk.translate_net, &blk.mirror_net})
      r.flops_per_pixel += conv_macs(net->conv1) + conv_macs(net->conv2);
  r.bytes = 4 * r.param_count;
  return r;
}

// ---------------------------------------------------------------------------
// Parameter registry (shared by the optimizer and the weights container)
// ---------------------------------------------------------------------------

struct ParamRef {
  std::string name;
  std::vector<int> shape;
  std::vector<double>* data;
};

inline void collect_conv_params(const std::string& prefix, Conv2d& c,
                                std::vector<ParamRef>& out) {
  out.push_back({prefix + ".w", {c.out_ch, c.in_ch, c.kh, c.kw}, &c.w});
  out.push_back({prefix + ".b", {c.out_ch}, &c.b});
}

inline std::vector<ParamRef> collect_params(DfeModel& m) {
  std::vector<ParamRef> refs;
  collect_conv_params("expand", m.expand, refs);
  for (std::size_t k = 0; k < m.blocks.size(); ++k) {
    const std::string base = "block" + std::to_string(k);
    collect_conv_params(base + ".i1.conv1", m.blocks[k].scale_net.conv1, refs);
    collect_conv_params(base + ".i1.conv2", m.blocks[k].scale_net.conv2, refs);
    collect_conv_params(base + ".i2.conv1", m.blocks[k].translate_net.conv1, refs);
    collect_conv_params(base + ".i2.conv2", m.blocks[k].translate_net.conv2, refs);
    collect_conv_params(base + ".i3.conv1", m.blocks[k].mirror_net.conv1, refs);
    collect_conv_params(base + ".i3.conv2", m.blocks[k].mirror_net.conv2, refs);
  }
  return refs;
}

}  // namespace mghf
