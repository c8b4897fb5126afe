#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mghf/conv.hpp"
#include "mghf/dfe.hpp"
#include "mghf/errors.hpp"
#include "mghf/rng.hpp"
#include "mghf/tensor.hpp"

namespace mghf {

// Toy supervised pretraining of the extractor: DFE features feed a small
// classifier head; both are trained jointly with cross-entropy and Adam.

struct TrainConfig {
  double lr = 5e-4;
  int batch = 32;
  double decay_factor = 0.95;
  int decay_every = 5000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  long total_iters = 2000;
  std::uint64_t seed = 0;
};

/// Step schedule, 1-based: lr(t) = lr * factor^floor(t / every).
inline double scheduled_lr(const TrainConfig& cfg, long iter) {
  const long k = iter / cfg.decay_every;
  return cfg.lr * std::pow(cfg.decay_factor, static_cast<double>(k));
}

// ---------------------------------------------------------------------------
// Synthetic dataset: oriented gratings (even classes) and checkerboards
// (odd classes). Every sample is a pure function of (seed, index).
// ---------------------------------------------------------------------------

struct ToySample {
  Tensor image;
  int label = 0;
};

struct ToyDataset {
  int classes = 4;
  int height = 32;
  int width = 32;
  std::uint64_t seed = 0;
  double noise = 0.05;

  ToySample sample(long index) const {
    if (classes < 2) throw ArgumentError("ToyDataset: need at least 2 classes");
    const int label = static_cast<int>(index % classes);
    Rng rng(mix_seed(seed, 0x70fuLL * 0x9e3779b97f4a7c15uLL + static_cast<std::uint64_t>(index)));
    Tensor img(3, height, width);
    const double phase = rng.uniform(0.0, 6.28318530717958648);
    if (label % 2 == 0) {
      const double theta = 3.14159265358979324 * label / (2.0 * classes);
      const double freq = 2.0 + (label / 2) % 3;
      const double kx = std::cos(theta) * freq * 6.28318530717958648 / width;
      const double ky = std::sin(theta) * freq * 6.28318530717958648 / height;
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < height; ++y)
          for (int x = 0; x < width; ++x)
            img.at(c, y, x) = 0.5 + 0.5 * std::sin(kx * x + ky * y + phase + 0.4 * c);
    } else {
      const int cell = 2 + label;
      const int shift = static_cast<int>(rng.below(static_cast<std::uint64_t>(cell)));
      const double tint = rng.uniform(0.6, 1.0);
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < height; ++y)
          for (int x = 0; x < width; ++x) {
            const int parity = ((y + shift) / cell + (x + shift) / cell) % 2;
            img.at(c, y, x) = parity ? tint * (0.7 + 0.1 * c) : 0.1;
          }
    }
    for (double& v : img.data) v = std::clamp(v + rng.uniform(-noise, noise), 0.0, 1.0);
    return {std::move(img), label};
  }
};

// ---------------------------------------------------------------------------
// Classifier head: two conv(3x3) -> leaky_relu -> 2x2 avgpool stages, then a
// fully connected layer onto the class logits.
// ---------------------------------------------------------------------------

inline constexpr double kHeadLeakySlope = 0.2;

struct ClassifierHead {
  std::vector<Conv2d> convs;
  int fc_in = 0;
  int n_classes = 0;
  std::vector<double> fc_w;  // [classes x fc_in]
  std::vector<double> fc_b;  // [classes]
};

inline Tensor avg_pool2(const Tensor& x) {
  const int oh = x.height / 2, ow = x.width / 2;
  if (oh < 1 || ow < 1) throw ShapeError("avg_pool2: input too small: " + x.shape_str());
  Tensor out(x.channels, oh, ow);
  for (int c = 0; c < x.channels; ++c)
    for (int y = 0; y < oh; ++y)
      for (int x2 = 0; x2 < ow; ++x2)
        out.at(c, y, x2) = 0.25 * (x.at(c, 2 * y, 2 * x2) + x.at(c, 2 * y, 2 * x2 + 1) +
                                   x.at(c, 2 * y + 1, 2 * x2) + x.at(c, 2 * y + 1, 2 * x2 + 1));
  return out;
}

inline Tensor avg_pool2_backward(const Tensor& input, const Tensor& g_out) {
  Tensor g(input.channels, input.height, input.width);
  for (int c = 0; c < g_out.channels; ++c)
    for (int y = 0; y < g_out.height; ++y)
      for (int x = 0; x < g_out.width; ++x) {
        const double v = 0.25 * g_out.at(c, y, x);
        g.at(c, 2 * y, 2 * x) += v;
        g.at(c, 2 * y, 2 * x + 1) += v;
        g.at(c, 2 * y + 1, 2 * x) += v;
        g.at(c, 2 * y + 1, 2 * x + 1) += v;
      }
  return g;
}

inline ClassifierHead make_classifier_head(int in_channels, int image_h, int image_w,
                                           int n_classes, Rng& rng) {
  if (n_classes < 2) throw ArgumentError("make_classifier_head: need at least 2 classes");
  ClassifierHead h;
  h.n_classes = n_classes;
  const int stage_ch = 16;
  h.convs.emplace_back(stage_ch, in_channels, 3, 3, 1);
  h.convs.emplace_back(stage_ch, stage_ch, 3, 3, 1);
  int ph = image_h, pw = image_w;
  for (std::size_t i = 0; i < h.convs.size(); ++i) {
    ph /= 2;
    pw /= 2;
  }
  if (ph < 1 || pw < 1) throw ArgumentError("make_classifier_head: image too small for 2 pools");
  h.fc_in = stage_ch * ph * pw;
  h.fc_w.resize(static_cast<std::size_t>(n_classes) * h.fc_in);
  h.fc_b.assign(n_classes, 0.0);
  for (auto& cv : h.convs) cv.randomize(rng, 0.1);
  const double s = 1.0 / std::sqrt(static_cast<double>(h.fc_in));
  for (double& v : h.fc_w) v = rng.uniform(-s, s);
  return h;
}

inline std::vector<ParamRef> collect_params(ClassifierHead& h) {
  std::vector<ParamRef> refs;
  for (std::size_t i = 0; i < h.convs.size(); ++i) {
    Conv2d& cv = h.convs[i];
    const std::string base = "head.conv" + std::to_string(i);
    refs.push_back({base + ".w", {cv.out_ch, cv.in_ch, cv.kh, cv.kw}, &cv.w});
    refs.push_back({base + ".b", {cv.out_ch}, &cv.b});
  }
  refs.push_back({"head.fc.w", {h.n_classes, h.fc_in}, &h.fc_w});
  refs.push_back({"head.fc.b", {h.n_classes}, &h.fc_b});
  return refs;
}

inline ClassifierHead zeros_like(const ClassifierHead& h) {
  ClassifierHead z = h;
  for (auto& cv : z.convs) {
    std::fill(cv.w.begin(), cv.w.end(), 0.0);
    std::fill(cv.b.begin(), cv.b.end(), 0.0);
  }
  std::fill(z.fc_w.begin(), z.fc_w.end(), 0.0);
  std::fill(z.fc_b.begin(), z.fc_b.end(), 0.0);
  return z;
}

struct HeadCache {
  std::vector<Tensor> stage_in;
  std::vector<Tensor> stage_pre;
  std::vector<Tensor> stage_act;
  std::vector<Tensor> stage_pooled;
  std::vector<double> flat;
  std::vector<double> logits;
};

inline HeadCache head_forward(const ClassifierHead& h, const Tensor& features) {
  HeadCache c;
  Tensor cur = features;
  for (const Conv2d& cv : h.convs) {
    c.stage_in.push_back(cur);
    Tensor pre = conv2d(cur, cv);
    c.stage_pre.push_back(pre);
    Tensor act = leaky_relu(pre, kHeadLeakySlope);
    c.stage_act.push_back(act);
    cur = avg_pool2(act);
    c.stage_pooled.push_back(cur);
  }
  c.flat.assign(cur.data.begin(), cur.data.end());
  if (static_cast<int>(c.flat.size()) != h.fc_in)
    throw ShapeError("head_forward: flattened size " + std::to_string(c.flat.size()) +
                     " does not match fc input " + std::to_string(h.fc_in));
  c.logits.resize(h.n_classes);
  for (int k = 0; k < h.n_classes; ++k) {
    double acc = h.fc_b[k];
    const double* row = &h.fc_w[static_cast<std::size_t>(k) * h.fc_in];
    for (int i = 0; i < h.fc_in; ++i) acc += row[i] * c.flat[i];
    c.logits[k] = acc;
  }
  return c;
}

inline Tensor head_backward(const ClassifierHead& h, const HeadCache& c,
                            const std::vector<double>& g_logits, ClassifierHead* g_head) {
  std::vector<double> g_flat(h.fc_in, 0.0);
  for (int k = 0; k < h.n_classes; ++k) {
    const double* row = &h.fc_w[static_cast<std::size_t>(k) * h.fc_in];
    for (int i = 0; i < h.fc_in; ++i) g_flat[i] += row[i] * g_logits[k];
    if (g_head) {
      double* grow = &g_head->fc_w[static_cast<std::size_t>(k) * h.fc_in];
      for (int i = 0; i < h.fc_in; ++i) grow[i] += g_logits[k] * c.flat[i];
      g_head->fc_b[k] += g_logits[k];
    }
  }
  const Tensor& last = c.stage_pooled.back();
  Tensor g_cur(last.channels, last.height, last.width);
  std::copy(g_flat.begin(), g_flat.end(), g_cur.data.begin());
  for (int i = static_cast<int>(h.convs.size()) - 1; i >= 0; --i) {
    Tensor g_act = avg_pool2_backward(c.stage_act[i], g_cur);
    Tensor g_pre = leaky_relu_backward(c.stage_pre[i], g_act, kHeadLeakySlope);
    if (g_head) conv2d_backward_params(c.stage_in[i], h.convs[i], g_pre, g_head->convs[i]);
    g_cur = conv2d_backward_input(c.stage_in[i], h.convs[i], g_pre);
  }
  return g_cur;
}

// ---------------------------------------------------------------------------
// Cross-entropy over a batch of logit rows
// ---------------------------------------------------------------------------

struct CeResult {
  double loss = 0.0;
  std::vector<std::vector<double>> grad_logits;
};

/// Mean cross-entropy, log-sum-exp stabilized; grad = (softmax - onehot)/B.
inline CeResult cross_entropy(const std::vector<std::vector<double>>& logits,
                              const std::vector<int>& labels) {
  if (logits.size() != labels.size() || logits.empty())
    throw ShapeError("cross_entropy: batch size mismatch or empty batch");
  const double inv_b = 1.0 / static_cast<double>(logits.size());
  CeResult r;
  r.grad_logits.resize(logits.size());
  for (std::size_t b = 0; b < logits.size(); ++b) {
    const auto& row = logits[b];
    const int y = labels[b];
    if (y < 0 || y >= static_cast<int>(row.size()))
      throw ArgumentError("cross_entropy: label out of range");
    double m = row[0];
    for (double v : row) m = std::max(m, v);
    double denom = 0.0;
    for (double v : row) denom += std::exp(v - m);
    r.loss += (-(row[y] - m) + std::log(denom)) * inv_b;
    auto& g = r.grad_logits[b];
    g.resize(row.size());
    for (std::size_t k = 0; k < row.size(); ++k)
      g[k] = (std::exp(row[k] - m) / denom - (static_cast<int>(k) == y ? 1.0 : 0.0)) * inv_b;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long step = 0;
};

inline AdamState make_adam_state(const std::vector<ParamRef>& params) {
  AdamState st;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (const auto& p : params) {
    st.m.emplace_back(p.data->size(), 0.0);
    st.v.emplace_back(p.data->size(), 0.0);
  }
  return st;
}

/// One bias-corrected Adam update; the learning rate follows the step
/// schedule off the internal 1-based step counter.
inline void adam_step(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads,
                      AdamState& st, const TrainConfig& cfg) {
  if (params.size() != grads.size() || params.size() != st.m.size())
    throw ShapeError("adam_step: parameter/gradient/state count mismatch");
  st.step += 1;
  const double lr = scheduled_lr(cfg, st.step);
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(st.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    std::vector<double>& w = *params[p].data;
    const std::vector<double>& g = *grads[p].data;
    if (w.size() != g.size()) throw ShapeError("adam_step: shape mismatch at " + params[p].name);
    for (std::size_t i = 0; i < w.size(); ++i) {
      st.m[p][i] = cfg.adam_beta1 * st.m[p][i] + (1.0 - cfg.adam_beta1) * g[i];
      st.v[p][i] = cfg.adam_beta2 * st.v[p][i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
      const double mhat = st.m[p][i] / bc1;
      const double vhat = st.v[p][i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct CurvePoint {
  long iter = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
};

/// Deterministic joint training of extractor and head. Sample index streams
/// sequentially, so a rerun with the same seed reproduces every batch.
inline TrainResult train(DfeModel& model, ClassifierHead& head, const ToyDataset& data,
                         const TrainConfig& cfg) {
  if (cfg.batch < 1) throw ArgumentError("train: batch must be >= 1");
  if (cfg.total_iters < 0) throw ArgumentError("train: total_iters must be >= 0");
  auto params = collect_params(model);
  auto head_params = collect_params(head);
  params.insert(params.end(), head_params.begin(), head_params.end());

  AdamState st = make_adam_state(params);
  TrainResult result;
  result.curve.reserve(static_cast<std::size_t>(cfg.total_iters));

  DfeModel g_model = zeros_like(model);
  ClassifierHead g_head = zeros_like(head);
  auto grads = collect_params(g_model);
  auto head_grads = collect_params(g_head);
  grads.insert(grads.end(), head_grads.begin(), head_grads.end());

  for (long t = 1; t <= cfg.total_iters; ++t) {
    for (auto& ref : grads) std::fill(ref.data->begin(), ref.data->end(), 0.0);

    std::vector<DfeForwardCache> dfe_caches;
    std::vector<HeadCache> head_caches;
    std::vector<std::vector<double>> logits;
    std::vector<int> labels;
    dfe_caches.reserve(cfg.batch);
    head_caches.reserve(cfg.batch);
    for (int b = 0; b < cfg.batch; ++b) {
      ToySample smp = data.sample((t - 1) * static_cast<long>(cfg.batch) + b);
      dfe_caches.push_back(dfe_forward_cached(model, smp.image));
      head_caches.push_back(head_forward(head, dfe_caches.back().features));
      logits.push_back(head_caches.back().logits);
      labels.push_back(smp.label);
    }

    CeResult ce = cross_entropy(logits, labels);
    if (!std::isfinite(ce.loss))
      throw NumericalError("train: non-finite loss at iteration " + std::to_string(t));

    for (int b = 0; b < cfg.batch; ++b) {
      Tensor g_features = head_backward(head, head_caches[b], ce.grad_logits[b], &g_head);
      dfe_backward(model, dfe_caches[b], g_features, &g_model);
    }

    adam_step(params, grads, st, cfg);
    result.curve.push_back({t, ce.loss, scheduled_lr(cfg, t)});
  }
  return result;
}

/// Fraction of correctly classified held-out samples.
inline double evaluate(const DfeModel& model, const ClassifierHead& head, const ToyDataset& data,
                       long first_index, int count) {
  int correct = 0;
  for (int i = 0; i < count; ++i) {
    ToySample smp = data.sample(first_index + i);
    DfeForwardCache cache = dfe_forward_cached(model, smp.image);
    HeadCache hc = head_forward(head, cache.features);
    int best = 0;
    for (std::size_t k = 1; k < hc.logits.size(); ++k)
      if (hc.logits[k] > hc.logits[best]) best = static_cast<int>(k);
    if (best == smp.label) ++correct;
  }
  return static_cast<double>(correct) / count;
}

}  // namespace mghf
