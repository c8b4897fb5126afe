#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "mghf/csc.hpp"
#include "mghf/dfe.hpp"
#include "mghf/errors.hpp"
#include "mghf/lip.hpp"
#include "mghf/pruning.hpp"
#include "mghf/tensor.hpp"

namespace mghf {

struct MghfConfig {
  double gamma1 = 2.0;    // weight of the naive feature MSE
  double gamma2 = 1.5;    // weight of the content-style consistency term
  double gamma3 = 1e-3;   // weight of the patch-contrastive term
  CscWeights csc;
  MonceConfig monce;
  PruningConfig pruning;
  bool lip_enabled = true;
  bool lip_on_pruned = false;  // default: contrast on the unpruned stack
  int embed_hidden = 64;
  int embed_dim = 32;
  std::uint64_t embed_seed = 17;
};

inline double total_with_gammas(double n_term, double csc_term, double lip_term,
                                const MghfConfig& cfg) {
  return cfg.gamma1 * n_term + cfg.gamma2 * csc_term + cfg.gamma3 * lip_term;
}

/// Plain feature-space MSE over the full stacks (the "naive" objective).
inline LossWithGrad mghf_n(const FeatureStack& g, const FeatureStack& s) {
  return mse_content(g, s);
}

struct LossReport {
  std::string mode;  // "n" or "c"
  double mghf_n = 0.0;

  bool has_csc = false;
  CscBreakdown csc;

  bool has_lip = false;
  double lip = 0.0;
  bool lip_converged = true;
  double lip_max_residual = 0.0;

  bool has_total = false;
  double total = 0.0;

  bool has_profile = false;
  ImportanceProfile profile;

  int image_h = 0;
  int image_w = 0;

  bool has_durations = false;
  double extract_ms = 0.0;
  double loss_ms = 0.0;
  double total_ms = 0.0;
};

struct MghfResult {
  LossReport report;
  Tensor grad_x_sr{1, 1, 1};
};

/// Naive-mode loss with the gradient pulled back through the extractor to
/// the reconstructed image. The ground-truth branch carries no gradient.
inline MghfResult mghf_n_image(const DfeModel& model, const Tensor& x_gt, const Tensor& x_sr,
                               bool with_timings = false) {
  check_same_shape(x_gt, x_sr, "mghf_n");
  const auto t0 = std::chrono::steady_clock::now();
  FeatureStack g = dfe_extract(model, x_gt);
  DfeForwardCache cache = dfe_forward_cached(model, x_sr);
  FeatureStack s = split_channels(cache.features);
  const auto t1 = std::chrono::steady_clock::now();

  LossWithGrad n = mghf_n(g, s);
  MghfResult out;
  out.report.mode = "n";
  out.report.mghf_n = n.loss;
  out.report.has_total = true;
  out.report.total = n.loss;
  out.report.image_h = x_sr.height;
  out.report.image_w = x_sr.width;
  out.grad_x_sr = dfe_backward(model, cache, merge_channels(n.grad_sw), nullptr);
  if (with_timings) {
    out.report.has_durations = true;
    out.report.extract_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    out.report.loss_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t1).count();
    out.report.total_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }
  return out;
}

/// Composite loss: gamma1 * MSE + gamma2 * CSC(pruned, reweighted)
/// + gamma3 * LIP, with one analytic gradient for the whole sum pulled back
/// to the reconstructed image.
inline MghfResult mghf_c_image(const DfeModel& model, const Tensor& x_gt, const Tensor& x_sr,
                               const MghfConfig& cfg, const EmbeddingHead& head,
                               bool with_timings = false) {
  check_same_shape(x_gt, x_sr, "mghf_c");
  const auto t0 = std::chrono::steady_clock::now();
  FeatureStack g = dfe_extract(model, x_gt);
  DfeForwardCache cache = dfe_forward_cached(model, x_sr);
  FeatureStack s = split_channels(cache.features);
  const auto t1 = std::chrono::steady_clock::now();

  MghfResult out;
  out.report.mode = "c";
  out.report.image_h = x_sr.height;
  out.report.image_w = x_sr.width;

  LossWithGrad n = mghf_n(g, s);
  out.report.mghf_n = n.loss;

  ImportanceProfile profile = compute_profile(g, s, cfg.pruning);
  auto [gw, sw] = apply_weights(g, s, profile);
  CscBreakdown csc = csc_total(gw, sw, cfg.csc);
  out.report.has_csc = true;
  out.report.csc = csc;
  out.report.has_profile = true;
  out.report.profile = profile;

  // d loss / d s = gamma1 * dMSE/ds + gamma2 * w_i * dCSC/dsw_i (+ LIP term)
  FeatureStack g_s;
  g_s.reserve(s.size());
  for (const Tensor& m : s) {
    Tensor z(m.channels, m.height, m.width);
    g_s.push_back(z);
  }
  for (std::size_t i = 0; i < s.size(); ++i)
    add_scaled(g_s[i], n.grad_sw[i], cfg.gamma1);
  for (std::size_t sel = 0; sel < profile.selected.size(); ++sel) {
    const int i = profile.selected[sel];
    add_scaled(g_s[i], csc.grad_sw[sel], cfg.gamma2 * profile.weights[sel]);
  }

  double lip_term = 0.0;
  if (cfg.lip_enabled) {
    const FeatureStack& lg = cfg.lip_on_pruned ? gw : g;
    const FeatureStack& ls = cfg.lip_on_pruned ? sw : s;
    LipResult lip = lip_loss(lg, ls, head, cfg.monce);
    lip_term = lip.loss;
    out.report.has_lip = true;
    out.report.lip = lip.loss;
    out.report.lip_converged = lip.all_converged;
    out.report.lip_max_residual = lip.max_residual;
    if (cfg.lip_on_pruned) {
      for (std::size_t sel = 0; sel < profile.selected.size(); ++sel)
        add_scaled(g_s[profile.selected[sel]], lip.grad_s[sel],
                   cfg.gamma3 * profile.weights[sel]);
    } else {
      for (std::size_t i = 0; i < s.size(); ++i)
        add_scaled(g_s[i], lip.grad_s[i], cfg.gamma3);
    }
  }

  out.report.has_total = true;
  out.report.total = total_with_gammas(n.loss, csc.total, lip_term, cfg);

  out.grad_x_sr = dfe_backward(model, cache, merge_channels(g_s), nullptr);
  if (with_timings) {
    out.report.has_durations = true;
    out.report.extract_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    out.report.loss_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t1).count();
    out.report.total_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }
  return out;
}

}  // namespace mghf
