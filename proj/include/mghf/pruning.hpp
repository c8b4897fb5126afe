#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "mghf/errors.hpp"
#include "mghf/tensor.hpp"

namespace mghf {

// Entropy-based scoring of detail maps: low-entropy (concentrated) maps rank
// as important, the top M are kept and reweighted. Importance carries no
// gradient anywhere; histogram entropy is piecewise constant.

struct PruningConfig {
  int bins = 64;
  int m = 0;  // 0 = ceil(L/2)
  double alpha = 1.0;
  double gamma = 1.0;
};

struct ImportanceProfile {
  std::vector<double> h_norm_g;
  std::vector<double> h_norm_s;
  std::vector<double> combined;
  std::vector<int> selected;     // strictly increasing indices, |selected| = M
  std::vector<double> weights;   // aligned with `selected`
  double alpha = 1.0;
  double gamma = 1.0;
  int bins = 64;
};

/// Histogram Shannon entropy over `bins` equal-width buckets of the map's
/// own min-max range, divided by log(bins). Constant map -> 0.
inline double normalized_entropy(const Tensor& map, int bins) {
  if (bins < 2) throw ArgumentError("normalized_entropy: bins must be >= 2");
  double lo = map.data[0], hi = map.data[0];
  for (double v : map.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double range = hi - lo;
  if (range <= 0.0) return 0.0;

  std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
  for (double v : map.data) {
    int b = static_cast<int>((v - lo) / range * bins);
    if (b >= bins) b = bins - 1;  // v == hi lands in the last bucket
    ++counts[b];
  }
  const double n = static_cast<double>(map.size());
  double h = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h / std::log(static_cast<double>(bins));
}

/// ((1 - H_g) + (1 - H_s)) / 2.
inline double combined_from_entropies(double h_norm_g, double h_norm_s) {
  return ((1.0 - h_norm_g) + (1.0 - h_norm_s)) / 2.0;
}

/// w = (1 + alpha * importance)^gamma.
inline double importance_weight(double importance, double alpha, double gamma) {
  return std::pow(1.0 + alpha * importance, gamma);
}

/// Per-map ((1 - H(G_j)) + (1 - H(S_j))) / 2.
inline std::vector<double> combined_importance(const FeatureStack& g, const FeatureStack& s,
                                               int bins) {
  check_aligned(g, s, "combined_importance");
  std::vector<double> out(g.size());
  for (std::size_t j = 0; j < g.size(); ++j)
    out[j] = combined_from_entropies(normalized_entropy(g[j], bins),
                                     normalized_entropy(s[j], bins));
  return out;
}

/// Indices of the m largest values, ties broken toward the lower index,
/// returned in increasing index order.
inline std::vector<int> select_top_m(const std::vector<double>& importance, int m) {
  const int l = static_cast<int>(importance.size());
  if (m < 1 || m > l)
    throw ArgumentError("select_top_m: m must be in [1, " + std::to_string(l) + "], got " +
                        std::to_string(m));
  std::vector<int> order(importance.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (importance[a] != importance[b]) return importance[a] > importance[b];
    return a < b;
  });
  std::vector<int> selected(order.begin(), order.begin() + m);
  std::sort(selected.begin(), selected.end());
  return selected;
}

inline ImportanceProfile compute_profile(const FeatureStack& g, const FeatureStack& s,
                                         const PruningConfig& cfg) {
  check_aligned(g, s, "compute_profile");
  ImportanceProfile p;
  p.alpha = cfg.alpha;
  p.gamma = cfg.gamma;
  p.bins = cfg.bins;
  p.h_norm_g.resize(g.size());
  p.h_norm_s.resize(g.size());
  p.combined.resize(g.size());
  for (std::size_t j = 0; j < g.size(); ++j) {
    p.h_norm_g[j] = normalized_entropy(g[j], cfg.bins);
    p.h_norm_s[j] = normalized_entropy(s[j], cfg.bins);
    p.combined[j] = combined_from_entropies(p.h_norm_g[j], p.h_norm_s[j]);
  }
  const int l = static_cast<int>(g.size());
  const int m = cfg.m > 0 ? cfg.m : (l + 1) / 2;
  p.selected = select_top_m(p.combined, m);
  p.weights.reserve(p.selected.size());
  for (int i : p.selected)
    p.weights.push_back(importance_weight(p.combined[i], cfg.alpha, cfg.gamma));
  return p;
}

/// G^w_i = w_i * G_i and S^w_i = w_i * S_i for the selected indices, in
/// selection order; everything else is dropped.
inline std::pair<FeatureStack, FeatureStack> apply_weights(const FeatureStack& g,
                                                           const FeatureStack& s,
                                                           const ImportanceProfile& profile) {
  check_aligned(g, s, "apply_weights");
  FeatureStack gw, sw;
  gw.reserve(profile.selected.size());
  sw.reserve(profile.selected.size());
  for (std::size_t k = 0; k < profile.selected.size(); ++k) {
    const int i = profile.selected[k];
    if (i < 0 || i >= static_cast<int>(g.size()))
      throw ArgumentError("apply_weights: selected index " + std::to_string(i) +
                          " out of range for stack of " + std::to_string(g.size()));
    gw.push_back(scaled(g[i], profile.weights[k]));
    sw.push_back(scaled(s[i], profile.weights[k]));
  }
  return {std::move(gw), std::move(sw)};
}

}  // namespace mghf
