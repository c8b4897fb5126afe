#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mghf/errors.hpp"
#include "mghf/rng.hpp"
#include "mghf/tensor.hpp"

namespace mghf {

// Local information preservation: feature maps are cut into patches, each
// patch is projected to a unit embedding, and a patch-contrastive loss is
// modulated by a Sinkhorn transport plan that reweights hard negatives.

struct MonceConfig {
  double tau = 0.07;      // contrastive temperature
  double beta_ot = 1.0;   // weighting temperature of the cost matrix
  double q = 1.0;         // negative-term weight
  double sinkhorn_epsilon = 0.05;
  int sinkhorn_max_iters = 500;
  double sinkhorn_tol = 1e-6;
  int patch_size = 32;
  int stride = 16;
};

// ---------------------------------------------------------------------------
// Patch extraction
// ---------------------------------------------------------------------------

struct PatchGrid {
  std::vector<std::vector<double>> patches;  // flattened row-major contents
  int patch_size = 0;
  int stride = 0;
  int rows = 0;
  int cols = 0;

  int count() const { return rows * cols; }
};

/// Row-major sliding-window extraction; trailing pixels that do not fit a
/// full window are dropped.
inline PatchGrid extract_patches(const Tensor& map, int patch_size, int stride) {
  if (stride < 1) throw ArgumentError("extract_patches: stride must be >= 1");
  if (map.height < patch_size || map.width < patch_size)
    throw ArgumentError("extract_patches: map " + std::to_string(map.height) + "x" +
                        std::to_string(map.width) + " smaller than patch " +
                        std::to_string(patch_size));
  PatchGrid grid;
  grid.patch_size = patch_size;
  grid.stride = stride;
  grid.rows = (map.height - patch_size) / stride + 1;
  grid.cols = (map.width - patch_size) / stride + 1;
  grid.patches.reserve(static_cast<std::size_t>(grid.rows) * grid.cols);
  for (int r = 0; r < grid.rows; ++r)
    for (int c = 0; c < grid.cols; ++c) {
      std::vector<double> p;
      p.reserve(static_cast<std::size_t>(patch_size) * patch_size);
      for (int dy = 0; dy < patch_size; ++dy)
        for (int dx = 0; dx < patch_size; ++dx)
          p.push_back(map.at(0, r * stride + dy, c * stride + dx));
      grid.patches.push_back(std::move(p));
    }
  return grid;
}

// ---------------------------------------------------------------------------
// Embedding head: affine -> leaky_relu(0.2) -> affine -> L2 normalize.
// Weights are seeded once and frozen; this artifact never trains them.
// ---------------------------------------------------------------------------

struct EmbeddingHead {
  int in_dim = 0;
  int hidden_dim = 0;
  int out_dim = 0;
  std::vector<double> w1, b1;  // [hidden x in], [hidden]
  std::vector<double> w2, b2;  // [out x hidden], [out]
};

inline EmbeddingHead make_embedding_head(int in_dim, int hidden_dim, int out_dim,
                                         std::uint64_t seed) {
  if (in_dim < 1 || hidden_dim < 1 || out_dim < 1)
    throw ArgumentError("make_embedding_head: dims must be positive");
  EmbeddingHead h;
  h.in_dim = in_dim;
  h.hidden_dim = hidden_dim;
  h.out_dim = out_dim;
  Rng rng(mix_seed(seed, 0xe3bedull));
  const double s1 = 1.0 / std::sqrt(static_cast<double>(in_dim));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  h.w1.resize(static_cast<std::size_t>(hidden_dim) * in_dim);
  h.b1.resize(hidden_dim);
  h.w2.resize(static_cast<std::size_t>(out_dim) * hidden_dim);
  h.b2.resize(out_dim);
  for (double& v : h.w1) v = rng.uniform(-s1, s1);
  for (double& v : h.b1) v = rng.uniform(-s1, s1);
  for (double& v : h.w2) v = rng.uniform(-s2, s2);
  for (double& v : h.b2) v = rng.uniform(-s2, s2);
  return h;
}

inline constexpr double kEmbedLeakySlope = 0.2;

struct EmbedCache {
  std::vector<double> h0;  // hidden pre-activation
  std::vector<double> v;   // output pre-normalization
  double vnorm = 0.0;
  bool degenerate = false;
};

/// One patch -> unit vector. A zero pre-normalization vector maps to the
/// first basis vector (degenerate patches stay well-defined).
inline std::vector<double> embed_one(const EmbeddingHead& head, const std::vector<double>& patch,
                                     EmbedCache* cache) {
  if (static_cast<int>(patch.size()) != head.in_dim)
    throw ShapeError("embed: patch length " + std::to_string(patch.size()) +
                     " does not match head input dim " + std::to_string(head.in_dim));
  std::vector<double> h0(head.hidden_dim);
  for (int o = 0; o < head.hidden_dim; ++o) {
    double acc = head.b1[o];
    const double* row = &head.w1[static_cast<std::size_t>(o) * head.in_dim];
    for (int i = 0; i < head.in_dim; ++i) acc += row[i] * patch[i];
    h0[o] = acc;
  }
  std::vector<double> h1(head.hidden_dim);
  for (int i = 0; i < head.hidden_dim; ++i)
    h1[i] = h0[i] > 0.0 ? h0[i] : kEmbedLeakySlope * h0[i];
  std::vector<double> v(head.out_dim);
  for (int o = 0; o < head.out_dim; ++o) {
    double acc = head.b2[o];
    const double* row = &head.w2[static_cast<std::size_t>(o) * head.hidden_dim];
    for (int i = 0; i < head.hidden_dim; ++i) acc += row[i] * h1[i];
    v[o] = acc;
  }
  double n2 = 0.0;
  for (double x : v) n2 += x * x;
  const double vnorm = std::sqrt(n2);

  std::vector<double> e(head.out_dim, 0.0);
  bool degenerate = vnorm < 1e-300;
  if (degenerate) {
    e[0] = 1.0;
  } else {
    for (int i = 0; i < head.out_dim; ++i) e[i] = v[i] / vnorm;
  }
  if (cache) {
    cache->h0 = std::move(h0);
    cache->v = std::move(v);
    cache->vnorm = vnorm;
    cache->degenerate = degenerate;
  }
  return e;
}

inline std::vector<std::vector<double>> embed(const EmbeddingHead& head, const PatchGrid& grid,
                                              std::vector<EmbedCache>* caches = nullptr) {
  std::vector<std::vector<double>> out;
  out.reserve(grid.patches.size());
  if (caches) caches->resize(grid.patches.size());
  for (std::size_t i = 0; i < grid.patches.size(); ++i)
    out.push_back(embed_one(head, grid.patches[i], caches ? &(*caches)[i] : nullptr));
  return out;
}

/// VJP of embed_one with respect to the patch contents. Degenerate patches
/// (zero pre-normalization vector) carry no gradient.
inline std::vector<double> embed_backward(const EmbeddingHead& head, const EmbedCache& cache,
                                          const std::vector<double>& e,
                                          const std::vector<double>& g_e) {
  std::vector<double> g_patch(head.in_dim, 0.0);
  if (cache.degenerate) return g_patch;
  // y = v/|v|: g_v = (g_e - (g_e . e) e) / |v|
  double ge_dot_e = 0.0;
  for (int i = 0; i < head.out_dim; ++i) ge_dot_e += g_e[i] * e[i];
  std::vector<double> g_v(head.out_dim);
  for (int i = 0; i < head.out_dim; ++i) g_v[i] = (g_e[i] - ge_dot_e * e[i]) / cache.vnorm;

  std::vector<double> g_h1(head.hidden_dim, 0.0);
  for (int o = 0; o < head.out_dim; ++o) {
    const double* row = &head.w2[static_cast<std::size_t>(o) * head.hidden_dim];
    for (int i = 0; i < head.hidden_dim; ++i) g_h1[i] += row[i] * g_v[o];
  }
  for (int i = 0; i < head.hidden_dim; ++i)
    if (cache.h0[i] <= 0.0) g_h1[i] *= kEmbedLeakySlope;
  for (int o = 0; o < head.hidden_dim; ++o) {
    const double* row = &head.w1[static_cast<std::size_t>(o) * head.in_dim];
    for (int i = 0; i < head.in_dim; ++i) g_patch[i] += row[i] * g_h1[o];
  }
  return g_patch;
}

// ---------------------------------------------------------------------------
// Cost matrix and Sinkhorn transport plan
// ---------------------------------------------------------------------------

/// C_ij = exp(<anchor_i, candidate_j> / beta) off-diagonal; the diagonal is
/// +inf, flagging the positive pair as excluded from transport.
inline std::vector<double> cost_matrix(const std::vector<std::vector<double>>& anchors,
                                       const std::vector<std::vector<double>>& candidates,
                                       double beta_ot) {
  const std::size_t n = anchors.size();
  if (n < 2) throw ArgumentError("cost_matrix: need at least 2 embeddings");
  if (candidates.size() != n)
    throw ShapeError("cost_matrix: anchor/candidate counts differ");
  std::vector<double> c(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) {
        c[i * n + j] = std::numeric_limits<double>::infinity();
        continue;
      }
      double d = 0.0;
      for (std::size_t k = 0; k < anchors[i].size(); ++k) d += anchors[i][k] * candidates[j][k];
      c[i * n + j] = std::exp(d / beta_ot);
    }
  return c;
}

struct TransportPlan {
  int n = 0;
  std::vector<double> a;  // n x n, zero diagonal
  int iterations_used = 0;
  double marginal_residual = 0.0;
  bool converged = false;

  double at(int i, int j) const { return a[static_cast<std::size_t>(i) * n + j]; }
};

/// Sinkhorn scaling on a log-kernel with excluded diagonal (logk diagonal
/// must be -inf). The returned plan is row-normalized by construction, so
/// the N=2 case is the exact anti-diagonal permutation.
inline TransportPlan sinkhorn_log_kernel(const std::vector<double>& logk, int n,
                                         const MonceConfig& cfg) {
  if (n < 2) throw ArgumentError("sinkhorn: need n >= 2");
  const double neg_inf = -std::numeric_limits<double>::infinity();

  // Plain-domain scaling unless some kernel entry would underflow.
  double min_logk = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) min_logk = std::min(min_logk, logk[static_cast<std::size_t>(i) * n + j]);
  const bool log_domain = min_logk < -690.0;  // exp() below ~1e-300

  TransportPlan plan;
  plan.n = n;
  plan.a.assign(static_cast<std::size_t>(n) * n, 0.0);

  if (!log_domain) {
    std::vector<double> k(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j) k[static_cast<std::size_t>(i) * n + j] =
            std::exp(logk[static_cast<std::size_t>(i) * n + j]);
    std::vector<double> v(n, 1.0);
    std::vector<double> num(static_cast<std::size_t>(n) * n);
    for (int it = 1; it <= cfg.sinkhorn_max_iters; ++it) {
      plan.iterations_used = it;
      // Row normalization, fused with plan materialization.
      for (int i = 0; i < n; ++i) {
        double r = 0.0;
        for (int j = 0; j < n; ++j) {
          num[static_cast<std::size_t>(i) * n + j] = k[static_cast<std::size_t>(i) * n + j] * v[j];
          r += num[static_cast<std::size_t>(i) * n + j];
        }
        if (!(r > 0.0)) throw NumericalError("sinkhorn: zero row mass");
        for (int j = 0; j < n; ++j)
          plan.a[static_cast<std::size_t>(i) * n + j] = num[static_cast<std::size_t>(i) * n + j] / r;
      }
      double residual = 0.0;
      for (int j = 0; j < n; ++j) {
        double col = 0.0;
        for (int i = 0; i < n; ++i) col += plan.a[static_cast<std::size_t>(i) * n + j];
        residual = std::max(residual, std::abs(col - 1.0));
      }
      for (int i = 0; i < n; ++i) {
        double row = 0.0;
        for (int j = 0; j < n; ++j) row += plan.a[static_cast<std::size_t>(i) * n + j];
        residual = std::max(residual, std::abs(row - 1.0));
      }
      plan.marginal_residual = residual;
      if (residual < cfg.sinkhorn_tol) {
        plan.converged = true;
        return plan;
      }
      for (int j = 0; j < n; ++j) {
        double col = 0.0;
        for (int i = 0; i < n; ++i) col += plan.a[static_cast<std::size_t>(i) * n + j];
        v[j] /= col;
      }
    }
    return plan;  // converged = false; caller decides
  }

  // Log-domain path: identical iteration on log-scaled duals.
  auto logsumexp_row = [&](const std::vector<double>& row_vals) {
    double m = neg_inf;
    for (double x : row_vals) m = std::max(m, x);
    if (m == neg_inf) return neg_inf;
    double s = 0.0;
    for (double x : row_vals) s += std::exp(x - m);
    return m + std::log(s);
  };
  std::vector<double> logv(n, 0.0);
  std::vector<double> lognum(static_cast<std::size_t>(n) * n, neg_inf);
  std::vector<double> row_vals(n);
  for (int it = 1; it <= cfg.sinkhorn_max_iters; ++it) {
    plan.iterations_used = it;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double lk = logk[static_cast<std::size_t>(i) * n + j];
        lognum[static_cast<std::size_t>(i) * n + j] = (i == j) ? neg_inf : lk + logv[j];
        row_vals[j] = lognum[static_cast<std::size_t>(i) * n + j];
      }
      const double logr = logsumexp_row(row_vals);
      if (logr == neg_inf) throw NumericalError("sinkhorn: zero row mass");
      for (int j = 0; j < n; ++j) {
        const double ln = lognum[static_cast<std::size_t>(i) * n + j];
        plan.a[static_cast<std::size_t>(i) * n + j] = (ln == neg_inf) ? 0.0 : std::exp(ln - logr);
      }
    }
    double residual = 0.0;
    std::vector<double> col(n, 0.0);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) col[j] += plan.a[static_cast<std::size_t>(i) * n + j];
      residual = std::max(residual, std::abs(col[j] - 1.0));
    }
    for (int i = 0; i < n; ++i) {
      double row = 0.0;
      for (int j = 0; j < n; ++j) row += plan.a[static_cast<std::size_t>(i) * n + j];
      residual = std::max(residual, std::abs(row - 1.0));
    }
    plan.marginal_residual = residual;
    if (residual < cfg.sinkhorn_tol) {
      plan.converged = true;
      return plan;
    }
    for (int j = 0; j < n; ++j)
      if (col[j] > 0.0) logv[j] -= std::log(col[j]);
  }
  return plan;
}

/// Entropic-OT plan for a cost matrix with excluded (infinite) diagonal:
/// kernel K_ij = exp(-C_ij / epsilon) off-diagonal, K_ii = 0.
inline TransportPlan sinkhorn(const std::vector<double>& cost, int n, const MonceConfig& cfg) {
  if (n < 2) throw ArgumentError("sinkhorn: need n >= 2");
  if (static_cast<std::size_t>(n) * n != cost.size())
    throw ShapeError("sinkhorn: cost size does not match n");
  std::vector<double> logk(cost.size(), -std::numeric_limits<double>::infinity());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double c = cost[static_cast<std::size_t>(i) * n + j];
      if (!std::isfinite(c))
        throw ArgumentError("sinkhorn: off-diagonal costs must be finite");
      logk[static_cast<std::size_t>(i) * n + j] = -c / cfg.sinkhorn_epsilon;
    }
  return sinkhorn_log_kernel(logk, n, cfg);
}

// ---------------------------------------------------------------------------
// Contrastive objectives
// ---------------------------------------------------------------------------

struct MonceResult {
  double loss = 0.0;
  std::vector<std::vector<double>> grad_s_emb;
};

/// loss = -sum_i log[ e^{p_i} / (e^{p_i} + Q(N-1) sum_{j!=i} a_ij e^{n_ij}) ]
/// with p_i = <s_i,g_i>/tau, n_ij = <s_i,g_j>/tau. The plan and the G side
/// are constants under differentiation; the gradient is with respect to the
/// anchor embeddings only.
inline MonceResult monce_loss(const std::vector<std::vector<double>>& s_emb,
                              const std::vector<std::vector<double>>& g_emb,
                              const TransportPlan& plan, const MonceConfig& cfg) {
  const std::size_t n = s_emb.size();
  if (g_emb.size() != n || static_cast<std::size_t>(plan.n) != n)
    throw ShapeError("monce_loss: embedding/plan size mismatch");
  const std::size_t d = n ? s_emb[0].size() : 0;
  for (const auto& e : s_emb)
    if (e.size() != d) throw ShapeError("monce_loss: ragged s embeddings");
  for (const auto& e : g_emb)
    if (e.size() != d) throw ShapeError("monce_loss: ragged g embeddings");

  MonceResult r;
  r.grad_s_emb.assign(n, std::vector<double>(d, 0.0));
  const double neg_scale = cfg.q * static_cast<double>(n - 1);

  std::vector<double> z(n);       // shifted log-terms, z[i] is the positive
  std::vector<double> sims(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double dp = 0.0;
      for (std::size_t k = 0; k < d; ++k) dp += s_emb[i][k] * g_emb[j][k];
      sims[j] = dp / cfg.tau;
    }
    const double p = sims[i];
    double m = p;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double w = neg_scale * plan.at(static_cast<int>(i), static_cast<int>(j));
      z[j] = w > 0.0 ? std::log(w) + sims[j] : -std::numeric_limits<double>::infinity();
      m = std::max(m, z[j]);
    }
    double denom = std::exp(p - m);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || z[j] == -std::numeric_limits<double>::infinity()) continue;
      denom += std::exp(z[j] - m);
    }
    r.loss += -p + m + std::log(denom);

    const double sigma_pos = std::exp(p - m) / denom;
    for (std::size_t k = 0; k < d; ++k)
      r.grad_s_emb[i][k] += (sigma_pos - 1.0) * g_emb[i][k] / cfg.tau;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || z[j] == -std::numeric_limits<double>::infinity()) continue;
      const double sigma = std::exp(z[j] - m) / denom;
      for (std::size_t k = 0; k < d; ++k) r.grad_s_emb[i][k] += sigma * g_emb[j][k] / cfg.tau;
    }
  }
  return r;
}

/// Unmodulated patch contrastive loss; the uniform-plan reduction of MoNCE
/// and the reference oracle for it. N = 1 has no negatives and scores 0.
inline double patchnce_loss(const std::vector<std::vector<double>>& s_emb,
                            const std::vector<std::vector<double>>& g_emb, double tau) {
  const std::size_t n = s_emb.size();
  if (g_emb.size() != n) throw ShapeError("patchnce_loss: embedding counts differ");
  if (n <= 1) return 0.0;
  double loss = 0.0;
  std::vector<double> sims(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double dp = 0.0;
      for (std::size_t k = 0; k < s_emb[i].size(); ++k) dp += s_emb[i][k] * g_emb[j][k];
      sims[j] = dp / tau;
    }
    double m = sims[0];
    for (double v : sims) m = std::max(m, v);
    double denom = 0.0;
    for (double v : sims) denom += std::exp(v - m);
    loss += -sims[i] + m + std::log(denom);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Per-map LIP loss
// ---------------------------------------------------------------------------

struct LipResult {
  double loss = 0.0;
  FeatureStack grad_s;
  bool all_converged = true;
  double max_residual = 0.0;
};

/// (1/L) sum_k MoNCE(G_k, S_k) over all maps, with the gradient chained
/// through the S-side embeddings back to the S maps. Passing fixed_plans
/// holds the transport plans at externally computed values; the plan is a
/// constant under differentiation, so this is the loss surface whose exact
/// derivative the analytic gradient is.
inline LipResult lip_loss(const FeatureStack& g, const FeatureStack& s, const EmbeddingHead& head,
                          const MonceConfig& cfg,
                          const std::vector<TransportPlan>* fixed_plans = nullptr) {
  check_aligned(g, s, "lip_loss");
  if (g.empty()) throw ArgumentError("lip_loss: empty stacks");
  if (fixed_plans && fixed_plans->size() != g.size())
    throw ShapeError("lip_loss: fixed plan count does not match map count");
  const double l_count = static_cast<double>(g.size());

  LipResult res;
  res.grad_s.reserve(s.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    PatchGrid gs, gg;
    try {
      gg = extract_patches(g[k], cfg.patch_size, cfg.stride);
      gs = extract_patches(s[k], cfg.patch_size, cfg.stride);
    } catch (const ArgumentError& e) {
      throw ArgumentError("lip_loss: map " + std::to_string(k) + ": " + e.what() +
                          " (enlarge the image or shrink patch_size/stride)");
    }
    if (gs.count() < 2)
      throw ArgumentError("lip_loss: map " + std::to_string(k) + " yields " +
                          std::to_string(gs.count()) +
                          " patch(es); need at least 2 (enlarge the image or shrink "
                          "patch_size/stride)");

    std::vector<EmbedCache> caches;
    auto s_emb = embed(head, gs, &caches);
    auto g_emb = embed(head, gg, nullptr);

    TransportPlan plan;
    if (fixed_plans) {
      plan = (*fixed_plans)[k];
      if (plan.n != gs.count())
        throw ShapeError("lip_loss: fixed plan for map " + std::to_string(k) +
                         " has wrong dimension");
    } else {
      plan = sinkhorn(cost_matrix(s_emb, g_emb, cfg.beta_ot), gs.count(), cfg);
    }
    res.all_converged = res.all_converged && plan.converged;
    res.max_residual = std::max(res.max_residual, plan.marginal_residual);

    MonceResult mo = monce_loss(s_emb, g_emb, plan, cfg);
    res.loss += mo.loss / l_count;

    Tensor grad_map(1, s[k].height, s[k].width);
    for (int p = 0; p < gs.count(); ++p) {
      std::vector<double> g_e = mo.grad_s_emb[p];
      for (double& v : g_e) v /= l_count;
      std::vector<double> g_patch = embed_backward(head, caches[p], s_emb[p], g_e);
      const int r0 = (p / gs.cols) * cfg.stride;
      const int c0 = (p % gs.cols) * cfg.stride;
      std::size_t idx = 0;
      for (int dy = 0; dy < cfg.patch_size; ++dy)
        for (int dx = 0; dx < cfg.patch_size; ++dx)
          grad_map.at(0, r0 + dy, c0 + dx) += g_patch[idx++];
    }
    res.grad_s.push_back(std::move(grad_map));
  }
  return res;
}

}  // namespace mghf
