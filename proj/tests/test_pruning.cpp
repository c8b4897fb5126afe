#include <gtest/gtest.h>

#include <cmath>

#include "mghf/pruning.hpp"

using namespace mghf;

namespace {

Tensor map_from(std::initializer_list<double> values, int h, int w) {
  Tensor t(1, h, w);
  std::copy(values.begin(), values.end(), t.data.begin());
  return t;
}

}  // namespace

TEST(Entropy, ConstantMapScoresZero) {
  Tensor t(1, 4, 4);
  std::fill(t.data.begin(), t.data.end(), 3.7);
  EXPECT_EQ(normalized_entropy(t, 64), 0.0);
}

TEST(Entropy, FrozenReferenceValue) {
  // Independently computed: values [0,0,0,1,1,2,3,3] over 4 buckets give
  // counts [3,2,1,2]; Shannon entropy / log(4) = 0.95281953111478324.
  Tensor t = map_from({0, 0, 0, 1, 1, 2, 3, 3}, 2, 4);
  EXPECT_NEAR(normalized_entropy(t, 4), 0.95281953111478324, 1e-15);
}

TEST(Entropy, TwoEqualBucketsGiveLog2Ratio) {
  Tensor t = map_from({0, 0, 0, 1, 1, 1}, 1, 6);
  EXPECT_NEAR(normalized_entropy(t, 4), std::log(2.0) / std::log(4.0), 1e-15);
}

TEST(Entropy, UniformSixteenBucketsScoreOne) {
  // 64 values at bucket centers (k + 0.5)/16 each appearing four times.
  // After min-max normalization the 16 distinct values still land in 16
  // distinct buckets, so every bucket holds exactly 4.
  Tensor t(1, 8, 8);
  for (int k = 0; k < 16; ++k)
    for (int r = 0; r < 4; ++r) t.data[k * 4 + r] = (k + 0.5) / 16.0;
  EXPECT_NEAR(normalized_entropy(t, 16), 1.0, 1e-12);
}

TEST(Entropy, MaxValueLandsInLastBucket) {
  Tensor t = map_from({0.0, 1.0}, 1, 2);
  EXPECT_NEAR(normalized_entropy(t, 64), std::log(2.0) / std::log(64.0), 1e-15);
}

TEST(Entropy, RejectsDegenerateBinCount) {
  Tensor t(1, 2, 2);
  EXPECT_THROW(normalized_entropy(t, 1), ArgumentError);
  EXPECT_THROW(normalized_entropy(t, 0), ArgumentError);
}

TEST(Importance, CombinedFormulaTable) {
  // I = ((1 - Hg) + (1 - Hs)) / 2, w = (1 + alpha * I)^gamma.
  struct Row {
    double hg, hs, alpha, gamma, imp, w;
  };
  const Row rows[] = {
      {0.0, 0.0, 1.0, 1.0, 1.0, 2.0},
      {1.0, 1.0, 1.0, 1.0, 0.0, 1.0},
      {0.5, 0.25, 1.0, 1.0, 0.625, 1.625},
      {0.5, 0.25, 2.0, 1.0, 0.625, 2.25},
      {0.5, 0.25, 1.0, 2.0, 0.625, 2.640625},
      {0.2, 0.8, 0.5, 3.0, 0.5, 1.953125},
      {1.0, 0.0, 1.0, 1.0, 0.5, 1.5},
      {0.0, 1.0, 1.0, 1.0, 0.5, 1.5},
      {0.75, 0.75, 1.0, 1.0, 0.25, 1.25},
      {0.9, 0.9, 1.0, 1.0, 0.09999999999999998, 1.1},
      {0.1, 0.3, 1.0, 1.0, 0.8, 1.8},
      {0.1, 0.3, 0.0, 1.0, 0.8, 1.0},
      {0.1, 0.3, 1.0, 0.0, 0.8, 1.0},
      {0.5, 0.5, 1.0, 1.0, 0.5, 1.5},
      {0.5, 0.5, 3.0, 1.0, 0.5, 2.5},
      {0.5, 0.5, 1.0, 3.0, 0.5, 3.375},
      {0.25, 0.75, 1.0, 2.0, 0.5, 2.25},
      {0.0, 0.5, 1.0, 1.0, 0.75, 1.75},
      {1.0, 0.5, 2.0, 2.0, 0.25, 2.25},
      {0.6, 0.2, 1.0, 1.0, 0.6, 1.6},
  };
  for (const Row& r : rows) {
    EXPECT_NEAR(combined_from_entropies(r.hg, r.hs), r.imp, 1e-15);
    EXPECT_NEAR(importance_weight(combined_from_entropies(r.hg, r.hs), r.alpha, r.gamma), r.w,
                1e-12);
  }
}

TEST(Selection, TopMBreaksTiesTowardLowerIndex) {
  const std::vector<double> imp = {0.5, 0.9, 0.5, 0.9, 0.1};
  EXPECT_EQ(select_top_m(imp, 2), (std::vector<int>{1, 3}));
  EXPECT_EQ(select_top_m(imp, 3), (std::vector<int>{0, 1, 3}));
  EXPECT_EQ(select_top_m(imp, 5), (std::vector<int>{0, 1, 2, 3, 4}));
  EXPECT_THROW(select_top_m(imp, 0), ArgumentError);
  EXPECT_THROW(select_top_m(imp, 6), ArgumentError);
}

TEST(Selection, AllEqualKeepsLowestIndices) {
  const std::vector<double> imp = {0.3, 0.3, 0.3, 0.3};
  EXPECT_EQ(select_top_m(imp, 2), (std::vector<int>{0, 1}));
}

TEST(Profile, DefaultMIsCeilHalf) {
  Rng rng(51);
  FeatureStack g, s;
  for (int i = 0; i < 5; ++i) {
    g.push_back(random_tensor(rng, 1, 4, 4));
    s.push_back(random_tensor(rng, 1, 4, 4));
  }
  PruningConfig cfg;
  ImportanceProfile p = compute_profile(g, s, cfg);
  EXPECT_EQ(p.selected.size(), 3u);  // ceil(5/2)
  EXPECT_EQ(p.weights.size(), 3u);
  for (std::size_t i = 1; i < p.selected.size(); ++i)
    EXPECT_LT(p.selected[i - 1], p.selected[i]);
}

TEST(Profile, LowEntropyMapsWin) {
  // Map 0: nearly constant (low entropy, high importance). Map 1: spread
  // uniformly (high entropy). With m=1 the constant-ish map is selected.
  Tensor lowent(1, 4, 4);
  for (int i = 0; i < 16; ++i) lowent.data[i] = i == 0 ? 1.0 : 0.0;
  Tensor highent(1, 4, 4);
  for (int i = 0; i < 16; ++i) highent.data[i] = (i + 0.5) / 16.0;
  FeatureStack g = {lowent, highent};
  FeatureStack s = {lowent, highent};
  PruningConfig cfg;
  cfg.bins = 16;
  cfg.m = 1;
  ImportanceProfile p = compute_profile(g, s, cfg);
  EXPECT_EQ(p.selected, (std::vector<int>{0}));
  EXPECT_GT(p.combined[0], p.combined[1]);
}

TEST(Profile, ApplyWeightsScalesSelectedMaps) {
  Rng rng(53);
  FeatureStack g, s;
  for (int i = 0; i < 4; ++i) {
    g.push_back(random_tensor(rng, 1, 3, 3));
    s.push_back(random_tensor(rng, 1, 3, 3));
  }
  PruningConfig cfg;
  cfg.m = 2;
  ImportanceProfile p = compute_profile(g, s, cfg);
  auto [gw, sw] = apply_weights(g, s, p);
  ASSERT_EQ(gw.size(), 2u);
  for (std::size_t k = 0; k < p.selected.size(); ++k) {
    Tensor expect = scaled(g[p.selected[k]], p.weights[k]);
    EXPECT_EQ(max_abs_diff(gw[k], expect), 0.0);
    expect = scaled(s[p.selected[k]], p.weights[k]);
    EXPECT_EQ(max_abs_diff(sw[k], expect), 0.0);
  }
}

TEST(Profile, WeightsAreAtLeastOneForNonNegativeImportance) {
  // With alpha=1, gamma=1 and importance in [0,1], w = 1 + I in [1,2].
  Rng rng(57);
  FeatureStack g, s;
  for (int i = 0; i < 6; ++i) {
    g.push_back(random_tensor(rng, 1, 5, 5, 0.0, 1.0));
    s.push_back(random_tensor(rng, 1, 5, 5, 0.0, 1.0));
  }
  ImportanceProfile p = compute_profile(g, s, PruningConfig{});
  for (double w : p.weights) {
    EXPECT_GE(w, 1.0);
    EXPECT_LE(w, 2.0);
  }
}
