#include <gtest/gtest.h>

#include "mghf/dfe.hpp"
#include "mghf/grad_check.hpp"

using namespace mghf;

TEST(Coupling, ZeroWeightsActAsIdentity) {
  CouplingLayer layer(2, 2, 2.0);
  Rng rng(3);
  Tensor x = random_tensor(rng, 4, 5, 5);
  Tensor y = coupling_forward(layer, x);
  EXPECT_LT(max_abs_diff(x, y), 1e-15);
}

TEST(Coupling, InverseRecoversInputAtRandomWeights) {
  Rng rng(5);
  for (int trial = 0; trial < 8; ++trial) {
    CouplingLayer layer(3, 4, 2.0);
    for (ShallowCnn* net : {&layer.scale_net, &layer.translate_net, &layer.mirror_net}) {
      net->conv1.randomize(rng, 0.5);
      net->conv2.randomize(rng, 0.5);
    }
    Tensor x = random_tensor(rng, 6, 6, 6);
    Tensor y = coupling_forward(layer, x);
    Tensor back = coupling_inverse(layer, y);
    EXPECT_LT(max_abs_diff(x, back), 1e-10);
  }
}

TEST(Coupling, LogScaleStaysClamped) {
  Rng rng(9);
  CouplingLayer layer(2, 3, 0.75);
  for (ShallowCnn* net : {&layer.scale_net, &layer.translate_net, &layer.mirror_net}) {
    net->conv1.randomize(rng, 3.0);
    net->conv2.randomize(rng, 3.0);
  }
  Tensor x = random_tensor(rng, 4, 5, 5, -5.0, 5.0);
  CouplingCache cache;
  coupling_forward(layer, x, &cache);
  for (double v : cache.s.data) EXPECT_LE(std::abs(v), 0.75);
}

TEST(Coupling, BackwardMatchesFiniteDifference) {
  Rng rng(13);
  CouplingLayer layer(2, 3, 2.0);
  for (ShallowCnn* net : {&layer.scale_net, &layer.translate_net, &layer.mirror_net}) {
    net->conv1.randomize(rng, 0.4);
    net->conv2.randomize(rng, 0.4);
  }
  Tensor x = random_tensor(rng, 4, 4, 4);
  Tensor cot = random_tensor(rng, 4, 4, 4);
  auto f = [&layer, &cot](const Tensor& t) { return dot(cot, coupling_forward(layer, t)); };
  CouplingCache cache;
  coupling_forward(layer, x, &cache);
  Tensor analytic = coupling_backward(layer, cache, cot, nullptr);
  Tensor fd = finite_diff_grad(f, x, 1e-6);
  EXPECT_LT(relative_error(analytic, fd), 1e-7);
}

TEST(Coupling, ParamGradsMatchFiniteDifference) {
  Rng rng(17);
  CouplingLayer layer(2, 2, 2.0);
  for (ShallowCnn* net : {&layer.scale_net, &layer.translate_net, &layer.mirror_net}) {
    net->conv1.randomize(rng, 0.4);
    net->conv2.randomize(rng, 0.4);
  }
  Tensor x = random_tensor(rng, 4, 3, 3);
  Tensor cot = random_tensor(rng, 4, 3, 3);

  CouplingCache cache;
  coupling_forward(layer, x, &cache);
  CouplingLayer grads(2, 2, 2.0);
  coupling_backward(layer, cache, cot, &grads);

  const double eps = 1e-6;
  auto probe_param = [&](double* w, double analytic) {
    const double keep = *w;
    *w = keep + eps;
    const double fp = dot(cot, coupling_forward(layer, x));
    *w = keep - eps;
    const double fm = dot(cot, coupling_forward(layer, x));
    *w = keep;
    EXPECT_NEAR(analytic, (fp - fm) / (2 * eps), 1e-5);
  };
  probe_param(&layer.scale_net.conv1.w[0], grads.scale_net.conv1.w[0]);
  probe_param(&layer.scale_net.conv2.w[3], grads.scale_net.conv2.w[3]);
  probe_param(&layer.translate_net.conv2.w[1], grads.translate_net.conv2.w[1]);
  probe_param(&layer.mirror_net.conv1.b[0], grads.mirror_net.conv1.b[0]);
  probe_param(&layer.mirror_net.conv2.w[5], grads.mirror_net.conv2.w[5]);
}

TEST(Dfe, ShapesAndChannelSplit) {
  DfeModel m = make_dfe(8, 2);
  Rng rng(23);
  randomize_all(m, rng, 0.2);
  Tensor img = random_tensor(rng, 3, 7, 9, 0.0, 1.0);
  FeatureStack maps = dfe_extract(m, img);
  ASSERT_EQ(maps.size(), 8u);
  for (const Tensor& map : maps) {
    EXPECT_EQ(map.channels, 1);
    EXPECT_EQ(map.height, 7);
    EXPECT_EQ(map.width, 9);
  }
  EXPECT_THROW(make_dfe(7, 1), ArgumentError);
  EXPECT_THROW(make_dfe(0, 1), ArgumentError);
  Tensor gray(1, 7, 9);
  EXPECT_THROW(dfe_extract(m, gray), ShapeError);
}

TEST(Dfe, SplitMergeRoundTrip) {
  Rng rng(29);
  Tensor t = random_tensor(rng, 5, 3, 4);
  Tensor back = merge_channels(split_channels(t));
  EXPECT_EQ(max_abs_diff(t, back), 0.0);
}

TEST(Dfe, IdentityInitMakesCouplingsTransparent) {
  DfeModel m = make_dfe(6, 3);
  Rng rng(31);
  init_identity(m, rng);
  Tensor img = random_tensor(rng, 3, 5, 5, 0.0, 1.0);
  DfeForwardCache cache = dfe_forward_cached(m, img);
  EXPECT_LT(max_abs_diff(cache.expanded, cache.features), 1e-14);
}

TEST(Dfe, DeterministicExtraction) {
  DfeModel m = make_dfe(4, 1);
  Rng rng(37);
  randomize_all(m, rng, 0.3);
  Tensor img = random_tensor(rng, 3, 6, 6, 0.0, 1.0);
  FeatureStack a = dfe_extract(m, img);
  FeatureStack b = dfe_extract(m, img);
  EXPECT_EQ(stack_max_abs_diff(a, b), 0.0);
}

TEST(Dfe, VjpMatchesFiniteDifference) {
  Rng rng(41);
  DfeModel m = make_dfe(4, 2);
  randomize_all(m, rng, 0.25);
  Tensor img = random_tensor(rng, 3, 5, 5, 0.0, 1.0);
  FeatureStack cot;
  for (int i = 0; i < 4; ++i) cot.push_back(random_tensor(rng, 1, 5, 5));
  const Tensor cot_merged = merge_channels(cot);
  auto f = [&m, &cot_merged](const Tensor& x) {
    return dot(cot_merged, dfe_forward_cached(m, x).features);
  };
  Tensor analytic = dfe_vjp(m, img, cot);
  Tensor fd = finite_diff_grad(f, img, 1e-6);
  EXPECT_LT(relative_error(analytic, fd), 1e-6);
}

TEST(Dfe, ParamGradsFlowThroughTraining) {
  Rng rng(43);
  DfeModel m = make_dfe(4, 1);
  randomize_all(m, rng, 0.25);
  Tensor img = random_tensor(rng, 3, 5, 5, 0.0, 1.0);
  DfeForwardCache cache = dfe_forward_cached(m, img);
  Tensor cot = random_tensor(rng, 4, 5, 5);
  DfeModel grads = zeros_like(m);
  dfe_backward(m, cache, cot, &grads);

  const double eps = 1e-6;
  auto probe = [&](double* w, double analytic) {
    const double keep = *w;
    *w = keep + eps;
    const double fp = dot(cot, dfe_forward_cached(m, img).features);
    *w = keep - eps;
    const double fm = dot(cot, dfe_forward_cached(m, img).features);
    *w = keep;
    EXPECT_NEAR(analytic, (fp - fm) / (2 * eps), 1e-5);
  };
  probe(&m.expand.w[0], grads.expand.w[0]);
  probe(&m.expand.b[1], grads.expand.b[1]);
  probe(&m.blocks[0].scale_net.conv1.w[2], grads.blocks[0].scale_net.conv1.w[2]);
  probe(&m.blocks[0].mirror_net.conv2.w[0], grads.blocks[0].mirror_net.conv2.w[0]);
}

TEST(Dfe, ParamCountHandArithmeticSmall) {
  // N=8: expand 8*3*9+8 = 224. Split 4, hidden 4: each shallow CNN is
  // (4*4*9+4)*2 = 296, three nets per block -> 888. Total 1112.
  DfeModel m = make_dfe(8, 1);
  EXPECT_EQ(m.param_count(), 1112u);
  DfeParamReport r = dfe_param_report(m);
  EXPECT_EQ(r.param_count, 1112u);
  EXPECT_EQ(r.bytes, 4448u);
  // MACs per pixel: expand 8*3*9 = 216; per net 4*4*9 *2 = 288, x3 = 864.
  EXPECT_EQ(r.flops_per_pixel, 216u + 864u);
}

TEST(Dfe, ParamCountAtFullWidth) {
  // N=128, one block, hidden = split = 64:
  // expand 128*3*9+128 = 3584; per CNN (64*64*9+64)*2 = 73856; x3 = 221568.
  DfeModel m = make_dfe(128, 1);
  EXPECT_EQ(m.param_count(), 225152u);
  EXPECT_EQ(dfe_param_report(m).bytes, 4u * 225152u);
}

TEST(Dfe, ParamRegistryNamesAndShapes) {
  DfeModel m = make_dfe(4, 2);
  auto refs = collect_params(m);
  ASSERT_EQ(refs.size(), 2u + 2u * 12u);
  EXPECT_EQ(refs[0].name, "expand.w");
  EXPECT_EQ(refs[0].shape, (std::vector<int>{4, 3, 3, 3}));
  EXPECT_EQ(refs[1].name, "expand.b");
  EXPECT_EQ(refs[2].name, "block0.i1.conv1.w");
  EXPECT_EQ(refs.back().name, "block1.i3.conv2.b");
  std::size_t total = 0;
  for (const auto& r : refs) total += r.data->size();
  EXPECT_EQ(total, m.param_count());
}
