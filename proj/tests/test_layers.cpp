#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cgg/nn/conv1d.hpp"
#include "cgg/nn/gat.hpp"
#include "cgg/nn/gradcheck.hpp"
#include "cgg/nn/gru.hpp"
#include "cgg/nn/head.hpp"

using namespace cgg;
using namespace cgg::nn;
using Md = Mat<double>;

namespace {

Md random_md(Index r, Index c, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Md m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = u(rng);
  return m;
}

}  // namespace

// --- conv1d

TEST(Conv1d, SumKernel) {
  auto l = make_conv_layer<double>(1, 1, 3);
  l.weight << 1, 1, 1;
  Md x(1, 5);
  x << 1, 2, 3, 4, 5;
  const Md y = conv1d_forward(l, x, 1);
  ASSERT_EQ(y.cols(), 3);
  EXPECT_EQ(y(0, 0), 6);
  EXPECT_EQ(y(0, 1), 9);
  EXPECT_EQ(y(0, 2), 12);
}

TEST(Conv1d, IdentityKernelCrops) {
  auto l = make_conv_layer<double>(1, 1, 3);
  l.weight << 0, 1, 0;
  std::mt19937_64 rng(1);
  const Md x = random_md(1, 20, rng);
  const Md y = conv1d_forward(l, x, 1);
  ASSERT_EQ(y.cols(), 18);
  for (Index i = 0; i < 18; ++i) EXPECT_EQ(y(0, i), x(0, i + 1));
}

TEST(Conv1d, InterleavedSequencesAreIndependent) {
  std::mt19937_64 rng(2);
  auto l = make_conv_layer<double>(2, 3, 3);
  l.weight = random_md(3, 6, rng);
  l.bias = random_md(3, 1, rng);
  const Index s = 4, len = 9;
  const Md x = random_md(2, len * s, rng);
  const Md y = conv1d_forward(l, x, s);
  for (Index seq = 0; seq < s; ++seq) {
    Md xs(2, len);
    for (Index t = 0; t < len; ++t) xs.col(t) = x.col(t * s + seq);
    const Md ys = conv1d_forward(l, xs, 1);
    for (Index t = 0; t < len - 2; ++t)
      for (Index o = 0; o < 3; ++o) EXPECT_NEAR(y(o, t * s + seq), ys(o, t), 1e-14);
  }
}

TEST(Conv1d, StackLengths) {
  auto l1 = make_conv_layer<double>(1, 32, 3);
  auto l2 = make_conv_layer<double>(32, 32, 3);
  const Index s = 2;
  Md x = Md::Zero(1, 160 * s);
  x = conv1d_forward(l1, x, s);
  EXPECT_EQ(x.cols() / s, 158);
  x = conv1d_forward(l2, x, s);
  EXPECT_EQ(x.cols() / s, 156);
  x = conv1d_forward(l2, x, s);
  EXPECT_EQ(x.cols() / s, 154);
  EXPECT_EQ(x.rows(), 32);
}

TEST(Conv1d, ShapeErrors) {
  auto l = make_conv_layer<double>(2, 1, 3);
  EXPECT_THROW(conv1d_forward(l, Md::Zero(1, 10), 1), ShapeError);
  EXPECT_THROW(conv1d_forward(l, Md::Zero(2, 2), 1), ShapeError);
}

// --- GRU

TEST(Gru, ZeroWeightsHalveState) {
  const auto l = make_gru_layer<double>(3, 4);
  std::mt19937_64 rng(3);
  const Md h = random_md(4, 2, rng);
  const Md x = random_md(3, 2, rng);
  const Md out = gru_step(l, x, h);
  for (Index i = 0; i < out.size(); ++i) EXPECT_DOUBLE_EQ(out(i), 0.5 * h(i));
}

TEST(Gru, ZeroInputZeroStateStaysZero) {
  std::mt19937_64 rng(4);
  auto l = make_gru_layer<double>(3, 4);
  l.wz = random_md(4, 7, rng);
  l.wr = random_md(4, 7, rng);
  l.wc = random_md(4, 7, rng);
  EXPECT_TRUE(gru_step(l, Md::Zero(3, 5), Md::Zero(4, 5)).isZero(0.0));
}

TEST(Gru, StateStaysBounded) {
  std::mt19937_64 rng(5);
  auto l = make_gru_layer<double>(256, 256);
  for (auto* w : {&l.wz, &l.wr, &l.wc}) *w = random_md(256, 512, rng, -3, 3);
  for (auto* b : {&l.bz, &l.br, &l.bc}) *b = random_md(256, 1, rng, -3, 3);
  Md h = random_md(256, 3, rng);
  for (int t = 0; t < 20; ++t) {
    h = gru_step(l, random_md(256, 3, rng, -5, 5), h);
    ASSERT_LE(h.cwiseAbs().maxCoeff(), 1.0);
  }
}

TEST(Gru, LengthOneSequenceIsOneStep) {
  std::mt19937_64 rng(6);
  auto l = make_gru_layer<double>(2, 3);
  for (auto* w : {&l.wz, &l.wr, &l.wc}) *w = random_md(3, 5, rng);
  for (auto* b : {&l.bz, &l.br, &l.bc}) *b = random_md(3, 1, rng);
  const Md x = random_md(2, 4, rng);
  const Md a = gru_sequence<double>({l}, x, 4);
  const Md b = gru_step(l, x, Md::Zero(3, 4));
  EXPECT_TRUE(a.isApprox(b, 1e-15));
}

TEST(Gru, ZeroParamsZeroSequence) {
  const auto l = make_gru_layer<double>(2, 3);
  const Md out = gru_sequence<double>({l, make_gru_layer<double>(3, 3)}, Md::Zero(2, 10 * 4), 4);
  EXPECT_EQ(out.rows(), 3);
  EXPECT_EQ(out.cols(), 4);
  EXPECT_TRUE(out.isZero(0.0));
}

TEST(Gru, SequencesMatchStepLoop) {
  std::mt19937_64 rng(7);
  auto l = make_gru_layer<double>(2, 3);
  for (auto* w : {&l.wz, &l.wr, &l.wc}) *w = random_md(3, 5, rng);
  const Index s = 3, len = 6;
  const Md x = random_md(2, s * len, rng);
  const Md all = gru_layer_forward(l, x, s);
  Md h = Md::Zero(3, s);
  for (Index t = 0; t < len; ++t) {
    h = gru_step(l, Md(x.middleCols(t * s, s)), h);
    EXPECT_TRUE(all.middleCols(t * s, s).isApprox(h, 1e-13));
  }
}

// --- GAT

TEST(Gat, IdenticalFeaturesGiveUniformAttention) {
  std::mt19937_64 rng(8);
  auto l = make_gat_layer<double>(3, 4);
  l.weight = random_md(4, 3, rng);
  l.attn = random_md(8, 1, rng);
  const auto g = default_sensor_graph();
  Md h(3, 8);
  const Md v = random_md(3, 1, rng);
  for (Index n = 0; n < 8; ++n) h.col(n) = v;
  std::vector<Md> alpha;
  gat_forward(l, h, g, nullptr, &alpha);
  ASSERT_EQ(alpha.size(), 1u);
  for (int i = 0; i < 8; ++i) {
    const auto nb = g.attention_neighbors(i);
    for (int j : nb) EXPECT_NEAR(alpha[0](i, j), 1.0 / static_cast<double>(nb.size()), 1e-15);
  }
}

TEST(Gat, SingleNodeSelfLoop) {
  std::mt19937_64 rng(9);
  auto l = make_gat_layer<double>(3, 2);
  l.weight = random_md(2, 3, rng);
  l.attn = random_md(4, 1, rng);
  const auto g = make_sensor_graph(1, {});
  const Md h = random_md(3, 1, rng);
  std::vector<Md> alpha;
  const Md out = gat_forward(l, h, g, nullptr, &alpha);
  EXPECT_EQ(alpha[0](0, 0), 1.0);
  const Md wh = l.weight * h;
  for (Index r = 0; r < 2; ++r) {
    const double e = wh(r, 0) > 0 ? wh(r, 0) : std::expm1(wh(r, 0));
    EXPECT_DOUBLE_EQ(out(r, 0), e);
  }
}

TEST(Gat, AttentionRowsAreSimplex) {
  const auto g = default_sensor_graph();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    auto l = make_gat_layer<double>(5, 6);
    l.weight = random_md(6, 5, rng, -3, 3);
    l.attn = random_md(12, 1, rng, -3, 3);
    std::vector<Md> alpha;
    gat_forward(l, random_md(5, 8 * 3, rng, -2, 2), g, nullptr, &alpha);
    ASSERT_EQ(alpha.size(), 3u);
    for (const auto& a : alpha)
      for (int i = 0; i < 8; ++i) {
        EXPECT_NEAR(a.row(i).sum(), 1.0, 1e-12);
        EXPECT_GE(a.row(i).minCoeff(), 0.0);
        const auto nb = g.attention_neighbors(i);
        for (int j = 0; j < 8; ++j)
          if (std::find(nb.begin(), nb.end(), j) == nb.end()) EXPECT_EQ(a(i, j), 0.0);
      }
  }
}

TEST(Gat, RelabellingPermutesOutputExactly) {
  std::mt19937_64 rng(10);
  auto l = make_gat_layer<double>(4, 5);
  l.weight = random_md(5, 4, rng);
  l.attn = random_md(10, 1, rng);
  const auto g = default_sensor_graph();
  const std::vector<int> perm = {3, 7, 0, 5, 1, 6, 2, 4};  // old node i -> new label perm[i]
  std::vector<std::pair<int, int>> edges;
  for (auto [a, b] : g.edges) edges.emplace_back(perm[a], perm[b]);
  const auto gp = make_sensor_graph(8, edges);
  const Md h = random_md(4, 8, rng);
  Md hp(4, 8);
  for (int i = 0; i < 8; ++i) hp.col(perm[i]) = h.col(i);
  const Md out = gat_forward(l, h, g);
  const Md outp = gat_forward(l, hp, gp);
  for (int i = 0; i < 8; ++i)
    for (Index r = 0; r < 5; ++r) EXPECT_EQ(out(r, i), outp(r, perm[i]));
}

// --- readout and head

TEST(MeanPool, Examples) {
  Md h(2, 2);
  h << 1, 3, 3, 5;
  const Md p = mean_pool(h, 2);
  EXPECT_EQ(p(0, 0), 2);
  EXPECT_EQ(p(1, 0), 4);
  Md same(3, 4);
  for (Index c = 0; c < 4; ++c) same.col(c) << 0.1, -2.5, 7.0;
  const Md q = mean_pool(same, 4);
  for (Index r = 0; r < 3; ++r) EXPECT_DOUBLE_EQ(q(r, 0), same(r, 0));
}

TEST(MeanPool, PermutationInvariantBitExact) {
  std::mt19937_64 rng(11);
  const Md h = random_md(6, 8, rng, -1e3, 1e3);
  std::vector<int> perm = {0, 1, 2, 3, 4, 5, 6, 7};
  const Md ref = mean_pool(h, 8);
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    Md hp(6, 8);
    for (int i = 0; i < 8; ++i) hp.col(i) = h.col(perm[i]);
    const Md out = mean_pool(hp, 8);
    for (Index r = 0; r < 6; ++r) EXPECT_EQ(out(r, 0), ref(r, 0));
  }
}

TEST(Dense, SigmoidValues) {
  auto fc = make_dense_head<double>(3);
  const Md x = Md::Ones(3, 2);
  EXPECT_EQ(dense_sigmoid(fc, x)(0, 0), 0.5);
  fc.bias(0, 0) = std::log(3.0);
  EXPECT_NEAR(dense_sigmoid(fc, x)(0, 1), 0.75, 1e-15);
  double prev = 0;
  for (double b : {0.0, 1.0, 5.0, 20.0, 40.0}) {
    fc.bias(0, 0) = b;
    const double y = dense_sigmoid(fc, x)(0, 0);
    EXPECT_GE(y, prev);
    EXPECT_LE(y, 1.0);
    prev = y;
  }
  EXPECT_GT(prev, 1.0 - 1e-12);
  EXPECT_EQ(logistic(0.0), 0.5);
  EXPECT_NEAR(logistic(std::log(3.0)), 0.75, 1e-15);
  EXPECT_GT(logistic(-800.0), -1e-300);
  EXPECT_EQ(logistic(800.0), 1.0);
}

TEST(Dropout, IdentityCases) {
  std::mt19937_64 rng(12);
  const Md x = random_md(5, 7, rng);
  EXPECT_EQ(dropout(x, 0.0, rng, true), x);
  EXPECT_EQ(dropout(x, 0.5, rng, false), x);
  EXPECT_THROW(dropout_mask<double>(2, 2, 1.0, rng), ValidationError);
}

TEST(Dropout, PreservesExpectation) {
  std::mt19937_64 rng(13);
  const Md x = Md::Constant(100, 100, 3.0);  // 10^4 draws
  const Md y = dropout(x, 0.2, rng, true);
  EXPECT_NEAR(y.mean(), 3.0, 0.05);
  const double zeros = static_cast<double>((y.array() == 0.0).count()) / 1e4;
  EXPECT_NEAR(zeros, 0.2, 0.02);
  EXPECT_TRUE(((y.array() == 0.0) || (y.array() == 3.75)).all());
}

// --- gradient checks, seed 0 (the full sweep lives in the acceptance suite)

TEST(GradCheck, EveryLayerSeedZero) {
  for (const auto& layer : grad_check_layers()) {
    const auto rep = grad_check(layer, 0);
    EXPECT_LE(rep.max_rel_err, kGradTolerance) << layer << " worst in " << rep.worst;
    EXPECT_GT(rep.checked, 0u) << layer;
  }
}

TEST(GradCheck, RelativeErrorFloor) {
  EXPECT_EQ(relative_error(1.0, 1.0), 0.0);
  EXPECT_NEAR(relative_error(1.0, 1.1), 0.1 / 1.1, 1e-15);
  EXPECT_NEAR(relative_error(1e-9, 2e-9), 1e-9 / kRelErrFloor, 1e-18);
  EXPECT_THROW(grad_check("nope", 0), ValidationError);
}
