#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "cgg/preprocess.hpp"
#include "test_support.hpp"

using namespace cgg;

TEST(FitNormalizer, SingleRecordingRange) {
  const std::vector<double> s0 = {2, 4, 6};
  const auto rec = test::make_recording(3, [&](int t, int k) { return k == 0 ? s0[t] : 1.0; });
  const auto st = fit_normalizer(std::vector{rec});
  EXPECT_EQ(st.min[0], 2.0);
  EXPECT_EQ(st.max[0], 6.0);
}

TEST(FitNormalizer, SpansRecordings) {
  const auto a = test::make_recording(2, [](int t, int) { return t == 0 ? 0.0 : 5.0; });
  const auto b = test::make_recording(2, [](int t, int) { return t == 0 ? 3.0 : 9.0; });
  const auto st = fit_normalizer(std::vector{a, b});
  EXPECT_EQ(st.min[0], 0.0);
  EXPECT_EQ(st.max[0], 9.0);
}

TEST(FitNormalizer, ConstantSensorIsDegenerate) {
  const auto rec = test::make_recording(5, [](int t, int k) { return k == 3 ? 7.0 : t; });
  const auto st = fit_normalizer(std::vector{rec});
  EXPECT_EQ(st.min[3], 7.0);
  EXPECT_EQ(st.max[3], 7.0);
  EXPECT_TRUE(st.degenerate(3));
  EXPECT_FALSE(st.degenerate(0));
  EXPECT_THROW(fit_normalizer(std::vector<RawRecording>{}), ValidationError);
}

TEST(NormalizeValue, MinMaxScaling) {
  EXPECT_EQ(normalize_value(4, 2, 6), 0.5);
  EXPECT_EQ(normalize_value(2, 2, 6), 0.0);
  EXPECT_EQ(normalize_value(6, 2, 6), 1.0);
  EXPECT_EQ(normalize_value(7, 7, 7), 0.0);
  EXPECT_EQ(normalize_value(10, 2, 6), 1.0);  // clamped
  EXPECT_EQ(normalize_value(-1, 2, 6), 0.0);
}

TEST(ReduceLR, AbsoluteDifference) {
  ChannelSeries x = ChannelSeries::Zero(2, kChannels);
  x(0, 3) = 0.8;
  x(0, 3 + 8) = 0.3;
  x(1, 0) = 1.0;
  x(1, 8 + 1) = 1.0;
  const auto y = reduce_lr(x);
  EXPECT_DOUBLE_EQ(y(0, 3), 0.5);
  EXPECT_EQ(y(1, 0), 1.0);
  EXPECT_EQ(y(1, 1), 1.0);
}

TEST(ReduceLR, IdenticalFeetGiveZero) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  ChannelSeries x(50, kChannels);
  for (int t = 0; t < 50; ++t)
    for (int k = 0; k < 8; ++k) x(t, k) = x(t, k + 8) = u(rng);
  EXPECT_TRUE(reduce_lr(x).isZero(0.0));
}

TEST(SegmentCycles, FloorCount) {
  EXPECT_EQ(segment_cycles(NodeSeries::Zero(12000, kNodes)).size(), 75u);
  EXPECT_EQ(segment_cycles(NodeSeries::Zero(159, kNodes)).size(), 0u);
  EXPECT_EQ(segment_cycles(NodeSeries::Zero(160, kNodes)).size(), 1u);
  EXPECT_THROW(segment_cycles(NodeSeries::Zero(10, kNodes), 0), ValidationError);
}

TEST(SegmentCycles, PartitionProperty) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int T : {160, 333, 800, 1599}) {
    NodeSeries s(T, kNodes);
    for (int t = 0; t < T; ++t)
      for (int n = 0; n < kNodes; ++n) s(t, n) = u(rng);
    const auto cycles = segment_cycles(s);
    ASSERT_EQ(cycles.size(), static_cast<std::size_t>(T / 160));
    for (std::size_t c = 0; c < cycles.size(); ++c) {
      ASSERT_EQ(cycles[c].rows(), kNodes);
      ASSERT_EQ(cycles[c].cols(), 160);
      for (int t = 0; t < 160; ++t)
        for (int n = 0; n < kNodes; ++n) ASSERT_EQ(cycles[c](n, t), s(static_cast<int>(c) * 160 + t, n));
    }
  }
}

TEST(SensorGraph, DefaultIsSymmetricAndConnected) {
  const auto g = default_sensor_graph();
  EXPECT_EQ(g.n_nodes, 8);
  EXPECT_TRUE(g.connected());
  for (int i = 0; i < 8; ++i)
    for (int j : g.neighbors[static_cast<std::size_t>(i)]) {
      const auto& back = g.neighbors[static_cast<std::size_t>(j)];
      EXPECT_TRUE(std::find(back.begin(), back.end(), i) != back.end());
      EXPECT_NE(i, j);
    }
  const auto an = g.attention_neighbors(0);
  EXPECT_TRUE(std::is_sorted(an.begin(), an.end()));
  EXPECT_TRUE(std::find(an.begin(), an.end(), 0) != an.end());
}

TEST(SensorGraph, DisconnectedFileRejected) {
  EXPECT_THROW(parse_edge_list("0-1,1-2"), ValidationError);
}

TEST(SensorGraph, EdgeListRoundTrip) {
  const auto g = default_sensor_graph();
  std::ostringstream out;
  write_edge_list(out, g);
  EXPECT_EQ(parse_edge_list(out.str()), g);
}

TEST(SensorGraph, ParsesSeveralSeparators) {
  const auto g = parse_edge_list("# ring\n0 1\n1-2\n2,3\n3 0\n", 4);
  EXPECT_EQ(g.edges.size(), 4u);
  EXPECT_TRUE(g.connected());
  EXPECT_THROW(parse_edge_list("0 0\n", 2), ValidationError);
  EXPECT_THROW(parse_edge_list("0 9\n", 8), ValidationError);
  EXPECT_THROW(parse_edge_list("0 -1\n", 2), ValidationError);
  EXPECT_THROW(parse_edge_list("0 x\n", 2), ParseError);
}

TEST(SplitSizes, LargestRemainder) {
  const SplitRatios r{0.70, 0.15, 0.15};
  EXPECT_EQ(split_sizes(20549, r), (std::array<std::size_t, 3>{14384, 3083, 3082}));
  EXPECT_EQ(split_sizes(10, r), (std::array<std::size_t, 3>{7, 2, 1}));
  EXPECT_EQ(split_sizes(100, r), (std::array<std::size_t, 3>{70, 15, 15}));
  EXPECT_THROW(split_sizes(10, {0.5, 0.5, 0.5}), ValidationError);
  EXPECT_THROW(split_sizes(10, {-0.1, 0.6, 0.5}), ValidationError);
}

TEST(SplitIndices, DisjointCoverAndDeterministic) {
  std::vector<std::string> g;
  for (int i = 0; i < 10; ++i) g.push_back("s" + std::to_string(i));
  const auto a = split_indices(g, {0.7, 0.15, 0.15}, 4, SplitMode::sample_level);
  EXPECT_EQ(a.train.size(), 7u);
  EXPECT_EQ(a.val.size(), 2u);
  EXPECT_EQ(a.test.size(), 1u);
  std::set<std::size_t> all(a.train.begin(), a.train.end());
  all.insert(a.val.begin(), a.val.end());
  all.insert(a.test.begin(), a.test.end());
  EXPECT_EQ(all.size(), 10u);
  const auto b = split_indices(g, {0.7, 0.15, 0.15}, 4, SplitMode::sample_level);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
}

TEST(SplitIndices, SubjectLevelKeepsGroupsTogether) {
  std::vector<std::string> g;
  for (int s = 0; s < 40; ++s)
    for (int c = 0; c < 5; ++c) g.push_back("GaPt" + std::to_string(s));
  const auto sp = split_indices(g, {0.7, 0.15, 0.15}, 9, SplitMode::subject_level);
  std::set<std::string> tr, va, te;
  for (auto i : sp.train) tr.insert(g[i]);
  for (auto i : sp.val) va.insert(g[i]);
  for (auto i : sp.test) te.insert(g[i]);
  EXPECT_EQ(tr.size(), 28u);
  EXPECT_EQ(va.size(), 6u);
  EXPECT_EQ(te.size(), 6u);
  for (const auto& s : va) EXPECT_FALSE(tr.count(s) || te.count(s));
  for (const auto& s : te) EXPECT_FALSE(tr.count(s));
}

TEST(SplitDataset, SubjectLevelUsesSubjectPrefix) {
  std::vector<GaitCycleSample> samples;
  for (int s = 0; s < 10; ++s)
    for (int walk = 1; walk <= 2; ++walk)
      for (int c = 0; c < 3; ++c) {
        GaitCycleSample x;
        x.subject_id = "JuCo" + std::to_string(s) + "_0" + std::to_string(walk);
        x.cycle_index = c;
        samples.push_back(x);
      }
  const auto d = split_dataset(samples, {0.7, 0.15, 0.15}, 1, SplitMode::subject_level);
  std::set<std::string> tr;
  for (const auto& x : d.train) tr.insert(subject_group(x.subject_id));
  for (const auto& part : {&d.val, &d.test})
    for (const auto& x : *part) EXPECT_FALSE(tr.count(subject_group(x.subject_id))) << x.subject_id;
  EXPECT_EQ(d.train.size() + d.val.size() + d.test.size(), samples.size());
}

TEST(Preprocess, SyntheticCatalogCounts) {
  SynthConfig c;  // 20 subjects x 800 rows
  const auto res = preprocess(generate_synthetic(c), PreprocessOptions{});
  EXPECT_EQ(res.samples.size(), 100u);
  EXPECT_EQ(res.split.train.size(), 70u);
  EXPECT_EQ(res.split.val.size(), 15u);
  EXPECT_EQ(res.split.test.size(), 15u);
  const auto& counts = res.cycle_counts.at("Synthetic");
  EXPECT_EQ(counts[0], 50u);
  EXPECT_EQ(counts[1], 50u);
  EXPECT_EQ(res.stats.fitted_on, "train");
}

TEST(Preprocess, FeaturesStayInUnitInterval) {
  SynthConfig c;
  c.noise_std = 40.0;
  c.seed = 17;
  const auto res = preprocess(generate_synthetic(c), PreprocessOptions{});
  for (const auto& s : res.samples) {
    EXPECT_EQ(s.features.rows(), kNodes);
    EXPECT_EQ(s.features.cols(), kCycleRows);
    EXPECT_GE(s.features.minCoeff(), 0.0);
    EXPECT_LE(s.features.maxCoeff(), 1.0);
  }
}

TEST(Preprocess, NormalizerSeesOnlyTrainingCycles) {
  SynthConfig c;
  c.seed = 2;
  const auto recs = generate_synthetic(c);
  const auto res = preprocess(recs, PreprocessOptions{});
  std::array<double, 16> lo, hi;
  lo.fill(1e300);
  hi.fill(-1e300);
  for (auto i : res.split.train) {
    const auto& s = res.samples[i];
    const auto r = std::find_if(recs.begin(), recs.end(),
                                [&](const RawRecording& x) { return x.meta.subject_id == s.subject_id; });
    ASSERT_NE(r, recs.end());
    for (int t = s.cycle_index * 160; t < (s.cycle_index + 1) * 160; ++t)
      for (int k = 0; k < 8; ++k) {
        lo[k] = std::min(lo[k], r->left(t, k));
        hi[k] = std::max(hi[k], r->left(t, k));
        lo[k + 8] = std::min(lo[k + 8], r->right(t, k));
        hi[k + 8] = std::max(hi[k + 8], r->right(t, k));
      }
  }
  for (int k = 0; k < 16; ++k) {
    EXPECT_EQ(res.stats.min[k], lo[k]);
    EXPECT_EQ(res.stats.max[k], hi[k]);
  }
}

TEST(Preprocess, SameSeedSameSplit) {
  SynthConfig c;
  const auto recs = generate_synthetic(c);
  PreprocessOptions o;
  o.seed = 21;
  const auto a = preprocess(recs, o);
  const auto b = preprocess(recs, o);
  EXPECT_EQ(a.split.train, b.split.train);
  EXPECT_EQ(a.split.val, b.split.val);
  EXPECT_EQ(a.stats, b.stats);
  o.seed = 22;
  EXPECT_NE(preprocess(recs, o).split.train, a.split.train);
}
