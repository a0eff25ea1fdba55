#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "cgg/gaitdata.hpp"
#include "cgg/preprocess.hpp"
#include "test_support.hpp"

using namespace cgg;

namespace {

std::string row_text(double t, double left, double right) {
  std::ostringstream s;
  s << t;
  for (int k = 0; k < 8; ++k) s << ' ' << left;
  for (int k = 0; k < 8; ++k) s << ' ' << right;
  s << ' ' << left * 8 << ' ' << right * 8 << '\n';
  return s.str();
}

SubjectMeta meta(const std::string& id = "GaCo01_01") { return SubjectMeta{id, Cohort::Ga, 0, std::nullopt}; }

}  // namespace

TEST(ParseRecording, TwoRowFileMapsColumns) {
  const std::string text = "0.00 1 1 1 1 1 1 1 1 2 2 2 2 2 2 2 2 8 16\n"
                           "0.01 1 1 1 1 1 1 1 1 2 2 2 2 2 2 2 2 8 16\n";
  const auto rec = parse_recording(text, meta());
  ASSERT_EQ(rec.rows(), 2u);
  for (int k = 0; k < 8; ++k) {
    EXPECT_EQ(rec.left(0, k), 1.0);
    EXPECT_EQ(rec.right(0, k), 2.0);
  }
  EXPECT_EQ(rec.total_left[1], 8.0);
  EXPECT_EQ(rec.total_right[1], 16.0);
  EXPECT_DOUBLE_EQ(rec.timestamps[1], 0.01);
}

TEST(ParseRecording, ShortRowNamesItsLine) {
  const std::string text = row_text(0.0, 1, 2) + "0.01 1 1 1 1 1 1 1 1 2 2 2 2 2 2 2 2 8\n";
  try {
    parse_recording(text, meta());
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(ParseRecording, RejectsBadValues) {
  EXPECT_THROW(parse_recording(row_text(0.0, 1, 2) + row_text(0.0, 1, 2), meta()), ParseError);
  EXPECT_THROW(parse_recording(row_text(0.0, -1, 2), meta()), ParseError);
  EXPECT_THROW(parse_recording("0 a 1 1 1 1 1 1 1 2 2 2 2 2 2 2 2 8 16\n", meta()), ParseError);
  EXPECT_THROW(parse_recording("0 nan 1 1 1 1 1 1 1 2 2 2 2 2 2 2 2 8 16\n", meta()), ParseError);
  EXPECT_THROW(parse_recording(row_text(0.0, 1, 2) + "0.01 1 1 1 1 1 1 1 1 2 2 2 2 2 2 2 2 8 16 3\n", meta()),
               ParseError);
  EXPECT_THROW(parse_recording("", meta()), ParseError);
}

TEST(ParseRecording, AcceptsTabsAndBlankLines) {
  const std::string text = "0\t1\t1\t1\t1\t1\t1\t1\t1\t2\t2\t2\t2\t2\t2\t2\t2\t8\t16\r\n\n" + row_text(0.01, 3, 4);
  const auto rec = parse_recording(text, meta());
  EXPECT_EQ(rec.rows(), 2u);
  EXPECT_EQ(rec.left(1, 3), 3.0);
}

TEST(ParseRecording, SerializeRoundTripIsExact) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.0, 1500.0);
  for (int trial = 0; trial < 20; ++trial) {
    auto rec = test::make_recording(1 + trial * 7, [&](int, int) { return u(rng); });
    rec.meta.cohort = Cohort::Ga;
    rec.meta.subject_id = "GaCo01_01";
    std::ostringstream out;
    serialize_recording(out, rec);
    const auto back = parse_recording(out.str(), rec.meta);
    EXPECT_EQ(back, rec);
  }
}

TEST(PhysionetNames, ParseCohortAndLabel) {
  auto a = parse_physionet_name("GaPt03_01.txt");
  ASSERT_TRUE(a);
  EXPECT_EQ(a->cohort, Cohort::Ga);
  EXPECT_EQ(a->label, 1);
  auto b = parse_physionet_name("SiCo12_02.txt");
  ASSERT_TRUE(b);
  EXPECT_EQ(b->cohort, Cohort::Si);
  EXPECT_EQ(b->label, 0);
  EXPECT_TRUE(parse_physionet_name("JuPt01.txt"));
  EXPECT_FALSE(parse_physionet_name("demographics.txt"));
  EXPECT_FALSE(parse_physionet_name("GaXx01_01.txt"));
  EXPECT_EQ(subject_id_from_filename("GaPt03_01.txt"), "GaPt03_01");
  EXPECT_EQ(subject_group("GaPt03_01"), "GaPt03");
}

TEST(Severity, ValuesRoundTrip) {
  for (auto s : {Severity::NFD, Severity::WOIB, Severity::WIB, Severity::WIPR})
    EXPECT_EQ(severity_from_value(severity_value(s)), s);
  EXPECT_EQ(severity_value(Severity::WIB), 2.5);
  EXPECT_THROW(severity_from_value(1.0), ValidationError);
}

class CatalogTest : public ::testing::Test {
 protected:
  test::TempDir dir{"cgg_catalog"};

  void write_file(const std::string& name, double left) {
    std::ofstream f(dir / name);
    f << row_text(0.0, left, 1) << row_text(0.01, left, 1);
  }
};

TEST_F(CatalogTest, LoadsInManifestOrder) {
  write_file("GaCo01_01.txt", 1);
  write_file("GaPt02_01.txt", 2);
  write_file("SiCo03_01.txt", 3);
  const Manifest m = {{"SiCo03_01.txt", Cohort::Si, 0, Severity::NFD},
                      {"GaCo01_01.txt", Cohort::Ga, 0, std::nullopt},
                      {"GaPt02_01.txt", Cohort::Ga, 1, Severity::WIB}};
  const auto recs = load_catalog(dir.path(), m);
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].meta.subject_id, "SiCo03_01");
  EXPECT_EQ(recs[0].left(0, 0), 3.0);
  EXPECT_EQ(recs[1].meta.subject_id, "GaCo01_01");
  EXPECT_EQ(recs[2].meta.label, 1);
  EXPECT_EQ(recs[2].meta.severity, Severity::WIB);
}

TEST_F(CatalogTest, MissingFileIsNamed) {
  write_file("GaCo01_01.txt", 1);
  const Manifest m = {{"GaCo01_01.txt", Cohort::Ga, 0, std::nullopt},
                      {"GaPt09_01.txt", Cohort::Ga, 1, std::nullopt}};
  try {
    load_catalog(dir.path(), m);
    FAIL() << "expected a catalog error";
  } catch (const CatalogError& e) {
    ASSERT_EQ(e.problems().size(), 1u);
    EXPECT_NE(e.problems()[0].find("GaPt09_01.txt"), std::string::npos);
  }
}

TEST_F(CatalogTest, CollectsEveryProblem) {
  write_file("GaCo01_01.txt", 1);
  std::ofstream(dir / "GaCo02_01.txt") << "0 1 2\n";
  const Manifest m = {{"GaCo01_01.txt", Cohort::Ga, 1, std::nullopt},  // label disagrees with name
                      {"GaCo02_01.txt", Cohort::Ga, 0, std::nullopt},
                      {"GaCo03_01.txt", Cohort::Ga, 0, std::nullopt}};
  try {
    load_catalog(dir.path(), m);
    FAIL() << "expected a catalog error";
  } catch (const CatalogError& e) {
    EXPECT_EQ(e.problems().size(), 3u);
  }
}

TEST_F(CatalogTest, ManifestJsonRoundTrip) {
  const Manifest m = {{"GaCo01_01.txt", Cohort::Ga, 0, Severity::NFD},
                      {"JuPt04_02.txt", Cohort::Ju, 1, Severity::WIPR},
                      {"SiPt05_01.txt", Cohort::Si, 1, std::nullopt}};
  write_manifest(dir / "manifest.json", m);
  const auto back = read_manifest(dir / "manifest.json");
  ASSERT_EQ(back.size(), m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(back[i].filename, m[i].filename);
    EXPECT_EQ(back[i].cohort, m[i].cohort);
    EXPECT_EQ(back[i].label, m[i].label);
    EXPECT_EQ(back[i].severity, m[i].severity);
  }
}

TEST(Manifest, RejectsUnknownKeysAndLabels) {
  using J = nlohmann::ordered_json;
  EXPECT_THROW(manifest_from_json(J::parse(R"({"GaCo01_01.txt":{"cohort":"Ga","label":0,"age":60}})")),
               ValidationError);
  EXPECT_THROW(manifest_from_json(J::parse(R"({"GaCo01_01.txt":{"cohort":"Ga","label":"XX"}})")), ValidationError);
  EXPECT_THROW(manifest_from_json(J::parse(R"({"GaCo01_01.txt":{"cohort":"Zz","label":0}})")), ValidationError);
  const auto m = manifest_from_json(J::parse(R"({"GaPt01_01.txt":{"cohort":"Ga","label":"PD"}})"));
  EXPECT_EQ(m.at(0).label, 1);
}

TEST(Manifest, DirectoryScanUsesFileNames) {
  test::TempDir dir("cgg_scan");
  std::ofstream(dir / "GaPt01_01.txt") << row_text(0, 1, 1);
  std::ofstream(dir / "SiCo02_01.txt") << row_text(0, 1, 1);
  std::ofstream(dir / "README.txt") << "not a recording\n";
  const auto m = manifest_from_directory(dir.path());
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].filename, "GaPt01_01.txt");
  EXPECT_EQ(m[0].label, 1);
  EXPECT_EQ(m[1].cohort, Cohort::Si);
}

TEST(Synthetic, SameSeedIsBitIdentical) {
  SynthConfig c;
  c.seed = 99;
  c.n_subjects_per_class = 3;
  EXPECT_EQ(generate_synthetic(c), generate_synthetic(c));
  auto d = c;
  d.seed = 100;
  EXPECT_NE(generate_synthetic(c), generate_synthetic(d));
}

TEST(Synthetic, DefaultConfigListsTwentySubjects) {
  SynthConfig c;
  const auto recs = generate_synthetic(c);
  ASSERT_EQ(recs.size(), 20u);
  const auto m = manifest_for(recs);
  EXPECT_EQ(m.size(), 20u);
  int pd = 0;
  for (const auto& r : recs) {
    EXPECT_EQ(r.rows(), 800u);
    pd += r.meta.label;
    EXPECT_TRUE(parse_physionet_name(r.meta.subject_id + ".txt"));
  }
  EXPECT_EQ(pd, 10);
}

TEST(Synthetic, FilesParseBack) {
  test::TempDir dir("cgg_synth");
  SynthConfig c;
  c.n_subjects_per_class = 2;
  const auto recs = generate_synthetic(c);
  const auto m = write_catalog(dir.path(), recs);
  const auto back = load_catalog(dir.path(), read_manifest(dir / "manifest.json"));
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) EXPECT_EQ(back[i], recs[i]);
}

TEST(Synthetic, EachRecordingYieldsFiveCycles) {
  SynthConfig c;
  c.rows_per_subject = 800;
  c.cycle_period_rows = 160;
  const auto recs = generate_synthetic(c);
  const auto stats = fit_normalizer(recs);
  for (const auto& r : recs) {
    const auto expected = r.rows() / 160;  // floor
    EXPECT_EQ(segment_cycles(reduce_lr(normalize(r, stats))).size(), expected);
    EXPECT_EQ(expected, 5u);
  }
}

TEST(Synthetic, ZeroSeparationGivesMatchingClassMeans) {
  SynthConfig c;
  c.class_separation = 0.0;
  c.n_subjects_per_class = 100;
  c.rows_per_subject = 320;
  c.seed = 5;
  const auto recs = generate_synthetic(c);
  std::array<std::array<double, 16>, 2> sum{};
  std::array<double, 2> rows{};
  for (const auto& r : recs) {
    for (std::size_t t = 0; t < r.rows(); ++t)
      for (int k = 0; k < 8; ++k) {
        sum[r.meta.label][k] += r.left(t, k);
        sum[r.meta.label][k + 8] += r.right(t, k);
      }
    rows[r.meta.label] += static_cast<double>(r.rows());
  }
  for (int k = 0; k < 16; ++k) {
    const double co = sum[0][k] / rows[0], pd = sum[1][k] / rows[1];
    EXPECT_NEAR(co, pd, 0.05 * std::max(co, pd)) << "channel " << k;
  }
}

TEST(Synthetic, SeparationShiftsHeelAndToe) {
  SynthConfig c;
  c.class_separation = 1.0;
  c.n_subjects_per_class = 30;
  const auto recs = generate_synthetic(c);
  std::array<double, 2> heel{}, toe{};
  for (const auto& r : recs) {
    heel[r.meta.label] += r.left.col(0).sum();
    toe[r.meta.label] += r.left.col(6).sum();
  }
  EXPECT_GT(heel[1], heel[0]);
  EXPECT_LT(toe[1], toe[0]);
}

TEST(Synthetic, RejectsInvalidConfig) {
  SynthConfig c;
  c.class_separation = 1.5;
  EXPECT_THROW(generate_synthetic(c), ValidationError);
  c = SynthConfig{};
  c.rows_per_subject = 10;
  EXPECT_THROW(generate_synthetic(c), ValidationError);
}
