#pragma once

// PhysioNet-style vGRF recordings: parsing, serialisation, the labelled
// catalog and a format-compatible synthetic generator.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cgg/error.hpp"

namespace cgg {

inline constexpr int kSensorsPerFoot = 8;
inline constexpr int kColumns = 19;
inline constexpr double kSampleRateHz = 100.0;

enum class Cohort { Ga, Ju, Si, Synthetic };

// Hoehn & Yahr stage, carried as metadata only.
enum class Severity { NFD, WOIB, WIB, WIPR };

inline double severity_value(Severity s) {
  switch (s) {
    case Severity::NFD: return 0.0;
    case Severity::WOIB: return 2.0;
    case Severity::WIB: return 2.5;
    case Severity::WIPR: return 3.0;
  }
  return 0.0;
}

inline Severity severity_from_value(double v) {
  if (v == 0.0) return Severity::NFD;
  if (v == 2.0) return Severity::WOIB;
  if (v == 2.5) return Severity::WIB;
  if (v == 3.0) return Severity::WIPR;
  throw ValidationError("unknown H&Y severity " + std::to_string(v));
}

inline std::string_view cohort_name(Cohort c) {
  switch (c) {
    case Cohort::Ga: return "Ga";
    case Cohort::Ju: return "Ju";
    case Cohort::Si: return "Si";
    case Cohort::Synthetic: return "Synthetic";
  }
  return "?";
}

inline Cohort cohort_from_name(std::string_view s) {
  if (s == "Ga") return Cohort::Ga;
  if (s == "Ju") return Cohort::Ju;
  if (s == "Si") return Cohort::Si;
  if (s == "Synthetic" || s == "Sy") return Cohort::Synthetic;
  throw ValidationError("unknown cohort '" + std::string(s) + "'");
}

struct SubjectMeta {
  std::string subject_id;
  Cohort cohort = Cohort::Synthetic;
  int label = 0;  // 0 = CO, 1 = PD
  std::optional<Severity> severity;
  double sample_rate_hz = kSampleRateHz;
};

using ForceMatrix = Eigen::Matrix<double, Eigen::Dynamic, kSensorsPerFoot, Eigen::RowMajor>;

// One subject's walk. Sensor k of the left foot is column k of `left`.
struct RawRecording {
  SubjectMeta meta;
  std::vector<double> timestamps;
  ForceMatrix left;
  ForceMatrix right;
  std::vector<double> total_left;
  std::vector<double> total_right;

  std::size_t rows() const { return timestamps.size(); }

  bool operator==(const RawRecording& o) const {
    return meta.subject_id == o.meta.subject_id && meta.cohort == o.meta.cohort &&
           meta.label == o.meta.label && meta.severity == o.meta.severity &&
           timestamps == o.timestamps && left == o.left && right == o.right &&
           total_left == o.total_left && total_right == o.total_right;
  }
};

namespace detail {

inline bool parse_double(std::string_view tok, double& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

inline void append_double(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

}  // namespace detail

// Throws ParseError naming the offending (1-based) line.
inline RawRecording parse_recording(std::istream& in, SubjectMeta meta) {
  RawRecording rec;
  rec.meta = std::move(meta);
  std::vector<std::array<double, kColumns>> rows;

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::array<double, kColumns> row{};
    std::size_t col = 0;
    std::size_t pos = 0;
    while (pos < line.size()) {
      while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' || line[pos] == '\r'))
        ++pos;
      if (pos >= line.size()) break;
      std::size_t end = pos;
      while (end < line.size() && line[end] != ' ' && line[end] != '\t' && line[end] != '\r')
        ++end;
      std::string_view tok(line.data() + pos, end - pos);
      if (col >= kColumns)
        throw ParseError(lineno, "expected 19 columns, found more");
      double v = 0.0;
      if (!detail::parse_double(tok, v))
        throw ParseError(lineno, "non-numeric value '" + std::string(tok) + "'");
      if (!std::isfinite(v)) throw ParseError(lineno, "non-finite value");
      row[col++] = v;
      pos = end;
    }
    if (col == 0) continue;  // blank line
    if (col != kColumns)
      throw ParseError(lineno, "expected 19 columns, found " + std::to_string(col));
    for (std::size_t c = 1; c < kColumns; ++c)
      if (row[c] < 0.0) throw ParseError(lineno, "negative force in column " + std::to_string(c + 1));
    if (!rows.empty() && row[0] <= rows.back()[0])
      throw ParseError(lineno, "timestamps not strictly increasing");
    rows.push_back(row);
  }
  if (rows.empty()) throw ParseError(lineno, "recording is empty");

  const auto t = static_cast<Eigen::Index>(rows.size());
  rec.timestamps.resize(rows.size());
  rec.left.resize(t, kSensorsPerFoot);
  rec.right.resize(t, kSensorsPerFoot);
  rec.total_left.resize(rows.size());
  rec.total_right.resize(rows.size());
  for (Eigen::Index i = 0; i < t; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    rec.timestamps[i] = r[0];
    for (int k = 0; k < kSensorsPerFoot; ++k) {
      rec.left(i, k) = r[1 + k];
      rec.right(i, k) = r[1 + kSensorsPerFoot + k];
    }
    rec.total_left[i] = r[17];
    rec.total_right[i] = r[18];
  }
  return rec;
}

inline RawRecording parse_recording(const std::string& text, SubjectMeta meta) {
  std::istringstream in(text);
  return parse_recording(in, std::move(meta));
}

// Tab-delimited, shortest round-trip formatting of every value.
inline void serialize_recording(std::ostream& out, const RawRecording& rec) {
  std::string line;
  for (std::size_t i = 0; i < rec.rows(); ++i) {
    line.clear();
    const auto r = static_cast<Eigen::Index>(i);
    detail::append_double(line, rec.timestamps[i]);
    for (int k = 0; k < kSensorsPerFoot; ++k) {
      line.push_back('\t');
      detail::append_double(line, rec.left(r, k));
    }
    for (int k = 0; k < kSensorsPerFoot; ++k) {
      line.push_back('\t');
      detail::append_double(line, rec.right(r, k));
    }
    line.push_back('\t');
    detail::append_double(line, rec.total_left[i]);
    line.push_back('\t');
    detail::append_double(line, rec.total_right[i]);
    line.push_back('\n');
    out << line;
  }
}

// ---------------------------------------------------------------------------
// Manifest and catalog

struct ManifestEntry {
  std::string filename;
  Cohort cohort = Cohort::Synthetic;
  int label = 0;
  std::optional<Severity> severity;
};

using Manifest = std::vector<ManifestEntry>;

// PhysioNet naming: <cohort><Co|Pt><nn>_<walk>.txt, e.g. GaPt03_01.txt.
// "Sy" is accepted for synthetic files written by generate_synthetic.
struct ParsedName {
  Cohort cohort;
  int label;
};

inline std::optional<ParsedName> parse_physionet_name(const std::string& filename) {
  static const std::regex re(R"(^(Ga|Ju|Si|Sy)(Co|Pt)\d+(_\d+)?\.txt$)");
  std::smatch m;
  if (!std::regex_match(filename, m, re)) return std::nullopt;
  return ParsedName{cohort_from_name(m[1].str()), m[2].str() == "Pt" ? 1 : 0};
}

// Subject id of a file: its stem ("GaPt03_01").
inline std::string subject_id_from_filename(const std::string& filename) {
  return std::filesystem::path(filename).stem().string();
}

// Grouping key used for subject-level splits: the stem up to the walk suffix.
inline std::string subject_group(const std::string& subject_id) {
  return subject_id.substr(0, subject_id.find('_'));
}

inline nlohmann::ordered_json manifest_to_json(const Manifest& m) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& e : m) {
    nlohmann::ordered_json entry;
    entry["cohort"] = std::string(cohort_name(e.cohort));
    entry["label"] = e.label;
    if (e.severity)
      entry["severity"] = severity_value(*e.severity);
    else
      entry["severity"] = nullptr;
    j[e.filename] = entry;
  }
  return j;
}

inline Manifest manifest_from_json(const nlohmann::ordered_json& j) {
  if (!j.is_object()) throw ValidationError("manifest must be a JSON object of filename -> entry");
  Manifest m;
  for (const auto& [name, entry] : j.items()) {
    if (!entry.is_object()) throw ValidationError("manifest entry '" + name + "' is not an object");
    for (const auto& [key, _] : entry.items())
      if (key != "cohort" && key != "label" && key != "severity")
        throw ValidationError("manifest entry '" + name + "': unknown key '" + key + "'");
    ManifestEntry e;
    e.filename = name;
    try {
      e.cohort = cohort_from_name(entry.at("cohort").get<std::string>());
      const auto& label = entry.at("label");
      if (label.is_string()) {
        const auto s = label.get<std::string>();
        if (s != "CO" && s != "PD") throw ValidationError("label must be CO or PD");
        e.label = s == "PD" ? 1 : 0;
      } else {
        e.label = label.get<int>();
      }
      if (e.label != 0 && e.label != 1) throw ValidationError("label must be 0 or 1");
      if (entry.contains("severity") && !entry["severity"].is_null())
        e.severity = severity_from_value(entry["severity"].get<double>());
    } catch (const nlohmann::json::exception& ex) {
      throw ValidationError("manifest entry '" + name + "': " + ex.what());
    } catch (const ValidationError& ex) {
      throw ValidationError("manifest entry '" + name + "': " + ex.what());
    }
    m.push_back(std::move(e));
  }
  return m;
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path.string());
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& ex) {
    throw ValidationError("manifest " + path.string() + ": " + ex.what());
  }
  return manifest_from_json(j);
}

inline void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest " + path.string());
  out << manifest_to_json(m).dump(2) << '\n';
}

// Derives a manifest from the file names in `root`. Severity is unknown from
// names alone and left empty.
inline Manifest manifest_from_directory(const std::filesystem::path& root) {
  std::vector<std::string> names;
  for (const auto& de : std::filesystem::directory_iterator(root)) {
    if (!de.is_regular_file()) continue;
    auto name = de.path().filename().string();
    if (parse_physionet_name(name)) names.push_back(std::move(name));
  }
  std::sort(names.begin(), names.end());
  Manifest m;
  for (auto& n : names) {
    auto p = *parse_physionet_name(n);
    m.push_back({n, p.cohort, p.label, std::nullopt});
  }
  return m;
}

class CatalogError : public Error {
 public:
  CatalogError(std::vector<std::string> problems)
      : Error(join(problems)), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& p) {
    std::string s = std::to_string(p.size()) + " catalog problem(s):";
    for (const auto& x : p) s += "\n  " + x;
    return s;
  }
  std::vector<std::string> problems_;
};

// Loads every manifest entry, in manifest order. All failures (missing file,
// parse error, name/label mismatch) are collected and reported together.
inline std::vector<RawRecording> load_catalog(const std::filesystem::path& root,
                                              const Manifest& manifest) {
  std::vector<RawRecording> out;
  std::vector<std::string> problems;
  for (const auto& e : manifest) {
    const auto path = root / e.filename;
    if (auto parsed = parse_physionet_name(e.filename)) {
      if (parsed->cohort != e.cohort || parsed->label != e.label) {
        problems.push_back(path.string() + ": manifest cohort/label disagree with file name");
        continue;
      }
    }
    std::ifstream in(path);
    if (!in) {
      problems.push_back(path.string() + ": missing file");
      continue;
    }
    SubjectMeta meta{subject_id_from_filename(e.filename), e.cohort, e.label, e.severity,
                     kSampleRateHz};
    try {
      out.push_back(parse_recording(in, std::move(meta)));
    } catch (const ParseError& ex) {
      problems.push_back(path.string() + ": " + ex.what());
    }
  }
  if (!problems.empty()) throw CatalogError(std::move(problems));
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generator

struct SynthConfig {
  int n_subjects_per_class = 10;
  int rows_per_subject = 800;
  int cycle_period_rows = 160;
  double class_separation = 0.8;
  double noise_std = 5.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_subjects_per_class < 1) throw ValidationError("n_subjects_per_class must be >= 1");
    if (cycle_period_rows < 1) throw ValidationError("cycle_period_rows must be >= 1");
    if (rows_per_subject < cycle_period_rows)
      throw ValidationError("rows_per_subject must be >= cycle_period_rows");
    if (!(class_separation >= 0.0 && class_separation <= 1.0))
      throw ValidationError("class_separation must lie in [0,1]");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std))
      throw ValidationError("noise_std must be finite and >= 0");
  }

  bool operator==(const SynthConfig&) const = default;
};

namespace detail {

// Peak force (N) per sensor, heel (0..2) to toe (5..7).
inline constexpr std::array<double, kSensorsPerFoot> kPeakForce = {
    120.0, 180.0, 160.0, 90.0, 110.0, 150.0, 130.0, 70.0};

// Where each sensor's pulse starts and how long it lasts, as fractions of
// the stance phase. Heel loads first, toe last.
inline constexpr std::array<double, kSensorsPerFoot> kOnset = {
    0.00, 0.00, 0.05, 0.20, 0.25, 0.40, 0.45, 0.45};
inline constexpr std::array<double, kSensorsPerFoot> kWidth = {
    0.55, 0.60, 0.55, 0.60, 0.55, 0.60, 0.55, 0.55};

inline double region_gain(int sensor, int label, double sep) {
  if (label == 0) return 1.0;
  if (sensor <= 2) return 1.0 + 0.30 * sep;  // heavier heel loading
  if (sensor >= 5) return 1.0 - 0.40 * sep;  // weaker toe-off
  return 1.0;
}

// Half-sine pulse of one sensor at row `i` of a foot whose cycle starts at `phase`.
inline double pulse(int i, double phase, int period, double stance_frac, int sensor) {
  double u = std::fmod(static_cast<double>(i) + phase, static_cast<double>(period));
  if (u < 0) u += period;
  const double stance = stance_frac * period;
  const double start = kOnset[sensor] * stance;
  const double width = kWidth[sensor] * stance;
  const double x = (u - start) / width;
  if (x <= 0.0 || x >= 1.0) return 0.0;
  return std::sin(std::numbers::pi * x);
}

}  // namespace detail

// Deterministic in `config.seed`. Both classes consume the random stream
// identically, so class_separation = 0 yields identical distributions.
inline std::vector<RawRecording> generate_synthetic(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const int period = config.cycle_period_rows;
  const int rows = config.rows_per_subject;
  const double sep = config.class_separation;
  static constexpr std::array<Severity, 3> pd_stages = {Severity::WOIB, Severity::WIB,
                                                        Severity::WIPR};

  std::vector<RawRecording> out;
  out.reserve(static_cast<std::size_t>(2 * config.n_subjects_per_class));
  for (int label = 0; label <= 1; ++label) {
    for (int s = 0; s < config.n_subjects_per_class; ++s) {
      RawRecording rec;
      char id[32];
      std::snprintf(id, sizeof id, "Sy%s%03d_01", label ? "Pt" : "Co", s + 1);
      rec.meta.subject_id = id;
      rec.meta.cohort = Cohort::Synthetic;
      rec.meta.label = label;
      rec.meta.severity = label ? pd_stages[static_cast<std::size_t>(s) % pd_stages.size()]
                                : Severity::NFD;
      rec.meta.sample_rate_hz = kSampleRateHz;

      const double phase = unit(rng) * period;
      const double body_scale = std::max(0.5, 1.0 + 0.10 * gauss(rng));
      std::array<double, kSensorsPerFoot> amp_left{}, amp_right{};
      for (int k = 0; k < kSensorsPerFoot; ++k) {
        amp_left[k] = std::max(0.0, 1.0 + 0.05 * gauss(rng));
        amp_right[k] = std::max(0.0, 1.0 + 0.05 * gauss(rng));
      }
      const double stance_jitter = 0.02 * gauss(rng);
      const double stance_frac =
          std::clamp(0.60 + 0.12 * sep * label + stance_jitter, 0.3, 0.9);

      rec.timestamps.resize(static_cast<std::size_t>(rows));
      rec.left.resize(rows, kSensorsPerFoot);
      rec.right.resize(rows, kSensorsPerFoot);
      rec.total_left.resize(static_cast<std::size_t>(rows));
      rec.total_right.resize(static_cast<std::size_t>(rows));
      for (int i = 0; i < rows; ++i) {
        rec.timestamps[static_cast<std::size_t>(i)] = i / kSampleRateHz;
        double tl = 0.0, tr = 0.0;
        for (int k = 0; k < kSensorsPerFoot; ++k) {
          const double g = detail::region_gain(k, label, sep) * body_scale * detail::kPeakForce[k];
          double l = g * amp_left[k] * detail::pulse(i, phase, period, stance_frac, k);
          double r = g * amp_right[k] *
                     detail::pulse(i, phase + 0.5 * period, period, stance_frac, k);
          l = std::max(0.0, l + config.noise_std * gauss(rng));
          r = std::max(0.0, r + config.noise_std * gauss(rng));
          rec.left(i, k) = l;
          rec.right(i, k) = r;
        }
        for (int k = 0; k < kSensorsPerFoot; ++k) tl += rec.left(i, k);
        for (int k = 0; k < kSensorsPerFoot; ++k) tr += rec.right(i, k);
        rec.total_left[static_cast<std::size_t>(i)] = tl;
        rec.total_right[static_cast<std::size_t>(i)] = tr;
      }
      out.push_back(std::move(rec));
    }
  }
  return out;
}

inline Manifest manifest_for(const std::vector<RawRecording>& recs) {
  Manifest m;
  for (const auto& r : recs)
    m.push_back({r.meta.subject_id + ".txt", r.meta.cohort, r.meta.label, r.meta.severity});
  return m;
}

// Writes each recording as <subject_id>.txt plus manifest.json into `dir`.
inline Manifest write_catalog(const std::filesystem::path& dir,
                              const std::vector<RawRecording>& recs) {
  std::filesystem::create_directories(dir);
  for (const auto& r : recs) {
    const auto path = dir / (r.meta.subject_id + ".txt");
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    serialize_recording(out, r);
  }
  auto m = manifest_for(recs);
  write_manifest(dir / "manifest.json", m);
  return m;
}

}  // namespace cgg
