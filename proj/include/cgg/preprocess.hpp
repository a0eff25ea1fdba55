#pragma once

// Raw 16-channel recordings -> labelled 8-node gait-cycle graph samples.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cgg/error.hpp"
#include "cgg/gaitdata.hpp"

namespace cgg {

inline constexpr int kNodes = kSensorsPerFoot;
inline constexpr int kChannels = 2 * kSensorsPerFoot;
inline constexpr int kCycleRows = 160;

// Sensors are indexed L1..L8 = 0..7, R1..R8 = 8..15.
struct NormStats {
  std::array<double, kChannels> min{};
  std::array<double, kChannels> max{};
  std::string fitted_on = "all";

  bool degenerate(int k) const { return max[k] == min[k]; }

  bool operator==(const NormStats&) const = default;
};

class NormStatsAccumulator {
 public:
  NormStatsAccumulator() {
    min_.fill(std::numeric_limits<double>::infinity());
    max_.fill(-std::numeric_limits<double>::infinity());
  }

  // Rows [begin, end) of `rec`.
  void observe(const RawRecording& rec, std::size_t begin, std::size_t end) {
    end = std::min(end, rec.rows());
    for (std::size_t i = begin; i < end; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      for (int k = 0; k < kSensorsPerFoot; ++k) {
        take(k, rec.left(r, k));
        take(k + kSensorsPerFoot, rec.right(r, k));
      }
      seen_ = true;
    }
  }

  void observe(const RawRecording& rec) { observe(rec, 0, rec.rows()); }

  NormStats finish(std::string fitted_on) const {
    if (!seen_) throw ValidationError("cannot fit normaliser on empty input");
    NormStats s;
    s.min = min_;
    s.max = max_;
    s.fitted_on = std::move(fitted_on);
    return s;
  }

 private:
  void take(int k, double v) {
    min_[k] = std::min(min_[k], v);
    max_[k] = std::max(max_[k], v);
  }

  std::array<double, kChannels> min_;
  std::array<double, kChannels> max_;
  bool seen_ = false;
};

inline NormStats fit_normalizer(std::span<const RawRecording> recordings,
                                std::string fitted_on = "all") {
  if (recordings.empty()) throw ValidationError("fit_normalizer: no recordings");
  NormStatsAccumulator acc;
  for (const auto& r : recordings) acc.observe(r);
  return acc.finish(std::move(fitted_on));
}

// Min-max scaling of a single value. Values outside the fitted range are
// clamped; a constant sensor maps to 0.
inline double normalize_value(double v, double lo, double hi) {
  if (!std::isfinite(v)) throw ValidationError("normalize: non-finite input");
  if (hi == lo) return 0.0;
  return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
}

// [T x 16] series with columns L1..L8, R1..R8.
using ChannelSeries = Eigen::Matrix<double, Eigen::Dynamic, kChannels, Eigen::RowMajor>;
// [T x 8] series after left/right reduction.
using NodeSeries = Eigen::Matrix<double, Eigen::Dynamic, kNodes, Eigen::RowMajor>;
// One gait cycle: nodes x time.
using CycleMatrix = Eigen::MatrixXd;

inline ChannelSeries normalize(const RawRecording& rec, const NormStats& stats) {
  const auto t = static_cast<Eigen::Index>(rec.rows());
  ChannelSeries out(t, kChannels);
  for (Eigen::Index i = 0; i < t; ++i) {
    for (int k = 0; k < kSensorsPerFoot; ++k) {
      out(i, k) = normalize_value(rec.left(i, k), stats.min[k], stats.max[k]);
      const int rk = k + kSensorsPerFoot;
      out(i, rk) = normalize_value(rec.right(i, k), stats.min[rk], stats.max[rk]);
    }
  }
  return out;
}

// Channel k of the result is |L_k - R_k|.
inline NodeSeries reduce_lr(const ChannelSeries& x) {
  return (x.leftCols<kNodes>() - x.rightCols<kNodes>()).cwiseAbs();
}

// floor(T / window) consecutive windows, each transposed to [nodes x window].
inline std::vector<CycleMatrix> segment_cycles(const NodeSeries& series, int window = kCycleRows) {
  if (window <= 0) throw ValidationError("segment_cycles: window must be positive");
  const Eigen::Index n = series.rows() / window;
  std::vector<CycleMatrix> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index c = 0; c < n; ++c)
    out.emplace_back(series.middleRows(c * window, window).transpose());
  return out;
}

// ---------------------------------------------------------------------------
// Sensor graph

struct SensorGraph {
  int n_nodes = 0;
  std::vector<std::pair<int, int>> edges;    // i < j, sorted, unique
  std::vector<std::vector<int>> neighbors;   // sorted, no self entries

  bool operator==(const SensorGraph& o) const {
    return n_nodes == o.n_nodes && edges == o.edges;
  }

  // Neighbourhood used by attention: N(i) plus i itself, sorted.
  std::vector<int> attention_neighbors(int i) const {
    auto v = neighbors[static_cast<std::size_t>(i)];
    v.insert(std::upper_bound(v.begin(), v.end(), i), i);
    return v;
  }

  bool connected() const {
    if (n_nodes == 0) return false;
    std::vector<char> seen(static_cast<std::size_t>(n_nodes), 0);
    std::queue<int> q;
    q.push(0);
    seen[0] = 1;
    int count = 1;
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (int v : neighbors[static_cast<std::size_t>(u)])
        if (!seen[static_cast<std::size_t>(v)]) {
          seen[static_cast<std::size_t>(v)] = 1;
          ++count;
          q.push(v);
        }
    }
    return count == n_nodes;
  }
};

// Validates and builds a graph from an undirected edge list.
inline SensorGraph make_sensor_graph(int n_nodes, const std::vector<std::pair<int, int>>& edges) {
  if (n_nodes < 1) throw ValidationError("graph must have at least one node");
  SensorGraph g;
  g.n_nodes = n_nodes;
  g.neighbors.assign(static_cast<std::size_t>(n_nodes), {});
  std::set<std::pair<int, int>> seen;
  for (auto [a, b] : edges) {
    if (a < 0 || a >= n_nodes || b < 0 || b >= n_nodes)
      throw ValidationError("edge " + std::to_string(a) + "-" + std::to_string(b) +
                            ": node index outside [0," + std::to_string(n_nodes - 1) + "]");
    if (a == b) throw ValidationError("self-loop " + std::to_string(a) + " is not allowed");
    auto key = std::minmax(a, b);
    if (!seen.insert(key).second)
      throw ValidationError("duplicate edge " + std::to_string(key.first) + "-" +
                            std::to_string(key.second));
  }
  g.edges.assign(seen.begin(), seen.end());
  for (auto [a, b] : g.edges) {
    g.neighbors[static_cast<std::size_t>(a)].push_back(b);
    g.neighbors[static_cast<std::size_t>(b)].push_back(a);
  }
  for (auto& nb : g.neighbors) std::sort(nb.begin(), nb.end());
  if (!g.connected()) throw ValidationError("sensor graph is disconnected");
  return g;
}

// Regional layout of one sole: heel 0,1,2; midfoot 3,4; toe 5,6,7.
inline SensorGraph default_sensor_graph() {
  return make_sensor_graph(kNodes, {{0, 1}, {0, 2}, {1, 2}, {1, 3}, {2, 4}, {3, 4},
                                    {3, 5}, {4, 7}, {5, 6}, {6, 7}, {5, 7}});
}

// Edge-list text: one "i j" pair per line (a single "i-j" or "i,j" token
// per pair is also accepted). '#' starts a comment.
inline SensorGraph parse_edge_list(std::istream& in, int n_nodes = kNodes) {
  std::vector<std::pair<int, int>> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    for (std::size_t k = 0; k < line.size(); ++k) {
      const bool joins = line[k] == '-' && k > 0 && std::isdigit(static_cast<unsigned char>(line[k - 1]));
      if (line[k] == ',' || joins) line[k] = ' ';
    }
    std::istringstream ls(line);
    std::vector<long> tok;
    std::string word;
    while (ls >> word) {
      try {
        std::size_t used = 0;
        long v = std::stol(word, &used);
        if (used != word.size()) throw std::invalid_argument(word);
        tok.push_back(v);
      } catch (const std::exception&) {
        throw ParseError(lineno, "edge list: not an integer '" + word + "'");
      }
    }
    if (tok.empty()) continue;
    if (tok.size() % 2 != 0) throw ParseError(lineno, "edge list: expected node pairs");
    for (std::size_t i = 0; i < tok.size(); i += 2)
      edges.emplace_back(static_cast<int>(tok[i]), static_cast<int>(tok[i + 1]));
  }
  return make_sensor_graph(n_nodes, edges);
}

inline SensorGraph parse_edge_list(const std::string& text, int n_nodes = kNodes) {
  std::istringstream in(text);
  return parse_edge_list(in, n_nodes);
}

inline SensorGraph load_edge_list(const std::filesystem::path& path, int n_nodes = kNodes) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open edge list " + path.string());
  return parse_edge_list(in, n_nodes);
}

inline void write_edge_list(std::ostream& out, const SensorGraph& g) {
  for (auto [a, b] : g.edges) out << a << ' ' << b << '\n';
}

// ---------------------------------------------------------------------------
// Samples and splitting

struct GaitCycleSample {
  CycleMatrix features;  // [8 x 160], entries in [0,1]
  int label = 0;
  std::string subject_id;
  int cycle_index = 0;
  std::optional<Severity> severity;
  Cohort cohort = Cohort::Synthetic;
};

enum class SplitMode { sample_level, subject_level };

inline SplitMode split_mode_from_name(const std::string& s) {
  if (s == "sample" || s == "sample_level") return SplitMode::sample_level;
  if (s == "subject" || s == "subject_level") return SplitMode::subject_level;
  throw ValidationError("unknown split mode '" + s + "'");
}

inline std::string split_mode_name(SplitMode m) {
  return m == SplitMode::sample_level ? "sample" : "subject";
}

using SplitRatios = std::array<double, 3>;

// Largest-remainder apportionment of n items. Ties in the fractional part go
// to the earlier bucket.
inline std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios) {
  double sum = 0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw ValidationError("split ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("split ratios must sum to 1");
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = static_cast<double>(n) * ratios[i];
    sizes[i] = static_cast<std::size_t>(std::floor(exact));
    frac[i] = exact - std::floor(exact);
    assigned += sizes[i];
  }
  std::array<std::size_t, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % 3]];
  return sizes;
}

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

// Seeded split over items identified by `groups` (one key per item). In
// sample_level mode every item is shuffled independently; in subject_level
// mode whole groups are apportioned. Indices within each part are ascending.
inline SplitIndices split_indices(const std::vector<std::string>& groups, const SplitRatios& ratios,
                                  std::uint64_t seed, SplitMode mode) {
  if (groups.empty()) throw ValidationError("split_dataset: no samples");
  std::mt19937_64 rng(seed);
  SplitIndices out;
  const std::array<std::vector<std::size_t>*, 3> parts{&out.train, &out.val, &out.test};

  if (mode == SplitMode::sample_level) {
    std::vector<std::size_t> idx(groups.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto sizes = split_sizes(idx.size(), ratios);
    std::size_t at = 0;
    for (std::size_t p = 0; p < 3; ++p) {
      parts[p]->assign(idx.begin() + static_cast<std::ptrdiff_t>(at),
                       idx.begin() + static_cast<std::ptrdiff_t>(at + sizes[p]));
      at += sizes[p];
    }
  } else {
    std::vector<std::string> keys;
    std::map<std::string, std::size_t> key_index;
    for (const auto& g : groups)
      if (key_index.emplace(g, keys.size()).second) keys.push_back(g);
    std::vector<std::size_t> order(keys.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const auto sizes = split_sizes(order.size(), ratios);
    std::vector<int> part_of(keys.size());
    std::size_t at = 0;
    for (int p = 0; p < 3; ++p) {
      for (std::size_t k = 0; k < sizes[static_cast<std::size_t>(p)]; ++k)
        part_of[order[at + k]] = p;
      at += sizes[static_cast<std::size_t>(p)];
    }
    for (std::size_t i = 0; i < groups.size(); ++i)
      parts[part_of[key_index[groups[i]]]]->push_back(i);
  }
  for (std::size_t p = 0; p < 3; ++p) std::sort(parts[p]->begin(), parts[p]->end());
  return out;
}

struct DatasetSplit {
  std::vector<GaitCycleSample> train, val, test;
  SplitRatios ratios{0.70, 0.15, 0.15};
  std::uint64_t seed = 0;
  SplitMode mode = SplitMode::sample_level;
};

inline DatasetSplit split_dataset(const std::vector<GaitCycleSample>& samples,
                                  const SplitRatios& ratios, std::uint64_t seed, SplitMode mode) {
  std::vector<std::string> groups;
  groups.reserve(samples.size());
  for (const auto& s : samples) groups.push_back(subject_group(s.subject_id));
  const auto idx = split_indices(groups, ratios, seed, mode);
  DatasetSplit out;
  out.ratios = ratios;
  out.seed = seed;
  out.mode = mode;
  for (auto i : idx.train) out.train.push_back(samples[i]);
  for (auto i : idx.val) out.val.push_back(samples[i]);
  for (auto i : idx.test) out.test.push_back(samples[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Whole pipeline

struct PreprocessOptions {
  int window = kCycleRows;
  SplitRatios ratios{0.70, 0.15, 0.15};
  std::uint64_t seed = 0;
  SplitMode mode = SplitMode::sample_level;
};

struct PreprocessResult {
  std::vector<GaitCycleSample> samples;  // recording order, then cycle order
  SplitIndices split;
  NormStats stats;
  // cohort name -> {CO cycles, PD cycles}
  std::map<std::string, std::array<std::size_t, 2>> cycle_counts;
};

// Split first (cycle identities only), fit the normaliser on the rows of the
// training cycles, then normalise -> reduce -> segment every recording.
// Normalisation and reduction act row-wise, so this equals running them
// before segmentation.
inline PreprocessResult preprocess(const std::vector<RawRecording>& recordings,
                                   const PreprocessOptions& opt) {
  if (recordings.empty()) throw ValidationError("preprocess: no recordings");
  if (opt.window <= 0) throw ValidationError("preprocess: window must be positive");
  const auto w = static_cast<std::size_t>(opt.window);

  std::vector<std::pair<std::size_t, std::size_t>> ids;  // (recording, cycle)
  std::vector<std::string> groups;
  for (std::size_t r = 0; r < recordings.size(); ++r) {
    const std::size_t n = recordings[r].rows() / w;
    for (std::size_t c = 0; c < n; ++c) {
      ids.emplace_back(r, c);
      groups.push_back(subject_group(recordings[r].meta.subject_id));
    }
  }
  if (ids.empty()) throw ValidationError("preprocess: no recording holds a complete cycle");

  PreprocessResult out;
  out.split = split_indices(groups, opt.ratios, opt.seed, opt.mode);
  if (out.split.train.empty()) throw ValidationError("preprocess: training split is empty");

  NormStatsAccumulator acc;
  for (auto i : out.split.train) {
    auto [r, c] = ids[i];
    acc.observe(recordings[r], c * w, (c + 1) * w);
  }
  out.stats = acc.finish("train");

  out.samples.reserve(ids.size());
  for (const auto& rec : recordings) {
    auto cycles = segment_cycles(reduce_lr(normalize(rec, out.stats)), opt.window);
    auto& counts = out.cycle_counts[std::string(cohort_name(rec.meta.cohort))];
    counts[static_cast<std::size_t>(rec.meta.label)] += cycles.size();
    for (std::size_t c = 0; c < cycles.size(); ++c) {
      GaitCycleSample s;
      s.features = std::move(cycles[c]);
      s.label = rec.meta.label;
      s.subject_id = rec.meta.subject_id;
      s.cycle_index = static_cast<int>(c);
      s.severity = rec.meta.severity;
      s.cohort = rec.meta.cohort;
      out.samples.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace cgg
