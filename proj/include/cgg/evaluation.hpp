#pragma once

// Classification metrics, ROC/AUC and attention-based node importance.
// The positive class is PD (label 1); a score >= threshold predicts PD.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cgg/error.hpp"
#include "cgg/nn/model.hpp"
#include "cgg/preprocess.hpp"

namespace cgg {

struct ConfusionMatrix {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

inline ConfusionMatrix confusion(std::span<const double> scores, std::span<const int> labels,
                                 double threshold = 0.5) {
  if (scores.size() != labels.size()) throw ShapeError("confusion: scores and labels differ in length");
  if (scores.empty()) throw ValidationError("confusion: no samples");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    const bool pos = labels[i] == 1;
    if (pred && pos) ++cm.tp;
    else if (pred) ++cm.fp;
    else if (pos) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

struct ClassificationMetrics {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  std::vector<std::string> flags;  // degenerate denominators
};

inline ClassificationMetrics metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ValidationError("metrics: empty confusion matrix");
  ClassificationMetrics m;
  const auto d = [](std::uint64_t x) { return static_cast<double>(x); };
  m.accuracy = d(cm.tp + cm.tn) / d(cm.total());
  if (cm.tp + cm.fp == 0) m.flags.push_back("precision_undefined");
  else m.precision = d(cm.tp) / d(cm.tp + cm.fp);
  if (cm.tp + cm.fn == 0) m.flags.push_back("recall_undefined");
  else m.recall = d(cm.tp) / d(cm.tp + cm.fn);
  if (m.precision + m.recall > 0.0) m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  else m.flags.push_back("f1_undefined");
  return m;
}

struct RocCurve {
  std::vector<std::pair<double, double>> points;  // (fpr, tpr), (0,0) ... (1,1)
  double auc = 0;
};

// Threshold sweep over every distinct score (ties form one step) and
// trapezoidal area, which equals the Mann-Whitney statistic with half credit
// for ties.
inline RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("roc_auc: scores and labels differ in length");
  std::size_t pos = 0, neg = 0;
  for (int y : labels) (y == 1 ? pos : neg)++;
  if (pos == 0 || neg == 0) throw ValidationError("roc_auc: need both classes, AUC is undefined");

  std::vector<std::size_t> idx(scores.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve roc;
  roc.points.emplace_back(0.0, 0.0);
  std::size_t tp = 0, fp = 0;
  double area = 0;
  for (std::size_t i = 0; i < idx.size();) {
    const double s = scores[idx[i]];
    for (; i < idx.size() && scores[idx[i]] == s; ++i) (labels[idx[i]] == 1 ? tp : fp)++;
    const double x = static_cast<double>(fp) / static_cast<double>(neg);
    const double y = static_cast<double>(tp) / static_cast<double>(pos);
    const auto [px, py] = roc.points.back();
    area += (x - px) * (y + py) / 2.0;
    roc.points.emplace_back(x, y);
  }
  roc.auc = area;
  return roc;
}

struct MetricsReport {
  std::size_t n = 0;
  double threshold = 0.5;
  ConfusionMatrix confusion;
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  std::optional<double> auc;
  std::vector<std::pair<double, double>> roc;
  std::vector<std::string> flags;
};

inline MetricsReport metrics_report(std::span<const double> scores, std::span<const int> labels,
                                    double threshold = 0.5) {
  MetricsReport r;
  r.n = scores.size();
  r.threshold = threshold;
  r.confusion = confusion(scores, labels, threshold);
  auto m = metrics(r.confusion);
  r.accuracy = m.accuracy;
  r.precision = m.precision;
  r.recall = m.recall;
  r.f1 = m.f1;
  r.flags = std::move(m.flags);
  const bool has_pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
  const bool has_neg = std::find_if(labels.begin(), labels.end(), [](int y) { return y != 1; }) != labels.end();
  if (has_pos && has_neg) {
    auto roc = roc_auc(scores, labels);
    r.auc = roc.auc;
    r.roc = std::move(roc.points);
  } else {
    r.flags.push_back("auc_undefined_single_class");
  }
  return r;
}

template <class Scalar>
MetricsReport evaluate(const nn::ModelParams<Scalar>& params, std::span<const GaitCycleSample> dataset,
                       const SensorGraph& graph, double threshold = 0.5, std::size_t chunk = 32) {
  if (dataset.empty()) throw ValidationError("evaluate: empty dataset");
  std::vector<const CycleMatrix*> ptrs;
  std::vector<int> labels;
  for (const auto& s : dataset) {
    ptrs.push_back(&s.features);
    labels.push_back(s.label);
  }
  const auto probs = nn::predict(params, std::span<const CycleMatrix* const>(ptrs), graph, chunk);
  return metrics_report(probs, labels, threshold);
}

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["n"] = r.n;
  j["threshold"] = r.threshold;
  j["confusion"] = {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"fn", r.confusion.fn}, {"tn", r.confusion.tn}};
  j["accuracy"] = r.accuracy;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  if (r.auc) j["auc"] = *r.auc;
  else j["auc"] = nullptr;
  auto roc = nlohmann::ordered_json::array();
  for (auto [x, y] : r.roc) roc.push_back({x, y});
  j["roc"] = std::move(roc);
  j["flags"] = r.flags;
  return j;
}

// ---------------------------------------------------------------------------
// Node importance

// Cold-to-warm colour stops, evenly spaced over [0,1].
inline constexpr std::array<std::array<int, 3>, 5> kWarmColormap = {{
    {49, 54, 149},   // #313695
    {116, 173, 209}, // #74add1
    {255, 255, 191}, // #ffffbf
    {244, 109, 67},  // #f46d43
    {165, 0, 38},    // #a50026
}};

inline std::string warm_color(double v) {
  v = std::clamp(v, 0.0, 1.0);
  const double pos = v * static_cast<double>(kWarmColormap.size() - 1);
  const auto lo = std::min(static_cast<std::size_t>(pos), kWarmColormap.size() - 2);
  const double f = pos - static_cast<double>(lo);
  char buf[8];
  int rgb[3];
  for (int c = 0; c < 3; ++c)
    rgb[c] = static_cast<int>(std::lround((1.0 - f) * kWarmColormap[lo][static_cast<std::size_t>(c)] +
                                          f * kWarmColormap[lo + 1][static_cast<std::size_t>(c)]));
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
  return buf;
}

// Min-max scaling across nodes; if every value is equal, all map to 0.5.
inline std::vector<double> minmax_scale(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  if (out.empty()) return out;
  const auto [lo, hi] = std::minmax_element(out.begin(), out.end());
  const double a = *lo, b = *hi;
  for (auto& x : out) x = (b == a) ? 0.5 : (x - a) / (b - a);
  return out;
}

struct NodeImportance {
  std::string subject_id;
  int cycle_index = 0;
  int label = 0;
  std::optional<Severity> severity;
  std::vector<double> importance;      // [N], scaled to [0,1]
  std::vector<double> attention_mass;  // [N], column sums of the last attention map
  std::vector<std::string> color;      // [N]
  std::vector<std::vector<double>> embeddings;  // [N][d], final GAT output
};

// Importance of node i: L2 norm of its final GAT embedding, min-max scaled
// over the graph's nodes.
inline NodeImportance importance_from_embeddings(const std::vector<std::vector<double>>& emb,
                                                 const std::vector<std::vector<double>>& alpha) {
  NodeImportance out;
  std::vector<double> norms;
  for (const auto& e : emb) {
    double s = 0;
    for (double x : e) s += x * x;
    norms.push_back(std::sqrt(s));
  }
  out.importance = minmax_scale(norms);
  const std::size_t n = emb.size();
  out.attention_mass.assign(n, 0.0);
  for (std::size_t i = 0; i < alpha.size(); ++i)
    for (std::size_t j = 0; j < n; ++j) out.attention_mass[j] += alpha[i][j];
  for (double v : out.importance) out.color.push_back(warm_color(v));
  out.embeddings = emb;
  return out;
}

template <class Scalar>
NodeImportance node_importance(const nn::ModelParams<Scalar>& params, const GaitCycleSample& sample,
                               const SensorGraph& graph) {
  nn::ForwardCache<Scalar> cache;
  const CycleMatrix* one[] = {&sample.features};
  nn::forward<Scalar>(params, std::span<const CycleMatrix* const>(one), graph, nn::Mode::inference,
                      static_cast<std::mt19937_64*>(nullptr), &cache);
  const auto& h = cache.node_embeddings;
  const auto& a = cache.attention.back().front();
  std::vector<std::vector<double>> emb(static_cast<std::size_t>(h.cols()));
  for (nn::Index n = 0; n < h.cols(); ++n)
    for (nn::Index r = 0; r < h.rows(); ++r) emb[static_cast<std::size_t>(n)].push_back(static_cast<double>(h(r, n)));
  std::vector<std::vector<double>> alpha(static_cast<std::size_t>(a.rows()));
  for (nn::Index i = 0; i < a.rows(); ++i)
    for (nn::Index j = 0; j < a.cols(); ++j) alpha[static_cast<std::size_t>(i)].push_back(static_cast<double>(a(i, j)));
  auto out = importance_from_embeddings(emb, alpha);
  out.subject_id = sample.subject_id;
  out.cycle_index = sample.cycle_index;
  out.label = sample.label;
  out.severity = sample.severity;
  return out;
}

inline nlohmann::ordered_json to_json(const NodeImportance& ni, bool with_embeddings = false) {
  nlohmann::ordered_json j;
  j["subject_id"] = ni.subject_id;
  j["cycle_index"] = ni.cycle_index;
  j["importance"] = ni.importance;
  j["attention_mass"] = ni.attention_mass;
  j["color"] = ni.color;
  if (with_embeddings) j["embeddings"] = ni.embeddings;
  return j;
}

// Mean importance per group key (e.g. severity "2.5" or label "CO").
struct ImportanceGroup {
  std::string key;
  std::size_t count = 0;
  std::vector<double> mean_importance;
  std::vector<double> mean_attention_mass;
};

inline std::vector<ImportanceGroup> group_importance(const std::vector<NodeImportance>& items,
                                                     const std::function<std::string(const NodeImportance&)>& key_of) {
  std::vector<ImportanceGroup> groups;
  for (const auto& it : items) {
    const auto key = key_of(it);
    auto g = std::find_if(groups.begin(), groups.end(), [&](const auto& x) { return x.key == key; });
    if (g == groups.end()) {
      groups.push_back({key, 0, std::vector<double>(it.importance.size(), 0.0),
                        std::vector<double>(it.attention_mass.size(), 0.0)});
      g = groups.end() - 1;
    }
    ++g->count;
    for (std::size_t i = 0; i < it.importance.size(); ++i) g->mean_importance[i] += it.importance[i];
    for (std::size_t i = 0; i < it.attention_mass.size(); ++i) g->mean_attention_mass[i] += it.attention_mass[i];
  }
  for (auto& g : groups) {
    for (auto& v : g.mean_importance) v /= static_cast<double>(g.count);
    for (auto& v : g.mean_attention_mass) v /= static_cast<double>(g.count);
  }
  std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
  return groups;
}

}  // namespace cgg
