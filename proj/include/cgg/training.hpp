#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <type_traits>
#include <vector>

#include "cgg/error.hpp"
#include "cgg/nn/model.hpp"
#include "cgg/preprocess.hpp"

namespace cgg {

inline constexpr double kProbClip = 1e-7;

inline double clip_prob(double p) { return std::clamp(p, kProbClip, 1.0 - kProbClip); }

inline bool clip_active(double p) { return p <= kProbClip || p >= 1.0 - kProbClip; }

// Mean binary cross-entropy over a batch, predictions clipped to [1e-7, 1-1e-7].
inline double bce_loss(std::span<const double> yhat, std::span<const int> y) {
  if (yhat.empty()) throw ValidationError("bce_loss: empty batch");
  if (yhat.size() != y.size()) throw ShapeError("bce_loss: predictions and labels differ in length");
  double sum = 0;
  for (std::size_t k = 0; k < yhat.size(); ++k) {
    const double p = clip_prob(yhat[k]);
    sum += y[k] ? std::log(p) : std::log(1.0 - p);
  }
  return -sum / static_cast<double>(yhat.size());
}

// dBCE/dyhat. Zero wherever clipping is active (the clipped loss is flat there).
inline std::vector<double> bce_grad(std::span<const double> yhat, std::span<const int> y) {
  if (yhat.empty()) throw ValidationError("bce_grad: empty batch");
  if (yhat.size() != y.size()) throw ShapeError("bce_grad: predictions and labels differ in length");
  const double n = static_cast<double>(yhat.size());
  std::vector<double> g(yhat.size(), 0.0);
  for (std::size_t k = 0; k < yhat.size(); ++k) {
    const double p = yhat[k];
    if (clip_active(p)) continue;
    g[k] = (p - y[k]) / (n * p * (1.0 - p));
  }
  return g;
}

// dBCE/dlogit for yhat = sigmoid(logit): (yhat - y) / N outside the clipped region.
inline std::vector<double> bce_logit_grad(std::span<const double> yhat, std::span<const int> y,
                                          double n) {
  if (yhat.size() != y.size()) throw ShapeError("bce_logit_grad: length mismatch");
  std::vector<double> g(yhat.size(), 0.0);
  for (std::size_t k = 0; k < yhat.size(); ++k)
    if (!clip_active(yhat[k])) g[k] = (yhat[k] - y[k]) / n;
  return g;
}

struct TrainConfig {
  int batch_size = 128;
  int epochs = 140;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;          // epoch shuffling
  std::uint64_t dropout_seed = 1;  // dropout masks
  bool shuffle = true;
  int checkpoint_every = 0;  // epochs; 0 disables periodic checkpoints
  int micro_batch = 16;      // graphs per forward/backward chunk; gradients are summed

  void validate() const {
    if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
    if (epochs < 0) throw ValidationError("train: epochs must be >= 0");
    if (!(learning_rate > 0.0)) throw ValidationError("train: learning_rate must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
      throw ValidationError("train: Adam betas must lie in (0,1)");
    if (!(epsilon > 0.0)) throw ValidationError("train: epsilon must be > 0");
    if (checkpoint_every < 0) throw ValidationError("train: checkpoint_every must be >= 0");
    if (micro_batch < 1) throw ValidationError("train: micro_batch must be >= 1");
  }

  bool operator==(const TrainConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Adam

template <class Scalar>
struct AdamState {
  std::vector<nn::Mat<Scalar>> m, v;
  std::uint64_t t = 0;

  static AdamState zeros_for(const nn::ModelParams<Scalar>& p) {
    AdamState s;
    nn::for_each_array(p, [&](const nn::ArrayInfo&, const nn::Mat<Scalar>& a) {
      s.m.push_back(nn::Mat<Scalar>::Zero(a.rows(), a.cols()));
      s.v.push_back(nn::Mat<Scalar>::Zero(a.rows(), a.cols()));
    });
    return s;
  }
};

template <class Scalar>
void adam_step(nn::ModelParams<Scalar>& params, const nn::ModelParams<Scalar>& grads,
               AdamState<Scalar>& state, const TrainConfig& cfg) {
  std::vector<const nn::Mat<Scalar>*> g;
  nn::for_each_array(grads, [&](const nn::ArrayInfo& info, const nn::Mat<Scalar>& a) {
    if (!a.allFinite()) throw Error("adam_step: non-finite gradient in " + info.name);
    g.push_back(&a);
  });
  if (state.m.empty()) state = AdamState<Scalar>::zeros_for(params);
  if (state.m.size() != g.size()) throw ShapeError("adam_step: state does not match parameters");

  ++state.t;
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  const auto lr = static_cast<Scalar>(cfg.learning_rate);
  const auto eps = static_cast<Scalar>(cfg.epsilon);
  const auto c1 = static_cast<Scalar>(1.0 - std::pow(cfg.beta1, static_cast<double>(state.t)));
  const auto c2 = static_cast<Scalar>(1.0 - std::pow(cfg.beta2, static_cast<double>(state.t)));
  std::size_t i = 0;
  nn::for_each_array(params, [&](const nn::ArrayInfo& info, nn::Mat<Scalar>& theta) {
    const auto& grad = *g[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (grad.rows() != theta.rows() || grad.cols() != theta.cols() || m.rows() != theta.rows() ||
        m.cols() != theta.cols())
      throw ShapeError("adam_step: shape mismatch in " + info.name);
    m = b1 * m + (Scalar(1) - b1) * grad;
    v = b2 * v + (Scalar(1) - b2) * grad.cwiseProduct(grad);
    theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    ++i;
  });
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0, train_accuracy = 0;
  double val_loss = 0, val_accuracy = 0;

  bool operator==(const EpochRecord&) const = default;
};

using TrainHistory = std::vector<EpochRecord>;

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

inline std::vector<const CycleMatrix*> feature_ptrs(std::span<const GaitCycleSample> samples) {
  std::vector<const CycleMatrix*> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(&s.features);
  return out;
}

inline std::vector<int> labels_of(std::span<const GaitCycleSample> samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

// Loss and accuracy (threshold 0.5) of inference-mode predictions.
template <class Scalar>
std::pair<double, double> score_set(const nn::ModelParams<Scalar>& p,
                                    std::span<const GaitCycleSample> samples,
                                    const SensorGraph& graph, std::size_t chunk) {
  if (samples.empty()) return {0.0, 0.0};
  const auto ptrs = feature_ptrs(samples);
  const auto probs = nn::predict(p, std::span<const CycleMatrix* const>(ptrs), graph, chunk);
  const auto labels = labels_of(samples);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) correct += (probs[i] >= 0.5) == (labels[i] == 1);
  return {bce_loss(probs, labels), static_cast<double>(correct) / static_cast<double>(probs.size())};
}

// One optimiser step on `batch`. Returns the training-mode batch loss.
template <class Scalar, class Rng>
double train_step(nn::ModelParams<Scalar>& params, AdamState<Scalar>& adam,
                  std::span<const CycleMatrix* const> batch, std::span<const int> labels,
                  const SensorGraph& graph, const TrainConfig& cfg, Rng& dropout_rng) {
  if (batch.empty()) throw ValidationError("train_step: empty batch");
  auto grads = nn::zeros_like(params);
  const double n = static_cast<double>(batch.size());
  const auto chunk = static_cast<std::size_t>(cfg.micro_batch);
  double loss_sum = 0;
  nn::ForwardCache<Scalar> cache;
  for (std::size_t at = 0; at < batch.size(); at += chunk) {
    const auto len = std::min(chunk, batch.size() - at);
    const auto probs_m = nn::forward<Scalar>(params, batch.subspan(at, len), graph, nn::Mode::training,
                                             &dropout_rng, &cache);
    std::vector<double> probs(len);
    for (std::size_t i = 0; i < len; ++i) probs[i] = static_cast<double>(probs_m(0, static_cast<nn::Index>(i)));
    const auto lab = labels.subspan(at, len);
    loss_sum += bce_loss(probs, lab) * static_cast<double>(len);
    const auto g = bce_logit_grad(probs, lab, n);
    nn::Mat<Scalar> dlogits(1, static_cast<nn::Index>(len));
    for (std::size_t i = 0; i < len; ++i) dlogits(0, static_cast<nn::Index>(i)) = static_cast<Scalar>(g[i]);
    nn::backward(params, cache, dlogits, grads);
  }
  const double loss = loss_sum / n;
  if (!std::isfinite(loss)) throw TrainingDiverged("non-finite training loss");
  adam_step(params, grads, adam, cfg);
  return loss;
}

template <class Scalar>
struct TrainResult {
  nn::ModelParams<Scalar> params;
  TrainHistory history;
};

// Called after every epoch with the record just appended and the current
// parameters.
template <class Scalar>
using EpochCallback = std::function<void(const EpochRecord&, const nn::ModelParams<Scalar>&)>;

// Seeded shuffle each epoch, batches of batch_size (the last one may be
// short), Adam updates, then inference-mode scoring of train and val.
// On a non-finite loss the parameters from the start of the epoch are
// handed to `on_diverge` before TrainingDiverged propagates.
template <class Scalar>
TrainResult<Scalar> train(nn::ModelParams<Scalar> params, std::span<const GaitCycleSample> train_set,
                          std::span<const GaitCycleSample> val_set, const SensorGraph& graph,
                          const TrainConfig& cfg, std::type_identity_t<EpochCallback<Scalar>> on_epoch = {},
                          std::type_identity_t<std::function<void(const nn::ModelParams<Scalar>&)>> on_diverge = {}) {
  cfg.validate();
  if (train_set.empty() || val_set.empty()) throw ValidationError("train: train and val sets must be non-empty");
  std::mt19937_64 shuffle_rng(cfg.seed);
  std::mt19937_64 dropout_rng(cfg.dropout_seed);
  auto adam = AdamState<Scalar>::zeros_for(params);
  const auto ptrs = feature_ptrs(train_set);
  const auto labels = labels_of(train_set);
  std::vector<std::size_t> order(train_set.size());
  std::vector<const CycleMatrix*> batch;
  std::vector<int> batch_labels;
  const auto chunk = static_cast<std::size_t>(std::max(cfg.micro_batch, 1)) * 2;

  TrainResult<Scalar> result;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto last_good = params;
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), shuffle_rng);
    try {
      for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
        const auto end = std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size));
        batch.clear();
        batch_labels.clear();
        for (std::size_t k = at; k < end; ++k) {
          batch.push_back(ptrs[order[k]]);
          batch_labels.push_back(labels[order[k]]);
        }
        train_step(params, adam, std::span<const CycleMatrix* const>(batch), batch_labels, graph, cfg,
                   dropout_rng);
      }
    } catch (const Error&) {
      if (on_diverge) on_diverge(last_good);
      throw;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    std::tie(rec.train_loss, rec.train_accuracy) = score_set(params, train_set, graph, chunk);
    std::tie(rec.val_loss, rec.val_accuracy) = score_set(params, val_set, graph, chunk);
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss)) {
      if (on_diverge) on_diverge(last_good);
      throw TrainingDiverged("non-finite loss after epoch " + std::to_string(epoch));
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec, params);
  }
  result.params = std::move(params);
  return result;
}

}  // namespace cgg
