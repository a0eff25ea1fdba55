#pragma once

// The full classifier: per-node conv stack -> stacked GRU -> GAT layers ->
// mean pool -> dense + sigmoid, with dropout after the conv stack, after the
// GRU output and after every GAT layer.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cgg/nn/conv1d.hpp"
#include "cgg/nn/gat.hpp"
#include "cgg/nn/gru.hpp"
#include "cgg/nn/head.hpp"
#include "cgg/nn/tensor.hpp"
#include "cgg/preprocess.hpp"

namespace cgg::nn {

struct ModelConfig {
  int in_channels = 1;
  std::vector<int> conv_channels{32, 32, 32};
  int kernel_size = 3;
  int gru_hidden = 256;
  int gru_layers = 2;
  int gat_dim = 256;
  int gat_layers = 2;
  double leaky_slope = 0.2;
  double dropout = 0.2;
  int n_nodes = kNodes;
  int seq_len = kCycleRows;
  std::uint64_t init_seed = 0;
  bool use_float32 = false;

  int conv_output_length() const {
    return seq_len - static_cast<int>(conv_channels.size()) * (kernel_size - 1);
  }

  void validate() const {
    if (in_channels != 1) throw ValidationError("model: in_channels must be 1 (one signal per node)");
    if (conv_channels.empty()) throw ValidationError("model: at least one conv layer required");
    for (int c : conv_channels)
      if (c < 1) throw ValidationError("model: conv channel widths must be >= 1");
    if (kernel_size < 1) throw ValidationError("model: kernel_size must be >= 1");
    if (gru_hidden < 1 || gru_layers < 1) throw ValidationError("model: GRU needs >= 1 layer and unit");
    if (gat_dim < 1 || gat_layers < 1) throw ValidationError("model: GAT needs >= 1 layer and unit");
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0))
      throw ValidationError("model: leaky_slope must lie in (0,1)");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("model: dropout must lie in [0,1)");
    if (n_nodes < 1) throw ValidationError("model: n_nodes must be >= 1");
    if (conv_output_length() < 1)
      throw ValidationError("model: seq_len " + std::to_string(seq_len) + " too short for the conv stack");
  }

  bool operator==(const ModelConfig&) const = default;
};

template <class Scalar>
struct ModelParams {
  ModelConfig config;
  std::vector<ConvLayer<Scalar>> conv;
  std::vector<GruLayer<Scalar>> gru;
  std::vector<GatLayer<Scalar>> gat;
  DenseHead<Scalar> fc;
};

struct ArrayInfo {
  std::string name;
  std::vector<Index> shape;
  Index fan_in = 0;
  Index fan_out = 0;
  bool is_bias = false;
};

// Calls f(const ArrayInfo&, Mat&) for every learnable array in a fixed order.
template <class Params, class F>
void for_each_array(Params& p, F&& f) {
  for (std::size_t i = 0; i < p.conv.size(); ++i) {
    auto& l = p.conv[i];
    const std::string pre = "conv" + std::to_string(i) + ".";
    const Index out = l.out_channels(), in = l.in_channels(), k = l.kernel_size();
    f(ArrayInfo{pre + "weight", {out, in, k}, in * k, out * k, false}, l.weight);
    f(ArrayInfo{pre + "bias", {out}, in * k, out * k, true}, l.bias);
  }
  for (std::size_t i = 0; i < p.gru.size(); ++i) {
    auto& l = p.gru[i];
    const std::string pre = "gru" + std::to_string(i) + ".";
    const Index h = l.hidden(), cols = l.wz.cols();
    f(ArrayInfo{pre + "w_z", {h, cols}, cols, h, false}, l.wz);
    f(ArrayInfo{pre + "w_r", {h, cols}, cols, h, false}, l.wr);
    f(ArrayInfo{pre + "w", {h, cols}, cols, h, false}, l.wc);
    f(ArrayInfo{pre + "b_z", {h}, cols, h, true}, l.bz);
    f(ArrayInfo{pre + "b_r", {h}, cols, h, true}, l.br);
    f(ArrayInfo{pre + "b", {h}, cols, h, true}, l.bc);
  }
  for (std::size_t i = 0; i < p.gat.size(); ++i) {
    auto& l = p.gat[i];
    const std::string pre = "gat" + std::to_string(i) + ".";
    const Index out = l.out_dim(), in = l.in_dim();
    f(ArrayInfo{pre + "weight", {out, in}, in, out, false}, l.weight);
    f(ArrayInfo{pre + "attn", {2 * out}, 2 * out, 1, false}, l.attn);
  }
  const Index d = p.fc.weight.cols();
  f(ArrayInfo{"fc.weight", {1, d}, d, 1, false}, p.fc.weight);
  f(ArrayInfo{"fc.bias", {1}, d, 1, true}, p.fc.bias);
}

// All-zero parameters with the shapes implied by `config`.
template <class Scalar>
ModelParams<Scalar> zero_params(const ModelConfig& config) {
  config.validate();
  ModelParams<Scalar> p;
  p.config = config;
  Index in = config.in_channels;
  for (int c : config.conv_channels) {
    p.conv.push_back(make_conv_layer<Scalar>(in, c, config.kernel_size));
    in = c;
  }
  for (int i = 0; i < config.gru_layers; ++i) {
    p.gru.push_back(make_gru_layer<Scalar>(in, config.gru_hidden));
    in = config.gru_hidden;
  }
  for (int i = 0; i < config.gat_layers; ++i) {
    p.gat.push_back(make_gat_layer<Scalar>(in, config.gat_dim, static_cast<Scalar>(config.leaky_slope)));
    in = config.gat_dim;
  }
  p.fc = make_dense_head<Scalar>(in);
  return p;
}

template <class Scalar>
ModelParams<Scalar> zeros_like(const ModelParams<Scalar>& p) {
  auto z = p;
  for_each_array(z, [](const ArrayInfo&, Mat<Scalar>& m) { m.setZero(); });
  return z;
}

// Glorot-uniform weights, bound sqrt(6 / (fan_in + fan_out)); zero biases.
template <class Scalar>
ModelParams<Scalar> init_params(const ModelConfig& config, std::uint64_t seed) {
  auto p = zero_params<Scalar>(config);
  std::mt19937_64 rng(seed);
  for_each_array(p, [&](const ArrayInfo& info, Mat<Scalar>& m) {
    if (info.is_bias) return;
    const double bound = std::sqrt(6.0 / static_cast<double>(info.fan_in + info.fan_out));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Index c = 0; c < m.cols(); ++c)
      for (Index r = 0; r < m.rows(); ++r) m(r, c) = static_cast<Scalar>(u(rng));
  });
  return p;
}

template <class Scalar>
ModelParams<Scalar> init_params(const ModelConfig& config) {
  return init_params<Scalar>(config, config.init_seed);
}

template <class Scalar>
std::size_t param_count(const ModelParams<Scalar>& p) {
  std::size_t n = 0;
  for_each_array(p, [&](const ArrayInfo&, const Mat<Scalar>& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

// Closed form of param_count for a configuration:
//   conv:  sum_l  c_l * (c_{l-1} * K + 1)
//   gru:   sum_l  3 * (H * (H + in_l) + H)
//   gat:   sum_l  D * in_l + 2 * D
//   head:  D + 1
inline std::size_t param_count(const ModelConfig& c) {
  std::size_t n = 0;
  std::size_t in = static_cast<std::size_t>(c.in_channels);
  const auto k = static_cast<std::size_t>(c.kernel_size);
  for (int w : c.conv_channels) {
    n += static_cast<std::size_t>(w) * (in * k + 1);
    in = static_cast<std::size_t>(w);
  }
  const auto h = static_cast<std::size_t>(c.gru_hidden);
  for (int l = 0; l < c.gru_layers; ++l) {
    n += 3 * (h * (h + in) + h);
    in = h;
  }
  const auto d = static_cast<std::size_t>(c.gat_dim);
  for (int l = 0; l < c.gat_layers; ++l) {
    n += d * in + 2 * d;
    in = d;
  }
  return n + in + 1;
}

// ---------------------------------------------------------------------------
// Forward / backward

enum class Mode {
  inference,  // dropout is the identity
  training,   // fresh dropout masks drawn from the supplied generator
  replay      // dropout masks taken from a previous forward pass
};

template <class Scalar>
struct DropoutMasks {
  Mat<Scalar> conv;
  Mat<Scalar> gru;
  std::vector<Mat<Scalar>> gat;
};

template <class Scalar>
struct ForwardCache {
  Index batch = 0;
  Index nodes = 0;
  std::vector<ConvCache<Scalar>> conv;
  std::vector<Mat<Scalar>> conv_pre;  // before ReLU
  std::vector<GruCache<Scalar>> gru;
  std::vector<GatCache<Scalar>> gat;
  std::vector<std::vector<Mat<Scalar>>> attention;  // per GAT layer, per graph
  Mat<Scalar> node_embeddings;  // final GAT output (after its dropout), [d x N*B]
  Mat<Scalar> pooled;           // [d x B]
  Mat<Scalar> logits;           // [1 x B]
  Mat<Scalar> probs;            // [1 x B]
  DropoutMasks<Scalar> masks;
  bool dropout_active = false;
  bool valid = false;
};

namespace detail {

template <class Scalar>
Mat<Scalar> relu(const Mat<Scalar>& x) {
  return x.cwiseMax(Scalar(0));
}

}  // namespace detail

// Packs per-sample [N x L] feature matrices into the [1 x L*N*B] time-major
// input, column t*S + b*N + n.
template <class Scalar>
Mat<Scalar> pack_batch(std::span<const CycleMatrix* const> batch, const ModelConfig& cfg) {
  const Index n = cfg.n_nodes, len = cfg.seq_len;
  const auto b = static_cast<Index>(batch.size());
  require_shape(b > 0, "forward: empty batch");
  for (const auto* f : batch)
    require_shape(f && f->rows() == n && f->cols() == len,
                  "forward: sample features " + shape_str(f ? f->rows() : 0, f ? f->cols() : 0) +
                      ", expected " + shape_str(n, len));
  const Index s = n * b;
  Mat<Scalar> x(1, len * s);
  for (Index t = 0; t < len; ++t)
    for (Index i = 0; i < b; ++i)
      for (Index node = 0; node < n; ++node)
        x(0, t * s + i * n + node) = static_cast<Scalar>((*batch[static_cast<std::size_t>(i)])(node, t));
  return x;
}

template <class Scalar, class Rng = std::mt19937_64>
Mat<Scalar> forward(const ModelParams<Scalar>& p, std::span<const CycleMatrix* const> batch,
                    const SensorGraph& graph, Mode mode, Rng* rng = nullptr,
                    ForwardCache<Scalar>* cache = nullptr,
                    const DropoutMasks<Scalar>* replay = nullptr) {
  const auto& cfg = p.config;
  require_shape(graph.n_nodes == cfg.n_nodes,
                "forward: graph has " + std::to_string(graph.n_nodes) + " nodes, model expects " +
                    std::to_string(cfg.n_nodes));
  if (mode == Mode::training && !rng) throw Error("forward: training mode needs a generator");
  if (mode == Mode::replay && !replay) throw Error("forward: replay mode needs dropout masks");

  const Mat<Scalar> input = pack_batch<Scalar>(batch, cfg);
  const Index n = cfg.n_nodes;
  const auto b = static_cast<Index>(batch.size());
  const Index s = n * b;
  const double p_drop = cfg.dropout;
  const bool drop = mode != Mode::inference && p_drop > 0.0;

  DropoutMasks<Scalar> masks;
  auto apply_drop = [&](Mat<Scalar>& x, Mat<Scalar>& slot, const Mat<Scalar>* given) {
    if (!drop) return;
    if (mode == Mode::replay) {
      require_shape(given && given->rows() == x.rows() && given->cols() == x.cols(),
                    "forward: replayed dropout mask has the wrong shape");
      slot = *given;
    } else {
      slot = dropout_mask<Scalar>(x.rows(), x.cols(), p_drop, *rng);
    }
    x.array() *= slot.array();
  };

  if (cache) {
    *cache = ForwardCache<Scalar>{};
    cache->batch = b;
    cache->nodes = n;
    cache->conv.resize(p.conv.size());
    cache->gru.resize(p.gru.size());
    cache->gat.resize(p.gat.size());
    cache->attention.resize(p.gat.size());
  }

  Mat<Scalar> x = input;
  for (std::size_t l = 0; l < p.conv.size(); ++l) {
    Mat<Scalar> pre = conv1d_forward(p.conv[l], x, s, cache ? &cache->conv[l] : nullptr);
    x = detail::relu(pre);
    if (cache) cache->conv_pre.push_back(std::move(pre));
  }
  apply_drop(x, masks.conv, replay ? &replay->conv : nullptr);

  for (std::size_t l = 0; l < p.gru.size(); ++l)
    x = gru_layer_forward(p.gru[l], x, s, cache ? &cache->gru[l] : nullptr);
  Mat<Scalar> h = x.rightCols(s);
  apply_drop(h, masks.gru, replay ? &replay->gru : nullptr);

  masks.gat.resize(p.gat.size());
  for (std::size_t l = 0; l < p.gat.size(); ++l) {
    h = gat_forward(p.gat[l], h, graph, cache ? &cache->gat[l] : nullptr,
                    cache ? &cache->attention[l] : nullptr);
    const Mat<Scalar>* given = nullptr;
    if (replay) {
      require_shape(replay->gat.size() == p.gat.size(), "forward: replayed masks miss GAT layers");
      given = &replay->gat[l];
    }
    apply_drop(h, masks.gat[l], given);
  }

  Mat<Scalar> pooled = mean_pool(h, n);
  Mat<Scalar> logits = dense_logits(p.fc, pooled);
  Mat<Scalar> probs = sigmoid(logits);
  if (cache) {
    cache->node_embeddings = std::move(h);
    cache->pooled = std::move(pooled);
    cache->logits = std::move(logits);
    cache->probs = probs;
    cache->masks = std::move(masks);
    cache->dropout_active = drop;
    cache->valid = true;
  }
  return probs;
}

// Accumulates dLoss/dparams into `grads` given dLoss/dlogits [1 x B] and
// returns dLoss/dinput ([1 x L*N*B], time-major).
template <class Scalar>
Mat<Scalar> backward(const ModelParams<Scalar>& p, const ForwardCache<Scalar>& cache,
                     const Mat<Scalar>& dlogits, ModelParams<Scalar>& grads) {
  if (!cache.valid) throw Error("backward: no cached forward pass");
  require_shape(dlogits.rows() == 1 && dlogits.cols() == cache.batch,
                "backward: dlogits must be [1 x batch]");
  const Index n = cache.nodes;
  const Index s = n * cache.batch;

  Mat<Scalar> dpooled = dense_backward(p.fc, cache.pooled, dlogits, grads.fc);
  Mat<Scalar> dh = mean_pool_backward(dpooled, n);
  for (std::size_t l = p.gat.size(); l-- > 0;) {
    if (cache.dropout_active) dh.array() *= cache.masks.gat[l].array();
    dh = gat_backward(p.gat[l], cache.gat[l], dh, grads.gat[l]);
  }
  if (cache.dropout_active) dh.array() *= cache.masks.gru.array();

  const Index steps = static_cast<Index>(cache.gru.back().z.size());
  Mat<Scalar> dseq = Mat<Scalar>::Zero(p.gru.back().hidden(), steps * s);
  dseq.rightCols(s) = dh;
  for (std::size_t l = p.gru.size(); l-- > 0;) dseq = gru_layer_backward(p.gru[l], cache.gru[l], dseq, grads.gru[l]);

  Mat<Scalar> dx = std::move(dseq);
  if (cache.dropout_active) dx.array() *= cache.masks.conv.array();
  for (std::size_t l = p.conv.size(); l-- > 0;) {
    dx = dx.cwiseProduct(cache.conv_pre[l].unaryExpr([](Scalar v) { return v > Scalar(0) ? Scalar(1) : Scalar(0); }));
    dx = conv1d_backward(p.conv[l], cache.conv[l], dx, grads.conv[l]);
  }
  return dx;
}

// Inference-mode probabilities for many samples, `chunk` graphs at a time.
template <class Scalar>
std::vector<double> predict(const ModelParams<Scalar>& p, std::span<const CycleMatrix* const> samples,
                            const SensorGraph& graph, std::size_t chunk = 32) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (std::size_t at = 0; at < samples.size(); at += chunk) {
    const auto len = std::min(chunk, samples.size() - at);
    const auto probs = forward<Scalar>(p, samples.subspan(at, len), graph, Mode::inference);
    for (Index i = 0; i < probs.cols(); ++i) out.push_back(static_cast<double>(probs(0, i)));
  }
  return out;
}

}  // namespace cgg::nn
