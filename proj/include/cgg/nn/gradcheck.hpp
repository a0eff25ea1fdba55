#pragma once

// Central finite-difference verification of every analytic backward pass,
// at small shapes and in double precision.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cgg/nn/model.hpp"
#include "cgg/training.hpp"

namespace cgg::nn {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kGradTolerance = 1e-4;
// Denominator floor of the relative error, so that exactly-zero gradients
// compare by absolute error.
inline constexpr double kRelErrFloor = 1e-6;

struct GradReport {
  std::string layer;
  double max_rel_err = 0;
  std::uint64_t seed = 0;
  std::size_t checked = 0;
  std::string worst;  // array holding the worst element

  bool passed(double tol = kGradTolerance) const { return max_rel_err <= tol; }
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), kRelErrFloor});
}

using Md = Mat<double>;

namespace detail {

// Compares `analytic` with central differences of `objective` w.r.t. every
// element of `x`.
inline void check_array(GradReport& rep, const std::string& name, Md& x, const Md& analytic,
                        const std::function<double()>& objective) {
  for (Index c = 0; c < x.cols(); ++c)
    for (Index r = 0; r < x.rows(); ++r) {
      const double saved = x(r, c);
      x(r, c) = saved + kFdStep;
      const double up = objective();
      x(r, c) = saved - kFdStep;
      const double down = objective();
      x(r, c) = saved;
      const double err = relative_error(analytic(r, c), (up - down) / (2 * kFdStep));
      ++rep.checked;
      if (err > rep.max_rel_err) {
        rep.max_rel_err = err;
        rep.worst = name;
      }
    }
}

inline Md random_matrix(Index r, Index c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Md m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = u(rng);
  return m;
}

inline double project(const Md& out, const Md& weights) { return out.cwiseProduct(weights).sum(); }

}  // namespace detail

// Small graph used by the GAT and network checks: 4 nodes, a path plus a chord.
inline SensorGraph toy_graph() { return make_sensor_graph(4, {{0, 1}, {1, 2}, {2, 3}, {1, 3}}); }

inline ModelConfig toy_model_config() {
  ModelConfig c;
  c.conv_channels = {3, 4, 3};
  c.gru_hidden = 5;
  c.gat_dim = 6;
  c.n_nodes = 4;
  c.seq_len = 10;
  c.dropout = 0.2;
  return c;
}

inline GradReport grad_check_conv(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GradReport rep{"conv1d", 0, seed, 0, {}};
  const Index in = 2, out = 3, k = 3, len = 8, seqs = 2;
  auto layer = make_conv_layer<double>(in, out, k);
  layer.weight = detail::random_matrix(out, in * k, rng);
  layer.bias = detail::random_matrix(out, 1, rng);
  Md x = detail::random_matrix(in, len * seqs, rng);
  const Md proj = detail::random_matrix(out, (len - k + 1) * seqs, rng);

  ConvCache<double> cache;
  conv1d_forward(layer, x, seqs, &cache);
  auto grad = make_conv_layer<double>(in, out, k);
  const Md dx = conv1d_backward(layer, cache, proj, grad);
  auto f = [&] { return detail::project(conv1d_forward(layer, x, seqs), proj); };
  detail::check_array(rep, "weight", layer.weight, grad.weight, f);
  detail::check_array(rep, "bias", layer.bias, grad.bias, f);
  detail::check_array(rep, "input", x, dx, f);
  return rep;
}

// Two stacked layers; the objective reads every hidden state of the top layer.
inline GradReport grad_check_gru(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GradReport rep{"gru", 0, seed, 0, {}};
  const Index in = 3, hid = 4, steps = 6, seqs = 2;
  std::vector<GruLayer<double>> layers{make_gru_layer<double>(in, hid), make_gru_layer<double>(hid, hid)};
  for (auto& l : layers)
    for (auto* m : {&l.wz, &l.wr, &l.wc, &l.bz, &l.br, &l.bc}) *m = detail::random_matrix(m->rows(), m->cols(), rng);
  Md x = detail::random_matrix(in, steps * seqs, rng);
  const Md proj = detail::random_matrix(hid, steps * seqs, rng);

  GruCache<double> c0, c1;
  const Md h0 = gru_layer_forward(layers[0], x, seqs, &c0);
  gru_layer_forward(layers[1], h0, seqs, &c1);
  std::vector<GruLayer<double>> grads{make_gru_layer<double>(in, hid), make_gru_layer<double>(hid, hid)};
  const Md dh0 = gru_layer_backward(layers[1], c1, proj, grads[1]);
  const Md dx = gru_layer_backward(layers[0], c0, dh0, grads[0]);

  auto f = [&] {
    return detail::project(gru_layer_forward(layers[1], gru_layer_forward(layers[0], x, seqs), seqs), proj);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto p = "layer" + std::to_string(i) + ".";
    detail::check_array(rep, p + "w_z", layers[i].wz, grads[i].wz, f);
    detail::check_array(rep, p + "w_r", layers[i].wr, grads[i].wr, f);
    detail::check_array(rep, p + "w", layers[i].wc, grads[i].wc, f);
    detail::check_array(rep, p + "b_z", layers[i].bz, grads[i].bz, f);
    detail::check_array(rep, p + "b_r", layers[i].br, grads[i].br, f);
    detail::check_array(rep, p + "b", layers[i].bc, grads[i].bc, f);
  }
  detail::check_array(rep, "input", x, dx, f);
  return rep;
}

inline GradReport grad_check_gat(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GradReport rep{"gat", 0, seed, 0, {}};
  const auto graph = toy_graph();
  const Index in = 5, out = 4, graphs = 2, n = graph.n_nodes;
  auto layer = make_gat_layer<double>(in, out, 0.2);
  layer.weight = detail::random_matrix(out, in, rng);
  layer.attn = detail::random_matrix(2 * out, 1, rng);
  Md h = detail::random_matrix(in, n * graphs, rng);
  const Md proj = detail::random_matrix(out, n * graphs, rng);

  GatCache<double> cache;
  gat_forward(layer, h, graph, &cache);
  auto grad = make_gat_layer<double>(in, out, 0.2);
  const Md dh = gat_backward(layer, cache, proj, grad);
  auto f = [&] { return detail::project(gat_forward(layer, h, graph), proj); };
  detail::check_array(rep, "weight", layer.weight, grad.weight, f);
  detail::check_array(rep, "attn", layer.attn, grad.attn, f);
  detail::check_array(rep, "input", h, dh, f);
  return rep;
}

inline GradReport grad_check_mean_pool(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GradReport rep{"mean_pool", 0, seed, 0, {}};
  const Index d = 4, nodes = 3, graphs = 2;
  Md h = detail::random_matrix(d, nodes * graphs, rng);
  const Md proj = detail::random_matrix(d, graphs, rng);
  const Md dh = mean_pool_backward(proj, nodes);
  detail::check_array(rep, "input", h, dh, [&] { return detail::project(mean_pool(h, nodes), proj); });
  return rep;
}

inline GradReport grad_check_dense(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GradReport rep{"dense_sigmoid", 0, seed, 0, {}};
  const Index d = 6, batch = 3;
  auto fc = make_dense_head<double>(d);
  fc.weight = detail::random_matrix(1, d, rng);
  fc.bias = detail::random_matrix(1, 1, rng);
  Md x = detail::random_matrix(d, batch, rng);
  const Md proj = detail::random_matrix(1, batch, rng);
  const Md p = dense_sigmoid(fc, x);
  const Md dlogits = proj.cwiseProduct(p.cwiseProduct((1.0 - p.array()).matrix()));
  auto grad = make_dense_head<double>(d);
  const Md dx = dense_backward(fc, x, dlogits, grad);
  auto f = [&] { return detail::project(dense_sigmoid(fc, x), proj); };
  detail::check_array(rep, "weight", fc.weight, grad.weight, f);
  detail::check_array(rep, "bias", fc.bias, grad.bias, f);
  detail::check_array(rep, "input", x, dx, f);
  return rep;
}

// dBCE/dyhat and dBCE/dlogit against differences of bce_loss.
inline GradReport grad_check_bce(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GradReport rep{"bce", 0, seed, 0, {}};
  const int n = 6;
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::bernoulli_distribution coin(0.5);
  Md yhat(n, 1);
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) {
    yhat(i, 0) = u(rng);
    y[static_cast<std::size_t>(i)] = coin(rng) ? 1 : 0;
  }
  auto loss_of = [&](const Md& p) {
    return bce_loss(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())), y);
  };
  const auto g = bce_grad(std::span<const double>(yhat.data(), static_cast<std::size_t>(n)), y);
  const Md analytic = Eigen::Map<const Md>(g.data(), n, 1);
  detail::check_array(rep, "yhat", yhat, analytic, [&] { return loss_of(yhat); });

  Md logits = yhat.unaryExpr([](double p) { return std::log(p / (1 - p)); });
  const auto gl = bce_logit_grad(std::span<const double>(yhat.data(), static_cast<std::size_t>(n)), y, n);
  const Md analytic_logit = Eigen::Map<const Md>(gl.data(), n, 1);
  detail::check_array(rep, "logit", logits, analytic_logit, [&] { return loss_of(sigmoid(logits)); });
  return rep;
}

// Whole network at toy shape, mean BCE objective, dropout active with masks
// replayed from the analytic pass.
inline GradReport grad_check_network(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GradReport rep{"network", 0, seed, 0, {}};
  const auto cfg = toy_model_config();
  const auto graph = toy_graph();
  auto params = init_params<double>(cfg, seed);
  // Non-zero biases so their gradients are exercised away from the init.
  for_each_array(params, [&](const ArrayInfo& info, Md& m) {
    if (info.is_bias) m = detail::random_matrix(m.rows(), m.cols(), rng, -0.1, 0.1);
  });
  const int batch = 3;
  std::vector<CycleMatrix> feats;
  std::vector<int> labels;
  for (int b = 0; b < batch; ++b) {
    feats.push_back(detail::random_matrix(cfg.n_nodes, cfg.seq_len, rng, 0.0, 1.0));
    labels.push_back(b % 2);
  }
  std::vector<const CycleMatrix*> ptrs;
  for (const auto& f : feats) ptrs.push_back(&f);
  const std::span<const CycleMatrix* const> span(ptrs);

  std::mt19937_64 drop_rng(seed + 1);
  ForwardCache<double> cache;
  const Md probs = forward<double>(params, span, graph, Mode::training, &drop_rng, &cache);
  const auto masks = cache.masks;
  const std::vector<double> pv(probs.data(), probs.data() + probs.size());
  const auto g = bce_logit_grad(pv, labels, batch);
  const Md dlogits = Eigen::Map<const Md>(g.data(), 1, batch);
  auto grads = zeros_like(params);
  backward(params, cache, dlogits, grads);

  auto f = [&] {
    const Md p = forward<double>(params, span, graph, Mode::replay, static_cast<std::mt19937_64*>(nullptr),
                                 nullptr, &masks);
    return bce_loss(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())), labels);
  };
  std::vector<std::pair<std::string, Md*>> pa, ga;
  for_each_array(params, [&](const ArrayInfo& info, Md& m) { pa.emplace_back(info.name, &m); });
  for_each_array(grads, [&](const ArrayInfo& info, Md& m) { ga.emplace_back(info.name, &m); });
  for (std::size_t i = 0; i < pa.size(); ++i) detail::check_array(rep, pa[i].first, *pa[i].second, *ga[i].second, f);
  return rep;
}

inline const std::vector<std::string>& grad_check_layers() {
  static const std::vector<std::string> names{"conv1d", "gru", "gat", "mean_pool", "dense_sigmoid", "bce", "network"};
  return names;
}

inline GradReport grad_check(const std::string& layer, std::uint64_t seed) {
  if (layer == "conv1d") return grad_check_conv(seed);
  if (layer == "gru") return grad_check_gru(seed);
  if (layer == "gat") return grad_check_gat(seed);
  if (layer == "mean_pool") return grad_check_mean_pool(seed);
  if (layer == "dense_sigmoid") return grad_check_dense(seed);
  if (layer == "bce") return grad_check_bce(seed);
  if (layer == "network") return grad_check_network(seed);
  throw ValidationError("grad_check: unknown layer '" + layer + "'");
}

inline nlohmann::ordered_json to_json(const GradReport& r) {
  return {{"layer", r.layer}, {"max_rel_err", r.max_rel_err}, {"seed", r.seed}};
}

}  // namespace cgg::nn
