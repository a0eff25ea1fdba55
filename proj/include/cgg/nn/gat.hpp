#pragma once

// Single-head graph attention convolution.
//
//   g_j   = W h_j
//   e_ij  = LeakyReLU(a_src . g_i + a_dst . g_j)        j in N(i) + {i}
//   alpha = softmax_j(e_ij)
//   h'_i  = ELU(sum_j alpha_ij g_j)
//
// Sums over a neighbourhood run in a content-defined order (by score, then
// by the projected feature vector), so relabelling the nodes of a graph
// permutes the output without changing a single bit of it.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cgg/nn/tensor.hpp"
#include "cgg/preprocess.hpp"

namespace cgg::nn {

template <class Scalar>
struct GatLayer {
  Mat<Scalar> weight;  // [out x in]
  Mat<Scalar> attn;    // [2*out x 1]: source half then neighbour half
  Scalar leaky_slope = Scalar(0.2);

  Index in_dim() const { return weight.cols(); }
  Index out_dim() const { return weight.rows(); }
};

template <class Scalar>
GatLayer<Scalar> make_gat_layer(Index in, Index out, Scalar slope = Scalar(0.2)) {
  GatLayer<Scalar> l;
  l.weight = Mat<Scalar>::Zero(out, in);
  l.attn = Mat<Scalar>::Zero(2 * out, 1);
  l.leaky_slope = slope;
  return l;
}

template <class Scalar>
struct GatCache {
  Mat<Scalar> input;      // [in x N*B]
  Mat<Scalar> projected;  // [out x N*B]
  Mat<Scalar> pre;        // aggregated, before ELU
  Mat<Scalar> src, dst;   // [1 x N*B] attention half-scores
  std::vector<Mat<Scalar>> alpha;  // per graph, [N x N], row i over sources j
  std::vector<std::vector<int>> neighborhoods;
  Index nodes = 0;
};

namespace detail {

template <class Scalar>
inline Scalar leaky(Scalar u, Scalar slope) {
  return u > Scalar(0) ? u : slope * u;
}

template <class Scalar>
inline Scalar elu(Scalar x) {
  return x > Scalar(0) ? x : std::expm1(x);
}

// Lexicographic comparison of two columns.
template <class Scalar>
inline bool column_less(const Mat<Scalar>& m, Index a, Index b) {
  for (Index r = 0; r < m.rows(); ++r) {
    if (m(r, a) < m(r, b)) return true;
    if (m(r, b) < m(r, a)) return false;
  }
  return false;
}

}  // namespace detail

// h: [in x N*B], graph-major (column b*N + n). Returns [out x N*B].
template <class Scalar>
Mat<Scalar> gat_forward(const GatLayer<Scalar>& l, const std::type_identity_t<Mat<Scalar>>& h, const SensorGraph& graph,
                        std::type_identity_t<GatCache<Scalar>>* cache = nullptr,
                        std::type_identity_t<std::vector<Mat<Scalar>>>* alpha_out = nullptr) {
  const Index n = graph.n_nodes;
  require_shape(n > 0 && h.rows() == l.in_dim() && h.cols() % n == 0,
                "gat: input " + shape_str(h.rows(), h.cols()) + " does not fit " +
                    std::to_string(l.in_dim()) + " features x " + std::to_string(n) + " nodes");
  const Index graphs = h.cols() / n;
  const Index d = l.out_dim();

  const Mat<Scalar> g = l.weight * h;
  const Mat<Scalar> src = l.attn.topRows(d).transpose() * g;
  const Mat<Scalar> dst = l.attn.bottomRows(d).transpose() * g;

  std::vector<std::vector<int>> nbhd(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    nbhd[static_cast<std::size_t>(i)] = graph.attention_neighbors(i);
    if (nbhd[static_cast<std::size_t>(i)].empty()) throw Error("gat: empty neighbourhood");
  }

  Mat<Scalar> pre = Mat<Scalar>::Zero(d, h.cols());
  std::vector<Mat<Scalar>> alphas(static_cast<std::size_t>(graphs), Mat<Scalar>::Zero(n, n));
  std::vector<Index> order;
  std::vector<Scalar> score(static_cast<std::size_t>(n));
  for (Index b = 0; b < graphs; ++b) {
    const Index base = b * n;
    auto& alpha = alphas[static_cast<std::size_t>(b)];
    for (Index i = 0; i < n; ++i) {
      const auto& nb = nbhd[static_cast<std::size_t>(i)];
      for (int j : nb) score[static_cast<std::size_t>(j)] = detail::leaky(src(0, base + i) + dst(0, base + j), l.leaky_slope);
      order.assign(nb.begin(), nb.end());
      std::sort(order.begin(), order.end(), [&](Index a, Index c) {
        const Scalar sa = score[static_cast<std::size_t>(a)];
        const Scalar sc = score[static_cast<std::size_t>(c)];
        if (sa != sc) return sa < sc;
        return detail::column_less(g, base + a, base + c);
      });
      const Scalar mx = score[static_cast<std::size_t>(order.back())];
      Scalar denom = 0;
      for (Index j : order) {
        const Scalar w = std::exp(score[static_cast<std::size_t>(j)] - mx);
        alpha(i, j) = w;
        denom += w;
      }
      for (Index j : order) {
        alpha(i, j) /= denom;
        pre.col(base + i) += alpha(i, j) * g.col(base + j);
      }
    }
  }

  Mat<Scalar> out = pre.unaryExpr([](Scalar x) { return detail::elu(x); });
  if (alpha_out) *alpha_out = alphas;
  if (cache) {
    cache->input = h;
    cache->projected = g;
    cache->pre = std::move(pre);
    cache->src = src;
    cache->dst = dst;
    cache->alpha = std::move(alphas);
    cache->neighborhoods = std::move(nbhd);
    cache->nodes = n;
  }
  return out;
}

template <class Scalar>
Mat<Scalar> gat_backward(const GatLayer<Scalar>& l, const GatCache<Scalar>& cache,
                         const Mat<Scalar>& dout, GatLayer<Scalar>& grad) {
  const Index n = cache.nodes;
  const Index d = l.out_dim();
  require_shape(n > 0, "gat backward: no cached forward pass");
  require_shape(dout.rows() == d && dout.cols() == cache.pre.cols(),
                "gat backward: gradient shape mismatch");
  const Index graphs = dout.cols() / n;
  const auto& g = cache.projected;

  const Mat<Scalar> dpre =
      dout.cwiseProduct(cache.pre.unaryExpr([](Scalar x) { return x > Scalar(0) ? Scalar(1) : std::exp(x); }));

  Mat<Scalar> dg = Mat<Scalar>::Zero(d, dout.cols());
  Mat<Scalar> dsrc = Mat<Scalar>::Zero(1, dout.cols());
  Mat<Scalar> ddst = Mat<Scalar>::Zero(1, dout.cols());
  std::vector<Scalar> dalpha(static_cast<std::size_t>(n));
  for (Index b = 0; b < graphs; ++b) {
    const Index base = b * n;
    const auto& alpha = cache.alpha[static_cast<std::size_t>(b)];
    for (Index i = 0; i < n; ++i) {
      const auto& nb = cache.neighborhoods[static_cast<std::size_t>(i)];
      const auto dzi = dpre.col(base + i);
      Scalar weighted = 0;
      for (int j : nb) {
        dg.col(base + j) += alpha(i, j) * dzi;
        dalpha[static_cast<std::size_t>(j)] = dzi.dot(g.col(base + j));
        weighted += alpha(i, j) * dalpha[static_cast<std::size_t>(j)];
      }
      for (int j : nb) {
        const Scalar de = alpha(i, j) * (dalpha[static_cast<std::size_t>(j)] - weighted);
        const Scalar u = cache.src(0, base + i) + cache.dst(0, base + j);
        const Scalar du = u > Scalar(0) ? de : l.leaky_slope * de;
        dsrc(0, base + i) += du;
        ddst(0, base + j) += du;
      }
    }
  }

  grad.attn.topRows(d).noalias() += g * dsrc.transpose();
  grad.attn.bottomRows(d).noalias() += g * ddst.transpose();
  dg.noalias() += l.attn.topRows(d) * dsrc;
  dg.noalias() += l.attn.bottomRows(d) * ddst;

  grad.weight.noalias() += dg * cache.input.transpose();
  return l.weight.transpose() * dg;
}

}  // namespace cgg::nn
