#pragma once

// Graph readout (mean pool), dense + sigmoid head and inverted dropout.

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "cgg/nn/gat.hpp"
#include "cgg/nn/tensor.hpp"

namespace cgg::nn {

// h: [d x N*B] -> [d x B]. Node vectors are summed in lexicographic order of
// their contents, which makes the result exactly invariant to node order.
template <class Scalar>
Mat<Scalar> mean_pool(const Mat<Scalar>& h, Index nodes) {
  require_shape(nodes > 0 && h.cols() % nodes == 0,
                "mean_pool: " + std::to_string(h.cols()) + " columns is not a multiple of " +
                    std::to_string(nodes) + " nodes");
  const Index graphs = h.cols() / nodes;
  Mat<Scalar> out = Mat<Scalar>::Zero(h.rows(), graphs);
  std::vector<Index> order(static_cast<std::size_t>(nodes));
  for (Index b = 0; b < graphs; ++b) {
    const Index base = b * nodes;
    std::iota(order.begin(), order.end(), base);
    std::sort(order.begin(), order.end(),
              [&](Index a, Index c) { return detail::column_less(h, a, c); });
    for (Index j : order) out.col(b) += h.col(j);
    out.col(b) /= static_cast<Scalar>(nodes);
  }
  return out;
}

template <class Scalar>
Mat<Scalar> mean_pool_backward(const Mat<Scalar>& dout, Index nodes) {
  Mat<Scalar> dh(dout.rows(), dout.cols() * nodes);
  const Scalar scale = Scalar(1) / static_cast<Scalar>(nodes);
  for (Index b = 0; b < dout.cols(); ++b)
    for (Index n = 0; n < nodes; ++n) dh.col(b * nodes + n) = dout.col(b) * scale;
  return dh;
}

template <class Scalar>
struct DenseHead {
  Mat<Scalar> weight;  // [1 x d]
  Mat<Scalar> bias;    // [1 x 1]
};

template <class Scalar>
DenseHead<Scalar> make_dense_head(Index in) {
  return {Mat<Scalar>::Zero(1, in), Mat<Scalar>::Zero(1, 1)};
}

// x: [d x B] -> logits [1 x B]
template <class Scalar>
Mat<Scalar> dense_logits(const DenseHead<Scalar>& fc, const Mat<Scalar>& x) {
  require_shape(x.rows() == fc.weight.cols(), "dense: input has " + std::to_string(x.rows()) +
                                                  " features, expected " +
                                                  std::to_string(fc.weight.cols()));
  Mat<Scalar> z = fc.weight * x;
  z.array() += fc.bias(0, 0);
  return z;
}

template <class Scalar>
Mat<Scalar> dense_sigmoid(const DenseHead<Scalar>& fc, const Mat<Scalar>& x) {
  return sigmoid(dense_logits(fc, x));
}

// dlogits: [1 x B]. Returns dL/dx.
template <class Scalar>
Mat<Scalar> dense_backward(const DenseHead<Scalar>& fc, const Mat<Scalar>& x,
                           const Mat<Scalar>& dlogits, DenseHead<Scalar>& grad) {
  grad.weight.noalias() += dlogits * x.transpose();
  grad.bias(0, 0) += dlogits.sum();
  return fc.weight.transpose() * dlogits;
}

// Inverted dropout mask: each entry is 0 with probability p, else 1/(1-p).
template <class Scalar, class Rng>
Mat<Scalar> dropout_mask(Index rows, Index cols, double p, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ValidationError("dropout probability must lie in [0,1)");
  Mat<Scalar> m(rows, cols);
  if (p == 0.0) {
    m.setOnes();
    return m;
  }
  std::bernoulli_distribution drop(p);
  const Scalar keep = static_cast<Scalar>(1.0 / (1.0 - p));
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = drop(rng) ? Scalar(0) : keep;
  return m;
}

template <class Scalar, class Rng>
Mat<Scalar> dropout(const Mat<Scalar>& x, double p, Rng& rng, bool training) {
  if (!training || p == 0.0) return x;
  return x.cwiseProduct(dropout_mask<Scalar>(x.rows(), x.cols(), p, rng));
}

}  // namespace cgg::nn
