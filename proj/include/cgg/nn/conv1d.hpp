#pragma once

// Valid (unpadded) 1D cross-correlation over channels:
//   y[o, i] = sum_c sum_k w[o, c, k] * x[c, i + k] + b[o]

#include "cgg/nn/tensor.hpp"

namespace cgg::nn {

template <class Scalar>
struct ConvLayer {
  // weight(o, c*K + k) = w[o, c, k]; i.e. the row-major [out x in x K] array.
  Mat<Scalar> weight;
  Mat<Scalar> bias;  // [out x 1]
  Index kernel = 3;

  Index in_channels() const { return weight.cols() / kernel; }
  Index out_channels() const { return weight.rows(); }
  Index kernel_size() const { return kernel; }
};

template <class Scalar>
ConvLayer<Scalar> make_conv_layer(Index in, Index out, Index kernel) {
  ConvLayer<Scalar> l;
  l.kernel = kernel;
  l.weight = Mat<Scalar>::Zero(out, in * kernel);
  l.bias = Mat<Scalar>::Zero(out, 1);
  return l;
}

template <class Scalar>
struct ConvCache {
  Mat<Scalar> patches;  // [(in*K) x (Lout*S)]
  Index sequences = 0;
};

// x: [in x (L*S)] time-major. Returns [out x ((L-K+1)*S)].
template <class Scalar>
Mat<Scalar> conv1d_forward(const ConvLayer<Scalar>& layer, const std::type_identity_t<Mat<Scalar>>& x, Index sequences,
                           std::type_identity_t<ConvCache<Scalar>>* cache = nullptr) {
  const Index k = layer.kernel_size();
  const Index in = layer.in_channels();
  require_shape(sequences > 0 && x.cols() % sequences == 0 && x.rows() == in,
                "conv1d: input " + shape_str(x.rows(), x.cols()) + " does not match " +
                    std::to_string(in) + " channels x " + std::to_string(sequences) + " sequences");
  const Index len = x.cols() / sequences;
  require_shape(len >= k, "conv1d: sequence length " + std::to_string(len) +
                              " shorter than kernel " + std::to_string(k));
  const Index out_len = len - k + 1;
  const Index width = out_len * sequences;

  Mat<Scalar> patches(in * k, width);
  for (Index c = 0; c < in; ++c)
    for (Index j = 0; j < k; ++j) patches.row(c * k + j) = x.row(c).segment(j * sequences, width);

  Mat<Scalar> y = layer.weight * patches;
  y.colwise() += layer.bias.col(0);
  if (cache) {
    cache->patches = std::move(patches);
    cache->sequences = sequences;
  }
  return y;
}

// Accumulates parameter gradients into `grad` and returns dL/dx.
template <class Scalar>
Mat<Scalar> conv1d_backward(const ConvLayer<Scalar>& layer, const ConvCache<Scalar>& cache,
                            const Mat<Scalar>& dy, ConvLayer<Scalar>& grad) {
  const Index k = layer.kernel_size();
  const Index in = layer.in_channels();
  const Index s = cache.sequences;
  const Index width = cache.patches.cols();
  require_shape(dy.rows() == layer.out_channels() && dy.cols() == width,
                "conv1d backward: gradient shape mismatch");

  grad.weight.noalias() += dy * cache.patches.transpose();
  grad.bias.col(0) += dy.rowwise().sum();
  const Mat<Scalar> dpatches = layer.weight.transpose() * dy;

  Mat<Scalar> dx = Mat<Scalar>::Zero(in, width + (k - 1) * s);
  for (Index c = 0; c < in; ++c)
    for (Index j = 0; j < k; ++j) dx.row(c).segment(j * s, width) += dpatches.row(c * k + j);
  return dx;
}

}  // namespace cgg::nn
