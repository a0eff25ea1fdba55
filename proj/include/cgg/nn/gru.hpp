#pragma once

// Gated recurrent unit, concatenation form:
//   z_t = sigma(W_z [h_{t-1}, x_t] + b_z)
//   r_t = sigma(W_r [h_{t-1}, x_t] + b_r)
//   c_t = tanh(W [r_t * h_{t-1}, x_t] + b)
//   h_t = (1 - z_t) * h_{t-1} + z_t * c_t

#include <vector>

#include "cgg/nn/tensor.hpp"

namespace cgg::nn {

template <class Scalar>
struct GruLayer {
  // Each weight is [hidden x (hidden + input)]; the first `hidden` columns
  // act on the recurrent state, the rest on the input.
  Mat<Scalar> wz, wr, wc;
  Mat<Scalar> bz, br, bc;  // [hidden x 1]

  Index hidden() const { return wz.rows(); }
  Index input() const { return wz.cols() - wz.rows(); }
};

template <class Scalar>
GruLayer<Scalar> make_gru_layer(Index input, Index hidden) {
  GruLayer<Scalar> l;
  for (auto* w : {&l.wz, &l.wr, &l.wc}) *w = Mat<Scalar>::Zero(hidden, hidden + input);
  for (auto* b : {&l.bz, &l.br, &l.bc}) *b = Mat<Scalar>::Zero(hidden, 1);
  return l;
}

// One step for S sequences at once: x [input x S], h_prev [hidden x S].
template <class Scalar>
Mat<Scalar> gru_step(const GruLayer<Scalar>& l, const std::type_identity_t<Mat<Scalar>>& x,
                     const std::type_identity_t<Mat<Scalar>>& h_prev) {
  const Index hid = l.hidden();
  require_shape(x.rows() == l.input() && h_prev.rows() == hid && x.cols() == h_prev.cols(),
                "gru_step: x " + shape_str(x.rows(), x.cols()) + ", h " +
                    shape_str(h_prev.rows(), h_prev.cols()) + " do not fit layer " +
                    shape_str(hid, l.input()));
  Mat<Scalar> az = l.wz.leftCols(hid) * h_prev + l.wz.rightCols(l.input()) * x;
  az.colwise() += l.bz.col(0);
  Mat<Scalar> ar = l.wr.leftCols(hid) * h_prev + l.wr.rightCols(l.input()) * x;
  ar.colwise() += l.br.col(0);
  const Mat<Scalar> z = sigmoid(az);
  const Mat<Scalar> r = sigmoid(ar);
  const Mat<Scalar> rh = r.cwiseProduct(h_prev);
  Mat<Scalar> ac = l.wc.leftCols(hid) * rh + l.wc.rightCols(l.input()) * x;
  ac.colwise() += l.bc.col(0);
  const Mat<Scalar> c = ac.array().tanh().matrix();
  return (Scalar(1) - z.array()) * h_prev.array() + z.array() * c.array();
}

template <class Scalar>
struct GruCache {
  Mat<Scalar> input;            // [input x T*S]
  std::vector<Mat<Scalar>> h;   // T+1 states, h[0] = 0
  std::vector<Mat<Scalar>> z, r, c;
  Index sequences = 0;
};

// x: [input x T*S] time-major, zero initial state. Returns every hidden
// state, [hidden x T*S] time-major.
template <class Scalar>
Mat<Scalar> gru_layer_forward(const GruLayer<Scalar>& l, const Mat<Scalar>& x, Index sequences,
                              GruCache<Scalar>* cache = nullptr) {
  const Index hid = l.hidden();
  const Index in = l.input();
  require_shape(sequences > 0 && x.rows() == in && x.cols() % sequences == 0,
                "gru: input " + shape_str(x.rows(), x.cols()) + " does not fit " +
                    std::to_string(in) + " features x " + std::to_string(sequences) + " sequences");
  const Index steps = x.cols() / sequences;
  require_shape(steps > 0, "gru: empty sequence");
  const Index s = sequences;

  // Input projections for all steps in one product each.
  Mat<Scalar> xz = l.wz.rightCols(in) * x;
  Mat<Scalar> xr = l.wr.rightCols(in) * x;
  Mat<Scalar> xc = l.wc.rightCols(in) * x;

  Mat<Scalar> out(hid, steps * s);
  Mat<Scalar> h = Mat<Scalar>::Zero(hid, s);
  if (cache) {
    cache->input = x;
    cache->sequences = s;
    cache->h.assign(1, h);
    cache->z.clear();
    cache->r.clear();
    cache->c.clear();
  }
  Mat<Scalar> az(hid, s), ar(hid, s), ac(hid, s);
  for (Index t = 0; t < steps; ++t) {
    az.noalias() = l.wz.leftCols(hid) * h;
    az += xz.middleCols(t * s, s);
    az.colwise() += l.bz.col(0);
    ar.noalias() = l.wr.leftCols(hid) * h;
    ar += xr.middleCols(t * s, s);
    ar.colwise() += l.br.col(0);
    Mat<Scalar> z = sigmoid(az);
    Mat<Scalar> r = sigmoid(ar);
    const Mat<Scalar> rh = r.cwiseProduct(h);
    ac.noalias() = l.wc.leftCols(hid) * rh;
    ac += xc.middleCols(t * s, s);
    ac.colwise() += l.bc.col(0);
    Mat<Scalar> c = ac.array().tanh().matrix();
    h = ((Scalar(1) - z.array()) * h.array() + z.array() * c.array()).matrix();
    out.middleCols(t * s, s) = h;
    if (cache) {
      cache->h.push_back(h);
      cache->z.push_back(std::move(z));
      cache->r.push_back(std::move(r));
      cache->c.push_back(std::move(c));
    }
  }
  return out;
}

// dh_seq: dL/dh_t for every step, [hidden x T*S]. Accumulates into `grad`
// and returns dL/dx.
template <class Scalar>
Mat<Scalar> gru_layer_backward(const GruLayer<Scalar>& l, const GruCache<Scalar>& cache,
                               const Mat<Scalar>& dh_seq, GruLayer<Scalar>& grad) {
  const Index hid = l.hidden();
  const Index in = l.input();
  const Index s = cache.sequences;
  const auto steps = static_cast<Index>(cache.z.size());
  require_shape(steps > 0, "gru backward: no cached forward pass");
  require_shape(dh_seq.rows() == hid && dh_seq.cols() == steps * s,
                "gru backward: gradient shape mismatch");

  Mat<Scalar> da_z(hid, steps * s), da_r(hid, steps * s), da_c(hid, steps * s);
  Mat<Scalar> carry = Mat<Scalar>::Zero(hid, s);
  for (Index t = steps - 1; t >= 0; --t) {
    const auto ti = static_cast<std::size_t>(t);
    const auto& z = cache.z[ti];
    const auto& r = cache.r[ti];
    const auto& c = cache.c[ti];
    const auto& hp = cache.h[ti];

    const Mat<Scalar> dh = dh_seq.middleCols(t * s, s) + carry;
    const auto dz = (dh.array() * (c.array() - hp.array())).eval();
    Mat<Scalar> dac = (dh.array() * z.array() * (Scalar(1) - c.array().square())).matrix();
    Mat<Scalar> dhp = (dh.array() * (Scalar(1) - z.array())).matrix();

    const Mat<Scalar> rh = r.cwiseProduct(hp);
    grad.wc.leftCols(hid).noalias() += dac * rh.transpose();
    const Mat<Scalar> drh = l.wc.leftCols(hid).transpose() * dac;
    dhp.array() += drh.array() * r.array();
    Mat<Scalar> dar = (drh.array() * hp.array() * r.array() * (Scalar(1) - r.array())).matrix();
    Mat<Scalar> daz = (dz * z.array() * (Scalar(1) - z.array())).matrix();

    grad.wz.leftCols(hid).noalias() += daz * hp.transpose();
    grad.wr.leftCols(hid).noalias() += dar * hp.transpose();
    dhp.noalias() += l.wz.leftCols(hid).transpose() * daz;
    dhp.noalias() += l.wr.leftCols(hid).transpose() * dar;

    da_z.middleCols(t * s, s) = daz;
    da_r.middleCols(t * s, s) = dar;
    da_c.middleCols(t * s, s) = dac;
    carry = std::move(dhp);
  }

  grad.wz.rightCols(in).noalias() += da_z * cache.input.transpose();
  grad.wr.rightCols(in).noalias() += da_r * cache.input.transpose();
  grad.wc.rightCols(in).noalias() += da_c * cache.input.transpose();
  grad.bz.col(0) += da_z.rowwise().sum();
  grad.br.col(0) += da_r.rowwise().sum();
  grad.bc.col(0) += da_c.rowwise().sum();

  Mat<Scalar> dx = l.wz.rightCols(in).transpose() * da_z;
  dx.noalias() += l.wr.rightCols(in).transpose() * da_r;
  dx.noalias() += l.wc.rightCols(in).transpose() * da_c;
  return dx;
}

// Final hidden state [hidden x S] of a stack of layers.
template <class Scalar>
Mat<Scalar> gru_sequence(const std::vector<GruLayer<Scalar>>& layers, const Mat<Scalar>& x,
                         Index sequences) {
  require_shape(!layers.empty(), "gru_sequence: no layers");
  Mat<Scalar> seq = x;
  for (const auto& l : layers) seq = gru_layer_forward(l, seq, sequences);
  return seq.rightCols(sequences);
}

}  // namespace cgg::nn
