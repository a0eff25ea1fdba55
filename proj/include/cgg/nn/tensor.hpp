#pragma once

#include <cmath>
#include <string>
#include <type_traits>

#include <Eigen/Dense>

#include "cgg/error.hpp"

namespace cgg::nn {

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Index = Eigen::Index;

// Activation layout used throughout: one column per (time step, sequence),
// time-major, i.e. column t*S + s for S parallel sequences. Step t of all
// sequences is therefore the contiguous block middleCols(t*S, S).

template <class Scalar>
inline Scalar logistic(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

template <class Derived>
inline auto sigmoid(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return x.unaryExpr([](S v) { return logistic(v); });
}

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

inline std::string shape_str(Index r, Index c) {
  return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

}  // namespace cgg::nn
