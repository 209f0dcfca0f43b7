#pragma once

#include <cmath>

#include "grace/autodiff/tensor.hpp"
#include "grace/rng.hpp"

namespace grace {

// Bound a = sqrt(6 / (fan_in + fan_out)) with fan_in = rows, fan_out = cols.
inline double xavier_bound(const Tensor& t) {
  return std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
}

// Fills t with uniform(-a, a) draws, a = xavier_bound(t).
inline void xavier_uniform(Tensor& t, Rng& rng) {
  const double a = xavier_bound(t);
  for (double& v : t.values()) v = rng.uniform(-a, a);
}

}  // namespace grace
