#pragma once

// Central finite-difference oracle for graph-built scalar losses.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "grace/autodiff/graph.hpp"

namespace grace::test {

struct FdResult {
  double max_rel_error = 0.0;
  std::string worst;  // "param[index]" of the worst entry
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
// gradient is zero from dividing rounding noise by zero.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

// `build(Graph&)` must construct the loss from the current parameter values
// and return its node. Every entry of every parameter is perturbed by +-h;
// entries whose perturbation flips a relu input sign are skipped.
template <class Build>
FdResult fd_check(std::span<Parameter* const> params, Build&& build, double h = 1e-5,
                  double floor = 1e-6) {
  for (Parameter* p : params) p->zero_grad();
  std::uint64_t signature = 0;
  {
    Graph g;
    const NodeId loss = build(g);
    g.accumulate_parameter_grads(g.backward(loss));
    signature = g.relu_signature();
  }
  auto eval = [&](std::uint64_t& sig) {
    Graph g;
    const NodeId loss = build(g);
    sig = g.relu_signature();
    return g.value(loss).item();
  };
  FdResult r;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      std::uint64_t s_plus = 0, s_minus = 0;
      p->value[i] = saved + h;
      const double f_plus = eval(s_plus);
      p->value[i] = saved - h;
      const double f_minus = eval(s_minus);
      p->value[i] = saved;
      if (s_plus != signature || s_minus != signature) {
        ++r.skipped_kinks;
        continue;
      }
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double e = relative_error(p->grad[i], numeric, floor);
      ++r.checked;
      if (e > r.max_rel_error) {
        r.max_rel_error = e;
        r.worst = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return r;
}

}  // namespace grace::test
