#pragma once

#include <vector>

#include "grace/autodiff/graph.hpp"
#include "grace/autodiff/tensor.hpp"

namespace grace {

struct AdagradState {
  explicit AdagradState(const Tensor& like, double eps = 1e-8)
      : accumulator(like.rows(), like.cols()), epsilon(eps) {}

  Tensor accumulator;  // running sum of squared gradients
  double epsilon;
};

// acc += g^2; param -= lr * g / (sqrt(acc) + eps), elementwise. Entries with
// an exactly zero gradient are left untouched.
void adagrad_step(Tensor& param, const Tensor& grad, AdagradState& state,
                  double lr);

// Adagrad over a fixed parameter list. step() consumes and clears grads.
class Adagrad {
 public:
  Adagrad(std::vector<Parameter*> params, double lr, double eps = 1e-8);

  void step();
  void zero_grad();

  double learning_rate() const { return lr_; }
  const std::vector<AdagradState>& states() const { return states_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<AdagradState> states_;
  double lr_;
};

}  // namespace grace
