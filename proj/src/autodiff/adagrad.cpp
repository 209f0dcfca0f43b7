#include "grace/autodiff/adagrad.hpp"

#include <cmath>

#include "grace/error.hpp"

namespace grace {

void adagrad_step(Tensor& param, const Tensor& grad, AdagradState& state,
                  double lr) {
  if (!param.same_shape(grad) || !param.same_shape(state.accumulator)) {
    throw ShapeError("adagrad_step: shape mismatch param " +
                     param.shape_string() + " grad " + grad.shape_string() +
                     " accumulator " + state.accumulator.shape_string());
  }
  if (!(lr > 0.0)) throw ShapeError("adagrad_step: learning rate must be > 0");
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    if (g == 0.0) continue;
    double& acc = state.accumulator[i];
    acc += g * g;
    param[i] -= lr * g / (std::sqrt(acc) + state.epsilon);
  }
}

Adagrad::Adagrad(std::vector<Parameter*> params, double lr, double eps)
    : params_(std::move(params)), lr_(lr) {
  states_.reserve(params_.size());
  for (const Parameter* p : params_) states_.emplace_back(p->value, eps);
}

void Adagrad::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    adagrad_step(params_[i]->value, params_[i]->grad, states_[i], lr_);
    params_[i]->zero_grad();
  }
}

void Adagrad::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

}  // namespace grace
