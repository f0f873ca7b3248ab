#include "numcast/optim.hpp"

#include <cmath>

#include "numcast/errors.hpp"

namespace numcast {

void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& state, double lr, const AdamConfig& config) {
  if (params.size() != grads.size() || state.m.size() != params.size()) {
    throw DimensionError("adam_step: parameter, gradient and state sizes differ");
  }
  if (!(lr > 0.0)) throw ContractError("adam_step: learning rate must be positive");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = state.m[i] / correction1;
    const double v_hat = state.v[i] / correction2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + config.eps);
  }
}

double LearningRateSchedule::at_epoch(std::size_t epoch) const {
  return initial * std::pow(decay_per_epoch, static_cast<double>(epoch));
}

TensorAdam::TensorAdam(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  states_.reserve(params_.size());
  for (const Tensor& p : params_) states_.emplace_back(p.size());
}

void TensorAdam::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;
    adam_step(params_[i].data(), params_[i].grad(), states_[i], lr, config_);
  }
}

void TensorAdam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace numcast
