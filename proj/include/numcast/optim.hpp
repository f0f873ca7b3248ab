#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "numcast/tensor.hpp"

namespace numcast {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment estimates for one flat parameter vector.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t step = 0;

  explicit AdamState(std::size_t dimension = 0) : m(dimension, 0.0), v(dimension, 0.0) {}
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& state, double lr, const AdamConfig& config = {});

/// Multiplicative per-epoch decay: lr_e = lr_0 · factor^e.
struct LearningRateSchedule {
  double initial = 1e-3;
  double decay_per_epoch = 0.95;

  double at_epoch(std::size_t epoch) const;
};

/// Adam over a list of tensors, keeping one state per tensor. Tensors
/// without a gradient buffer are skipped.
class TensorAdam {
 public:
  explicit TensorAdam(std::vector<Tensor> params, AdamConfig config = {});

  void step(double lr);
  void zero_grad();
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<AdamState> states_;
  AdamConfig config_;
};

}  // namespace numcast
