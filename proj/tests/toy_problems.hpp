#pragma once

#include <cmath>
#include <vector>

#include "numcast/pareto.hpp"

namespace numcast::testing {

/// L₁ = ‖θ − a‖², L₂ = ‖θ − b‖², every batch identical.
class QuadraticPair : public pareto::BiObjective {
 public:
  QuadraticPair(std::vector<double> a, std::vector<double> b, std::size_t batches = 1)
      : a_(std::move(a)), b_(std::move(b)), batches_(batches) {}

  std::size_t dimension() const override { return a_.size(); }
  std::size_t batch_count() const override { return batches_; }

  pareto::Evaluation evaluate(std::span<const double> theta, std::size_t) override {
    pareto::Evaluation e;
    e.grad1.resize(theta.size());
    e.grad2.resize(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double d1 = theta[i] - a_[i], d2 = theta[i] - b_[i];
      e.losses[0] += d1 * d1;
      e.losses[1] += d2 * d2;
      e.grad1[i] = 2.0 * d1;
      e.grad2[i] = 2.0 * d2;
    }
    return e;
  }

 private:
  std::vector<double> a_, b_;
  std::size_t batches_;
};

/// Distance from p to the segment between (1,0) and (0,1).
inline double distance_to_front(const std::vector<double>& p) {
  // Project onto x + y = 1, then clamp to the segment.
  double t = 0.5 * (p[1] - p[0] + 1.0);
  t = std::fmin(1.0, std::fmax(0.0, t));
  const double qx = 1.0 - t, qy = t;
  return std::hypot(p[0] - qx, p[1] - qy);
}

}  // namespace numcast::testing
