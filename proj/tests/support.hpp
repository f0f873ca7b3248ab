#pragma once

// Independent oracles shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "numcast/tensor.hpp"

namespace numcast::testing {

/// Central differences of f with respect to every entry of x.
inline std::vector<double> numeric_gradient(const std::function<double()>& f, Tensor x,
                                            double h = 1e-5) {
  std::vector<double> grad(x.size());
  auto d = x.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double saved = d[i];
    d[i] = saved + h;
    const double up = f();
    d[i] = saved - h;
    const double down = f();
    d[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

/// Largest violation of |a − n| ≤ max(rel·max(|a|,|n|), abs). Zero or less
/// means every entry agrees.
inline double gradient_mismatch(const std::vector<double>& analytic,
                                const std::vector<double>& numeric, double rel = 1e-4,
                                double abs = 1e-6) {
  double worst = -1.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double diff = std::fabs(analytic[i] - numeric[i]);
    const double allowed =
        std::max(rel * std::max(std::fabs(analytic[i]), std::fabs(numeric[i])), abs);
    worst = std::max(worst, diff - allowed);
  }
  return worst;
}

inline std::vector<double> grad_of(const Tensor& t) {
  if (!t.has_grad()) return std::vector<double>(t.size(), 0.0);
  return {t.grad().begin(), t.grad().end()};
}

inline Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                            double scale = 1.0, bool requires_grad = true) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> data(rows * cols);
  for (double& v : data) v = dist(rng);
  return Tensor({rows, cols}, std::move(data), requires_grad);
}

}  // namespace numcast::testing
