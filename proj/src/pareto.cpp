#include "numcast/pareto.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "numcast/errors.hpp"

namespace numcast::pareto {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Vec2 normalized(const Vec2& raw, const Vec2& scale) {
  return {raw[0] / scale[0], raw[1] / scale[1]};
}

std::string describe(const Vec2& v) {
  std::ostringstream s;
  s << '(' << v[0] << ", " << v[1] << ')';
  return s.str();
}

}  // namespace

PreferenceSet make_preferences(std::size_t count) {
  if (count < 2) throw ConfigError("need at least 2 preference vectors, got " + std::to_string(count));
  PreferenceSet set;
  for (std::size_t k = 0; k < count; ++k) {
    const double phi = static_cast<double>(k) / static_cast<double>(count - 1) * std::numbers::pi / 2.0;
    Vec2 u{std::cos(phi), std::sin(phi)};
    // Pin the axes exactly.
    if (k == 0) u = {1.0, 0.0};
    if (k + 1 == count) u = {0.0, 1.0};
    set.u.push_back(u);
  }
  return set;
}

bool in_subregion(const Vec2& v, std::size_t k, const PreferenceSet& prefs) {
  if (k >= prefs.size()) throw ContractError("sub-region index out of range");
  const double own = prefs.u[k][0] * v[0] + prefs.u[k][1] * v[1];
  for (const Vec2& u : prefs.u) {
    if (u[0] * v[0] + u[1] * v[1] > own) return false;
  }
  return true;
}

std::vector<Constraint> constraints(const Vec2& v, std::size_t k, const PreferenceSet& prefs) {
  if (k >= prefs.size()) throw ContractError("sub-region index out of range");
  std::vector<Constraint> out;
  for (std::size_t j = 0; j < prefs.size(); ++j) {
    if (j == k) continue;
    Constraint c;
    c.j = j;
    c.coefficients = {prefs.u[j][0] - prefs.u[k][0], prefs.u[j][1] - prefs.u[k][1]};
    c.value = c.coefficients[0] * v[0] + c.coefficients[1] * v[1];
    out.push_back(c);
  }
  return out;
}

std::vector<Constraint> select_active(const Vec2& v, std::size_t k, const PreferenceSet& prefs,
                                      double eps, std::size_t max_active) {
  std::vector<Constraint> active;
  for (const Constraint& c : constraints(v, k, prefs)) {
    if (c.value >= -eps) active.push_back(c);
  }
  std::stable_sort(active.begin(), active.end(),
                   [](const Constraint& a, const Constraint& b) { return a.value > b.value; });
  if (active.size() > max_active) active.resize(max_active);
  return active;
}

std::vector<double> min_norm_weights(const std::vector<double>& gram, std::size_t n,
                                     const SolverOptions& options) {
  if (n == 0) throw ContractError("min-norm problem over an empty gradient set");
  if (gram.size() != n * n) throw DimensionError("Gram matrix size does not match n");
  auto G = [&](std::size_t i, std::size_t j) { return gram[i * n + j]; };
  if (n == 1) return {1.0};
  if (n == 2) {
    const double denom = G(0, 0) + G(1, 1) - 2.0 * G(0, 1);
    double gamma = 0.5;
    if (denom > 0.0) gamma = std::clamp((G(1, 1) - G(0, 1)) / denom, 0.0, 1.0);
    return {gamma, 1.0 - gamma};
  }

  double diag_max = 0.0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < n; ++i) {
    diag_max = std::max(diag_max, G(i, i));
    if (G(i, i) < G(start, start)) start = i;
  }
  if (diag_max == 0.0) return std::vector<double>(n, 1.0 / static_cast<double>(n));
  const double tol = options.tolerance * diag_max;

  std::vector<double> lambda(n, 0.0), glam(n);
  lambda[start] = 1.0;
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += G(i, j) * lambda[j];
      glam[i] = s;
    }
    const double f = dot(lambda, glam);
    std::size_t toward = 0, away = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (glam[i] < glam[toward]) toward = i;
      if (lambda[i] > 0.0 && (away == n || glam[i] > glam[away])) away = i;
    }
    const double fw_gap = f - glam[toward];
    const double away_gap = glam[away] - f;
    if (fw_gap <= tol) break;

    // Direction d as a sparse update: λ + γ(e_s − λ) or λ + γ(λ − e_a).
    std::vector<double> d(n);
    double max_step;
    if (fw_gap >= away_gap) {
      for (std::size_t i = 0; i < n; ++i) d[i] = -lambda[i];
      d[toward] += 1.0;
      max_step = 1.0;
    } else {
      for (std::size_t i = 0; i < n; ++i) d[i] = lambda[i];
      d[away] -= 1.0;
      max_step = lambda[away] / (1.0 - lambda[away]);
    }
    double dgd = 0.0, dgl = dot(d, glam);
    for (std::size_t i = 0; i < n; ++i) {
      if (d[i] == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) dgd += d[i] * G(i, j) * d[j];
    }
    double gamma = dgd > 0.0 ? std::clamp(-dgl / dgd, 0.0, max_step) : max_step;
    if (gamma <= 0.0) break;
    for (std::size_t i = 0; i < n; ++i) lambda[i] = std::max(0.0, lambda[i] + gamma * d[i]);
    if (gamma == max_step && fw_gap < away_gap) lambda[away] = 0.0;
    double total = 0.0;
    for (double l : lambda) total += l;
    for (double& l : lambda) l /= total;
  }
  return lambda;
}

MinNorm min_norm_direction(const std::vector<std::vector<double>>& gradients,
                           const SolverOptions& options) {
  if (gradients.empty()) throw ContractError("min_norm_direction: no gradients");
  const std::size_t n = gradients.size(), dim = gradients.front().size();
  for (const auto& g : gradients) {
    if (g.size() != dim) throw DimensionError("min_norm_direction: gradient sizes differ");
  }
  std::vector<double> gram(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) gram[i * n + j] = gram[j * n + i] = dot(gradients[i], gradients[j]);
  MinNorm out;
  out.lambda = min_norm_weights(gram, n, options);
  out.direction.assign(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < dim; ++p) out.direction[p] -= out.lambda[i] * gradients[i][p];
  return out;
}

StepResult pareto_step(std::span<const double> grad1, std::span<const double> grad2,
                       const std::vector<Vec2>& constraint_coefficients,
                       const SolverOptions& options) {
  if (grad1.size() != grad2.size()) throw DimensionError("pareto_step: gradient sizes differ");
  const double g11 = dot(grad1, grad1), g12 = dot(grad1, grad2), g22 = dot(grad2, grad2);

  std::vector<Vec2> rows{{1.0, 0.0}, {0.0, 1.0}};
  rows.insert(rows.end(), constraint_coefficients.begin(), constraint_coefficients.end());
  const std::size_t n = rows.size();
  std::vector<double> gram(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const Vec2& a = rows[i];
      const Vec2& b = rows[j];
      gram[i * n + j] = a[0] * b[0] * g11 + (a[0] * b[1] + a[1] * b[0]) * g12 + a[1] * b[1] * g22;
    }

  StepResult out;
  out.lambda = min_norm_weights(gram, n, options);
  Vec2 beta{0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    beta[0] += out.lambda[i] * rows[i][0];
    beta[1] += out.lambda[i] * rows[i][1];
  }
  out.direction.resize(grad1.size());
  double norm2 = 0.0;
  for (std::size_t p = 0; p < grad1.size(); ++p) {
    out.direction[p] = -(beta[0] * grad1[p] + beta[1] * grad2[p]);
    norm2 += out.direction[p] * out.direction[p];
  }
  out.critical = std::sqrt(norm2) <= kCriticalNorm;

  Vec2 alpha{std::max(beta[0], 0.0), std::max(beta[1], 0.0)};
  const double total = alpha[0] + alpha[1];
  out.alpha = total > 0.0 ? Vec2{alpha[0] / total, alpha[1] / total} : Vec2{0.5, 0.5};
  return out;
}

// ---------------------------------------------------------------------------

Vec2 BiObjective::full_losses(std::span<const double> theta) {
  Vec2 total{0.0, 0.0};
  const std::size_t batches = batch_count();
  for (std::size_t b = 0; b < batches; ++b) {
    const Evaluation e = evaluate(theta, b);
    total[0] += e.losses[0];
    total[1] += e.losses[1];
  }
  return {total[0] / static_cast<double>(batches), total[1] / static_cast<double>(batches)};
}

Vec2 loss_scale(BiObjective& problem, std::span<const double> theta0) {
  const Vec2 l = problem.full_losses(theta0);
  if (!std::isfinite(l[0]) || !std::isfinite(l[1])) {
    throw NumericError("initial losses are not finite: " + describe(l));
  }
  return {l[0] > 0.0 ? l[0] : 1.0, l[1] > 0.0 ? l[1] : 1.0};
}

InitialSearch find_initial_solution(BiObjective& problem, std::vector<double> theta,
                                    std::size_t k, const PreferenceSet& prefs,
                                    const Vec2& scale, double step, std::size_t max_iters,
                                    const SolverOptions& options) {
  InitialSearch out;
  const std::size_t batches = std::max<std::size_t>(problem.batch_count(), 1);
  for (std::size_t it = 0;; ++it) {
    const Evaluation e = problem.evaluate(theta, it % batches);
    const Vec2 l = normalized(e.losses, scale);
    if (!std::isfinite(l[0]) || !std::isfinite(l[1]) || !all_finite(e.grad1) || !all_finite(e.grad2)) {
      throw NumericError("initial-solution search, step " + std::to_string(it) +
                         ": non-finite loss or gradient, losses " + describe(l));
    }
    out.losses = l;
    if (in_subregion(l, k, prefs)) {
      out.feasible = true;
      break;
    }
    if (it >= max_iters) break;

    // Violated constraints only; their gradients are c_jᵀ∇L̃.
    std::vector<Vec2> rows;
    for (const Constraint& c : constraints(l, k, prefs)) {
      if (c.value > 0.0) rows.push_back(c.coefficients);
    }
    const double g11 = dot(e.grad1, e.grad1) / (scale[0] * scale[0]);
    const double g12 = dot(e.grad1, e.grad2) / (scale[0] * scale[1]);
    const double g22 = dot(e.grad2, e.grad2) / (scale[1] * scale[1]);
    const std::size_t n = rows.size();
    std::vector<double> gram(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        gram[i * n + j] = rows[i][0] * rows[j][0] * g11 +
                          (rows[i][0] * rows[j][1] + rows[i][1] * rows[j][0]) * g12 +
                          rows[i][1] * rows[j][1] * g22;
    const auto lambda = min_norm_weights(gram, n, options);
    Vec2 beta{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      beta[0] += lambda[i] * rows[i][0] / scale[0];
      beta[1] += lambda[i] * rows[i][1] / scale[1];
    }
    for (std::size_t p = 0; p < theta.size(); ++p) {
      theta[p] -= step * (beta[0] * e.grad1[p] + beta[1] * e.grad2[p]);
    }
    out.iterations = it + 1;
  }
  out.theta = std::move(theta);
  return out;
}

SubproblemResult train_pareto(BiObjective& problem, const std::vector<double>& theta0,
                              const PreferenceSet& prefs, std::size_t k, const Vec2& scale,
                              const TrainerConfig& config) {
  if (theta0.size() != problem.dimension()) {
    throw DimensionError("train_pareto: θ₀ has the wrong dimension");
  }
  SubproblemResult result;
  result.k = k;
  std::vector<double> theta;
  if (config.fixed_alpha) {
    result.initial.theta = theta0;
    result.initial.feasible = true;
    theta = theta0;
  } else {
    result.initial = find_initial_solution(problem, theta0, k, prefs, scale, config.init_step,
                                           config.init_max_iters, config.solver);
    theta = result.initial.theta;
  }

  std::vector<double> last_feasible;
  if (!config.fixed_alpha && in_subregion(normalized(problem.full_losses(theta), scale), k, prefs)) {
    last_feasible = theta;
  }

  AdamState adam(theta.size());
  LearningRateSchedule schedule{config.lr, config.lr_decay};
  const std::size_t batches = problem.batch_count();
  std::size_t step = 0;
  bool stop = false;
  std::vector<double> combined(theta.size());
  for (std::size_t epoch = 0; epoch < config.epochs && !stop; ++epoch) {
    problem.begin_epoch(epoch);
    const double lr = schedule.at_epoch(epoch);
    for (std::size_t b = 0; b < batches; ++b, ++step) {
      Evaluation e = problem.evaluate(theta, b);
      const Vec2 l = normalized(e.losses, scale);
      if (!std::isfinite(l[0]) || !std::isfinite(l[1]) || !all_finite(e.grad1) ||
          !all_finite(e.grad2)) {
        std::ostringstream msg;
        msg << "sub-problem " << k << ", step " << step << ", lr " << lr
            << ": non-finite loss or gradient, losses " << describe(l);
        throw NumericError(msg.str());
      }
      for (double& g : e.grad1) g /= scale[0];
      for (double& g : e.grad2) g /= scale[1];

      Vec2 alpha = config.alpha;
      bool critical = false;
      if (!config.fixed_alpha) {
        std::vector<Vec2> coeffs;
        for (const Constraint& c : select_active(l, k, prefs, config.eps_active, config.max_active)) {
          coeffs.push_back(c.coefficients);
        }
        const StepResult s = pareto_step(e.grad1, e.grad2, coeffs, config.solver);
        alpha = s.alpha;
        critical = s.critical;
      }
      result.trajectory.push_back({step, l[0], l[1], alpha[0], alpha[1], k});
      double norm2 = 0.0;
      for (std::size_t p = 0; p < theta.size(); ++p) {
        combined[p] = alpha[0] * e.grad1[p] + alpha[1] * e.grad2[p];
        norm2 += combined[p] * combined[p];
      }
      if (critical || std::sqrt(norm2) <= kCriticalNorm) {
        result.termination = Termination::kCritical;
        stop = true;
        break;
      }
      adam_step(theta, combined, adam, lr, config.adam);
    }
    if (!config.fixed_alpha &&
        in_subregion(normalized(problem.full_losses(theta), scale), k, prefs)) {
      last_feasible = theta;
    }
  }

  if (!last_feasible.empty()) theta = std::move(last_feasible);
  result.losses = normalized(problem.full_losses(theta), scale);
  result.feasible = in_subregion(result.losses, k, prefs);
  result.theta = std::move(theta);
  return result;
}

std::vector<SubproblemResult> train_all_serial(const ProblemFactory& factory,
                                               const std::vector<double>& theta0,
                                               const PreferenceSet& prefs, const Vec2& scale,
                                               const TrainerConfig& config) {
  std::vector<SubproblemResult> out;
  out.reserve(prefs.size());
  for (std::size_t k = 0; k < prefs.size(); ++k) {
    auto problem = factory(k);
    out.push_back(train_pareto(*problem, theta0, prefs, k, scale, config));
  }
  return out;
}

std::vector<SubproblemResult> train_all_parallel(const ProblemFactory& factory,
                                                 const std::vector<double>& theta0,
                                                 const PreferenceSet& prefs, const Vec2& scale,
                                                 const TrainerConfig& config) {
  const std::size_t count = prefs.size();
  std::vector<SubproblemResult> out(count);
  std::vector<std::string> errors(count);
  std::vector<int> kinds(count, 0);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t k = 0; k < count; ++k) {
    try {
      auto problem = factory(k);
      out[k] = train_pareto(*problem, theta0, prefs, k, scale, config);
    } catch (const NumericError& e) {
      errors[k] = e.what();
      kinds[k] = 1;
    } catch (const std::exception& e) {
      errors[k] = e.what();
      kinds[k] = 2;
    }
  }
  // Exceptions cannot cross the parallel region; rethrow the first in k order.
  for (std::size_t k = 0; k < count; ++k) {
    if (kinds[k] == 1) throw NumericError(errors[k]);
    if (kinds[k] == 2) throw std::runtime_error(errors[k]);
  }
  return out;
}

void write_trajectory(std::ostream& out, const std::vector<TrajectoryRow>& rows) {
  for (const TrajectoryRow& r : rows) {
    out << nlohmann::json{{"step", r.step},     {"l1", r.l1},         {"l2", r.l2},
                          {"alpha1", r.alpha1}, {"alpha2", r.alpha2}, {"k", r.k}}
               .dump()
        << '\n';
  }
}

std::string termination_name(Termination t) {
  return t == Termination::kCritical ? "pareto-critical" : "epochs";
}

}  // namespace numcast::pareto
