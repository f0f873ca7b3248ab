#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "numcast/optim.hpp"

// Preference-constrained two-objective descent. Sub-problem indices k are
// 0-based: k = 0 is the preference vector (1, 0).

namespace numcast::pareto {

using Vec2 = std::array<double, 2>;

struct PreferenceSet {
  std::vector<Vec2> u;  // sorted by angle, unit length

  std::size_t size() const { return u.size(); }
};

/// u_k = (cos φ_k, sin φ_k), φ_k = k/(K−1)·π/2 for k = 0..K−1.
PreferenceSet make_preferences(std::size_t count);

/// u_jᵀv ≤ u_kᵀv for every j (ties allowed).
bool in_subregion(const Vec2& v, std::size_t k, const PreferenceSet& prefs);

/// G_j(v) = (u_j − u_k)ᵀv for j ≠ k, in index order.
struct Constraint {
  std::size_t j = 0;
  double value = 0.0;
  Vec2 coefficients{};  // u_j − u_k
};
std::vector<Constraint> constraints(const Vec2& v, std::size_t k, const PreferenceSet& prefs);

/// Constraints with G_j ≥ −eps, keeping the `max_active` largest values.
std::vector<Constraint> select_active(const Vec2& v, std::size_t k, const PreferenceSet& prefs,
                                      double eps, std::size_t max_active);

struct SolverOptions {
  double tolerance = 1e-9;  // Frank–Wolfe gap, relative to the largest Gram diagonal
  std::size_t max_iterations = 1000;
};

/// Simplex weights minimizing λᵀGλ for a Gram matrix G (row-major n×n).
/// Closed form for n = 2, away-step Frank–Wolfe for n > 2.
std::vector<double> min_norm_weights(const std::vector<double>& gram, std::size_t n,
                                     const SolverOptions& options = {});

struct MinNorm {
  std::vector<double> direction;  // −Σλᵢgᵢ
  std::vector<double> lambda;
};

MinNorm min_norm_direction(const std::vector<std::vector<double>>& gradients,
                           const SolverOptions& options = {});

/// Threshold on ‖direction‖ below which a point is treated as restricted
/// Pareto-critical.
inline constexpr double kCriticalNorm = 1e-10;

struct StepResult {
  std::vector<double> direction;
  std::vector<double> lambda;  // over {∇L₁, ∇L₂, ∇G_j...}
  Vec2 alpha{0.5, 0.5};
  bool critical = false;
};

/// Min-norm problem over {∇L₁, ∇L₂} ∪ {c_jᵀ∇L : active j}, solved in the
/// reduced space spanned by the two task gradients. Task weights fold the
/// constraint weights back: α = λ₁₂ + Σ λ_j c_j, clamped at 0 and renormalized.
StepResult pareto_step(std::span<const double> grad1, std::span<const double> grad2,
                       const std::vector<Vec2>& constraint_coefficients,
                       const SolverOptions& options = {});

// ---------------------------------------------------------------------------

struct Evaluation {
  Vec2 losses{};
  std::vector<double> grad1;
  std::vector<double> grad2;
};

/// Two differentiable objectives over a flat parameter vector, evaluated one
/// mini-batch at a time.
class BiObjective {
 public:
  virtual ~BiObjective() = default;
  virtual std::size_t dimension() const = 0;
  virtual std::size_t batch_count() const = 0;
  virtual Evaluation evaluate(std::span<const double> theta, std::size_t batch) = 0;
  /// Loss vector over all batches. Defaults to the batch-size-agnostic mean
  /// of per-batch losses.
  virtual Vec2 full_losses(std::span<const double> theta);
  /// Called before each epoch; may reorder batches.
  virtual void begin_epoch(std::size_t /*epoch*/) {}
};

struct InitialSearch {
  std::vector<double> theta;
  std::size_t iterations = 0;
  bool feasible = false;
  Vec2 losses{};  // normalized, at the returned θ
};

/// θ ← θ + η·d with d the negated min-norm point of the violated constraint
/// gradients, until the normalized batch losses fall in Ω_k or `max_iters`
/// steps have been taken.
InitialSearch find_initial_solution(BiObjective& problem, std::vector<double> theta,
                                    std::size_t k, const PreferenceSet& prefs,
                                    const Vec2& scale, double step, std::size_t max_iters,
                                    const SolverOptions& options = {});

struct TrainerConfig {
  std::size_t epochs = 20;
  double lr = 1e-3;
  double lr_decay = 0.95;
  double eps_active = 1e-3;
  std::size_t max_active = 5;
  double init_step = 0.05;
  std::size_t init_max_iters = 50;
  bool fixed_alpha = false;
  Vec2 alpha{0.5, 0.5};  // used when fixed_alpha
  AdamConfig adam;
  SolverOptions solver;
};

struct TrajectoryRow {
  std::size_t step = 0;
  double l1 = 0.0;
  double l2 = 0.0;
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  std::size_t k = 0;
};

enum class Termination { kEpochs, kCritical };

struct SubproblemResult {
  std::size_t k = 0;
  std::vector<double> theta;
  InitialSearch initial;
  bool feasible = false;     // returned θ satisfies Ω_k on full normalized losses
  Vec2 losses{};             // normalized full losses at the returned θ
  Termination termination = Termination::kEpochs;
  std::vector<TrajectoryRow> trajectory;
};

/// Loss normalizers: full losses at θ₀, with zeros replaced by 1.
Vec2 loss_scale(BiObjective& problem, std::span<const double> theta0);

/// Initial search, then Adam on α₁L̃₁ + α₂L̃₂ with α from pareto_step at
/// every mini-batch and lr decayed per epoch. Returns the last iterate that
/// was feasible at an epoch boundary, or the final iterate if none was.
SubproblemResult train_pareto(BiObjective& problem, const std::vector<double>& theta0,
                              const PreferenceSet& prefs, std::size_t k, const Vec2& scale,
                              const TrainerConfig& config);

using ProblemFactory = std::function<std::unique_ptr<BiObjective>(std::size_t k)>;

/// All K sub-problems one after another.
std::vector<SubproblemResult> train_all_serial(const ProblemFactory& factory,
                                               const std::vector<double>& theta0,
                                               const PreferenceSet& prefs, const Vec2& scale,
                                               const TrainerConfig& config);
/// Same results as train_all_serial, with sub-problems spread over OpenMP
/// threads. Each sub-problem owns the objective built for it by `factory`.
std::vector<SubproblemResult> train_all_parallel(const ProblemFactory& factory,
                                                 const std::vector<double>& theta0,
                                                 const PreferenceSet& prefs, const Vec2& scale,
                                                 const TrainerConfig& config);

/// One JSON record per row: step, l1, l2, alpha1, alpha2, k.
void write_trajectory(std::ostream& out, const std::vector<TrajectoryRow>& rows);

std::string termination_name(Termination t);

}  // namespace numcast::pareto
