// Serial reference vs OpenMP kernels, and serial vs parallel sub-problem
// training.

#include <benchmark/benchmark.h>

#include <memory>
#include <random>
#include <vector>

#include "numcast/kernels.hpp"
#include "numcast/pareto.hpp"

namespace {

using namespace numcast;

std::vector<double> random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::vector<double> m(rows * cols);
  for (double& x : m) x = gauss(rng);
  return m;
}

template <auto Kernel>
void gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Kernel(a, b, c, n, n, n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

BENCHMARK(gemm<kernels::serial::gemm_nn>)->Name("gemm_nn/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(gemm<kernels::omp::gemm_nn>)->Name("gemm_nn/omp")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(gemm<kernels::serial::gemm_nt>)->Name("gemm_nt/serial")->Arg(128);
BENCHMARK(gemm<kernels::omp::gemm_nt>)->Name("gemm_nt/omp")->Arg(128);
BENCHMARK(gemm<kernels::serial::gemm_tn>)->Name("gemm_tn/serial")->Arg(128);
BENCHMARK(gemm<kernels::omp::gemm_tn>)->Name("gemm_tn/omp")->Arg(128);

// Two least-squares tasks ‖Aθ − y₁‖²/m and ‖Aθ − y₂‖²/m split into batches.
class LeastSquaresPair : public pareto::BiObjective {
 public:
  LeastSquaresPair(std::size_t rows, std::size_t dim, std::size_t batches)
      : rows_(rows), dim_(dim), batches_(batches), a_(random_matrix(rows, dim, 3)),
        y1_(random_matrix(rows, 1, 4)), y2_(random_matrix(rows, 1, 5)) {}

  std::size_t dimension() const override { return dim_; }
  std::size_t batch_count() const override { return batches_; }

  pareto::Evaluation evaluate(std::span<const double> theta, std::size_t batch) override {
    const std::size_t per = rows_ / batches_, lo = batch * per;
    pareto::Evaluation e;
    e.grad1.assign(dim_, 0.0);
    e.grad2.assign(dim_, 0.0);
    for (std::size_t r = lo; r < lo + per; ++r) {
      double fit = 0.0;
      for (std::size_t j = 0; j < dim_; ++j) fit += a_[r * dim_ + j] * theta[j];
      const double r1 = fit - y1_[r], r2 = fit - y2_[r];
      e.losses[0] += r1 * r1 / static_cast<double>(per);
      e.losses[1] += r2 * r2 / static_cast<double>(per);
      for (std::size_t j = 0; j < dim_; ++j) {
        e.grad1[j] += 2.0 * r1 * a_[r * dim_ + j] / static_cast<double>(per);
        e.grad2[j] += 2.0 * r2 * a_[r * dim_ + j] / static_cast<double>(per);
      }
    }
    return e;
  }

 private:
  std::size_t rows_, dim_, batches_;
  std::vector<double> a_, y1_, y2_;
};

template <bool Parallel>
void subproblems(benchmark::State& state) {
  const auto K = static_cast<std::size_t>(state.range(0));
  const auto prefs = pareto::make_preferences(K);
  const pareto::ProblemFactory factory = [](std::size_t) {
    return std::make_unique<LeastSquaresPair>(512, 64, 8);
  };
  const std::vector<double> theta0(64, 0.0);
  auto probe = factory(0);
  const auto scale = pareto::loss_scale(*probe, theta0);
  pareto::TrainerConfig cfg;
  cfg.epochs = 5;
  for (auto _ : state) {
    auto r = Parallel ? pareto::train_all_parallel(factory, theta0, prefs, scale, cfg)
                      : pareto::train_all_serial(factory, theta0, prefs, scale, cfg);
    benchmark::DoNotOptimize(r.data());
  }
}

BENCHMARK(subproblems<false>)->Name("train_all/serial")->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);
BENCHMARK(subproblems<true>)->Name("train_all/parallel")->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
