#include "numcast/kernels.hpp"

#include <algorithm>

namespace numcast::kernels {

namespace {

inline void gemm_nn_rows(const double* a, const double* b, double* c,
                         std::size_t row_begin, std::size_t row_end,
                         std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = row_begin; i < row_end; ++i) {
    double* ci = c + i * n;
    if (!accumulate) std::fill(ci, ci + n, 0.0);
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

inline void gemm_nt_rows(const double* a, const double* b, double* c,
                         std::size_t row_begin, std::size_t row_end,
                         std::size_t n, std::size_t k, bool accumulate) {
  for (std::size_t i = row_begin; i < row_end; ++i) {
    const double* ai = a + i * n;
    double* ci = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += ai[j] * bp[j];
      ci[p] = accumulate ? ci[p] + s : s;
    }
  }
}

// Output rows of aᵀb are indexed by the shared column p of a.
inline void gemm_tn_rows(const double* a, const double* b, double* c,
                         std::size_t row_begin, std::size_t row_end,
                         std::size_t m, std::size_t k, std::size_t n,
                         bool accumulate) {
  for (std::size_t p = row_begin; p < row_end; ++p) {
    double* cp = c + p * n;
    if (!accumulate) std::fill(cp, cp + n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* bi = b + i * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += aip * bi[j];
    }
  }
}

}  // namespace

namespace serial {

void gemm_nn(std::span<const double> a, std::span<const double> b,
             std::span<double> c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  gemm_nn_rows(a.data(), b.data(), c.data(), 0, m, k, n, accumulate);
}

void gemm_nt(std::span<const double> a, std::span<const double> b,
             std::span<double> c, std::size_t m, std::size_t n, std::size_t k,
             bool accumulate) {
  gemm_nt_rows(a.data(), b.data(), c.data(), 0, m, n, k, accumulate);
}

void gemm_tn(std::span<const double> a, std::span<const double> b,
             std::span<double> c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  gemm_tn_rows(a.data(), b.data(), c.data(), 0, k, m, k, n, accumulate);
}

}  // namespace serial

namespace omp {

void gemm_nn(std::span<const double> a, std::span<const double> b,
             std::span<double> c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  const auto rows = static_cast<long long>(m);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    gemm_nn_rows(a.data(), b.data(), c.data(), r, r + 1, k, n, accumulate);
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b,
             std::span<double> c, std::size_t m, std::size_t n, std::size_t k,
             bool accumulate) {
  const auto rows = static_cast<long long>(m);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    gemm_nt_rows(a.data(), b.data(), c.data(), r, r + 1, n, k, accumulate);
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b,
             std::span<double> c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  const auto rows = static_cast<long long>(k);
#pragma omp parallel for schedule(static)
  for (long long p = 0; p < rows; ++p) {
    const auto r = static_cast<std::size_t>(p);
    gemm_tn_rows(a.data(), b.data(), c.data(), r, r + 1, m, k, n, accumulate);
  }
}

}  // namespace omp

void gemm_nn(std::span<const double> a, std::span<const double> b,
             std::span<double> c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  if (m * k * n >= kParallelThreshold && m > 1) {
    omp::gemm_nn(a, b, c, m, k, n, accumulate);
  } else {
    serial::gemm_nn(a, b, c, m, k, n, accumulate);
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b,
             std::span<double> c, std::size_t m, std::size_t n, std::size_t k,
             bool accumulate) {
  if (m * k * n >= kParallelThreshold && m > 1) {
    omp::gemm_nt(a, b, c, m, n, k, accumulate);
  } else {
    serial::gemm_nt(a, b, c, m, n, k, accumulate);
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b,
             std::span<double> c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  if (m * k * n >= kParallelThreshold && k > 1) {
    omp::gemm_tn(a, b, c, m, k, n, accumulate);
  } else {
    serial::gemm_tn(a, b, c, m, k, n, accumulate);
  }
}

}  // namespace numcast::kernels
