#pragma once

#include <cstddef>
#include <span>

// Dense row-major GEMM kernels used by the autodiff tape.
//
// Every kernel has a serial reference in `serial::` and an OpenMP version in
// `omp::`. The OpenMP versions split work over output rows only, so each
// output element is accumulated in the same order as the serial reference and
// results are bit-identical. The unqualified entry points dispatch on problem
// size.

namespace numcast::kernels {

/// Work (m*n*k multiply-adds) below which dispatch stays serial.
inline constexpr std::size_t kParallelThreshold = std::size_t{1} << 18;

namespace serial {

// c[m×n] (+)= a[m×k] · b[k×n]
void gemm_nn(std::span<const double> a, std::span<const double> b,
             std::span<double> c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate);
// c[m×k] (+)= a[m×n] · b[k×n]ᵀ
void gemm_nt(std::span<const double> a, std::span<const double> b,
             std::span<double> c, std::size_t m, std::size_t n, std::size_t k,
             bool accumulate);
// c[k×n] (+)= a[m×k]ᵀ · b[m×n]
void gemm_tn(std::span<const double> a, std::span<const double> b,
             std::span<double> c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate);

}  // namespace serial

namespace omp {

void gemm_nn(std::span<const double> a, std::span<const double> b,
             std::span<double> c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate);
void gemm_nt(std::span<const double> a, std::span<const double> b,
             std::span<double> c, std::size_t m, std::size_t n, std::size_t k,
             bool accumulate);
void gemm_tn(std::span<const double> a, std::span<const double> b,
             std::span<double> c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate);

}  // namespace omp

void gemm_nn(std::span<const double> a, std::span<const double> b,
             std::span<double> c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate);
void gemm_nt(std::span<const double> a, std::span<const double> b,
             std::span<double> c, std::size_t m, std::size_t n, std::size_t k,
             bool accumulate);
void gemm_tn(std::span<const double> a, std::span<const double> b,
             std::span<double> c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate);

}  // namespace numcast::kernels
