#pragma once

#include <complex>
#include <cstddef>
#include <span>

namespace kvit {
using Complex = std::complex<double>;
}

/// Dense numeric kernels. Every kernel has a serial reference and an OpenMP
/// variant; both evaluate each output element with the same summation order,
/// so their results are bitwise identical for any thread count.
namespace kvit::kernels {

enum class Exec { automatic, serial, parallel };

/// How an operand enters a product: as stored, or as its conjugate transpose.
enum class Op { none, adjoint };

struct GemmShape {
  std::size_t m = 0;  // rows of op(A) and C
  std::size_t k = 0;  // contraction extent
  std::size_t n = 0;  // cols of op(B) and C
};

/// C (+)= op(A) * op(B). A is stored m×k (none) or k×m (adjoint); B is k×n or n×k.
void gemm_serial(Op op_a, Op op_b, std::span<const Complex> a, std::span<const Complex> b,
                 std::span<Complex> c, GemmShape s, bool accumulate);
void gemm_parallel(Op op_a, Op op_b, std::span<const Complex> a, std::span<const Complex> b,
                   std::span<Complex> c, GemmShape s, bool accumulate);
void gemm(Op op_a, Op op_b, std::span<const Complex> a, std::span<const Complex> b,
          std::span<Complex> c, GemmShape s, bool accumulate, Exec exec = Exec::automatic);

/// Unnormalized 1D DFT in place: X[k] = sum_j x[j] exp(-+2 pi i jk/n).
/// Radix-2 for powers of two, direct summation otherwise.
void fft_inplace(std::span<Complex> x, bool inverse);

/// Unnormalized 2D DFT of a row-major rows×cols grid (rows first, then columns).
void fft2_serial(std::span<Complex> grid, std::size_t rows, std::size_t cols, bool inverse);
void fft2_parallel(std::span<Complex> grid, std::size_t rows, std::size_t cols, bool inverse);
void fft2(std::span<Complex> grid, std::size_t rows, std::size_t cols, bool inverse,
          Exec exec = Exec::automatic);

/// Worker threads available to the parallel variants (1 without OpenMP runtime support).
int max_threads();

}  // namespace kvit::kernels
