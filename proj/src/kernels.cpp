#include "kvit/kernels.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include <omp.h>

#include "kvit/error.hpp"

namespace kvit::kernels {
namespace {

// Plain real arithmetic: std::complex operator* goes through the Annex G
// NaN-recovery path, which is several times slower in tight loops.
inline void mac(Complex& acc, Complex a, Complex b) {
  acc = Complex(acc.real() + a.real() * b.real() - a.imag() * b.imag(),
                acc.imag() + a.real() * b.imag() + a.imag() * b.real());
}

void check_gemm(Op op_a, Op op_b, std::span<const Complex> a, std::span<const Complex> b,
                std::span<Complex> c, GemmShape s) {
  (void)op_a;
  (void)op_b;
  if (a.size() != s.m * s.k || b.size() != s.k * s.n || c.size() != s.m * s.n) {
    throw ShapeError("gemm: buffer sizes do not match the requested shape");
  }
}

// One output row. Summation runs over t ascending for every (i, j) in every
// variant, which is what makes serial and parallel results identical.
void gemm_row(Op op_a, Op op_b, const Complex* a, const Complex* b, Complex* c_row,
              std::size_t i, GemmShape s, bool accumulate) {
  const std::size_t m = s.m, k = s.k, n = s.n;
  if (!accumulate) {
    for (std::size_t j = 0; j < n; ++j) c_row[j] = Complex{};
  }
  if (op_b == Op::none) {
    for (std::size_t t = 0; t < k; ++t) {
      Complex av = op_a == Op::none ? a[i * k + t] : std::conj(a[t * m + i]);
      const Complex* b_row = b + t * n;
      for (std::size_t j = 0; j < n; ++j) mac(c_row[j], av, b_row[j]);
    }
  } else {
    for (std::size_t j = 0; j < n; ++j) {
      Complex acc{};
      const Complex* b_row = b + j * k;
      for (std::size_t t = 0; t < k; ++t) {
        Complex av = op_a == Op::none ? a[i * k + t] : std::conj(a[t * m + i]);
        mac(acc, av, std::conj(b_row[t]));
      }
      c_row[j] += acc;
    }
  }
}

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fft_radix2(std::span<Complex> x, bool inverse) {
  const std::size_t n = x.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(len);
      const Complex w(std::cos(ang), std::sin(ang));
      for (std::size_t start = 0; start < n; start += len) {
        const Complex u = x[start + k];
        const Complex v = x[start + k + half];
        const Complex vw(v.real() * w.real() - v.imag() * w.imag(),
                         v.real() * w.imag() + v.imag() * w.real());
        x[start + k] = u + vw;
        x[start + k + half] = u - vw;
      }
    }
  }
}

void dft_direct(std::span<Complex> x, bool inverse) {
  const std::size_t n = x.size();
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<Complex> twiddle(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    twiddle[k] = Complex(std::cos(ang), std::sin(ang));
  }
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc{};
    for (std::size_t j = 0; j < n; ++j) mac(acc, x[j], twiddle[(j * k) % n]);
    out[k] = acc;
  }
  std::copy(out.begin(), out.end(), x.begin());
}

void fft_column(std::span<Complex> grid, std::size_t rows, std::size_t cols, std::size_t c,
                bool inverse, std::vector<Complex>& scratch) {
  scratch.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) scratch[r] = grid[r * cols + c];
  fft_inplace(scratch, inverse);
  for (std::size_t r = 0; r < rows; ++r) grid[r * cols + c] = scratch[r];
}

constexpr std::size_t kParallelGemmWork = std::size_t{1} << 15;
constexpr std::size_t kParallelFftCells = std::size_t{1} << 12;

bool use_parallel(Exec exec, std::size_t work, std::size_t threshold) {
  if (exec == Exec::serial) return false;
  if (exec == Exec::parallel) return true;
  return work >= threshold && !omp_in_parallel() && omp_get_max_threads() > 1;
}

}  // namespace

void gemm_serial(Op op_a, Op op_b, std::span<const Complex> a, std::span<const Complex> b,
                 std::span<Complex> c, GemmShape s, bool accumulate) {
  check_gemm(op_a, op_b, a, b, c, s);
  for (std::size_t i = 0; i < s.m; ++i) {
    gemm_row(op_a, op_b, a.data(), b.data(), c.data() + i * s.n, i, s, accumulate);
  }
}

void gemm_parallel(Op op_a, Op op_b, std::span<const Complex> a, std::span<const Complex> b,
                   std::span<Complex> c, GemmShape s, bool accumulate) {
  check_gemm(op_a, op_b, a, b, c, s);
  const auto m = static_cast<std::ptrdiff_t>(s.m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < m; ++i) {
    const auto row = static_cast<std::size_t>(i);
    gemm_row(op_a, op_b, a.data(), b.data(), c.data() + row * s.n, row, s, accumulate);
  }
}

void gemm(Op op_a, Op op_b, std::span<const Complex> a, std::span<const Complex> b,
          std::span<Complex> c, GemmShape s, bool accumulate, Exec exec) {
  if (use_parallel(exec, s.m * s.n * s.k, kParallelGemmWork)) {
    gemm_parallel(op_a, op_b, a, b, c, s, accumulate);
  } else {
    gemm_serial(op_a, op_b, a, b, c, s, accumulate);
  }
}

void fft_inplace(std::span<Complex> x, bool inverse) {
  if (x.size() <= 1) return;
  if (is_power_of_two(x.size())) {
    fft_radix2(x, inverse);
  } else {
    dft_direct(x, inverse);
  }
}

void fft2_serial(std::span<Complex> grid, std::size_t rows, std::size_t cols, bool inverse) {
  if (grid.size() != rows * cols) throw ShapeError("fft2: grid size does not match rows*cols");
  for (std::size_t r = 0; r < rows; ++r) fft_inplace(grid.subspan(r * cols, cols), inverse);
  std::vector<Complex> scratch;
  for (std::size_t c = 0; c < cols; ++c) fft_column(grid, rows, cols, c, inverse, scratch);
}

void fft2_parallel(std::span<Complex> grid, std::size_t rows, std::size_t cols, bool inverse) {
  if (grid.size() != rows * cols) throw ShapeError("fft2: grid size does not match rows*cols");
  const auto nr = static_cast<std::ptrdiff_t>(rows);
  const auto nc = static_cast<std::ptrdiff_t>(cols);
#pragma omp parallel
  {
#pragma omp for schedule(static)
    for (std::ptrdiff_t r = 0; r < nr; ++r) {
      fft_inplace(grid.subspan(static_cast<std::size_t>(r) * cols, cols), inverse);
    }
    std::vector<Complex> scratch;
#pragma omp for schedule(static)
    for (std::ptrdiff_t c = 0; c < nc; ++c) {
      fft_column(grid, rows, cols, static_cast<std::size_t>(c), inverse, scratch);
    }
  }
}

void fft2(std::span<Complex> grid, std::size_t rows, std::size_t cols, bool inverse, Exec exec) {
  if (use_parallel(exec, rows * cols, kParallelFftCells)) {
    fft2_parallel(grid, rows, cols, inverse);
  } else {
    fft2_serial(grid, rows, cols, inverse);
  }
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace kvit::kernels
