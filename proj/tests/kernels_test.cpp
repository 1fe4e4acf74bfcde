#include <gtest/gtest.h>

#include <omp.h>

#include <vector>

#include "kvit/kernels.hpp"
#include "kvit/rng.hpp"

using namespace kvit;
using kernels::Op;

namespace {

std::vector<Complex> random_vec(std::size_t n, Rng& rng) {
  std::vector<Complex> v(n);
  for (auto& z : v) z = Complex(rng.normal(), rng.normal());
  return v;
}

}  // namespace

class ParallelKernels : public ::testing::Test {
 protected:
  void SetUp() override {
    saved_ = omp_get_max_threads();
    omp_set_num_threads(4);
  }
  void TearDown() override { omp_set_num_threads(saved_); }
  int saved_ = 1;
};

TEST_F(ParallelKernels, GemmParallelIsBitwiseSerial) {
  Rng rng(1);
  const kernels::GemmShape s{37, 19, 23};
  for (auto [oa, ob] : {std::pair{Op::none, Op::none}, std::pair{Op::none, Op::adjoint},
                        std::pair{Op::adjoint, Op::none}}) {
    const auto a = random_vec(s.m * s.k, rng);
    const auto b = random_vec(s.k * s.n, rng);
    auto base = random_vec(s.m * s.n, rng);
    for (bool acc : {false, true}) {
      auto c1 = base, c2 = base;
      kernels::gemm_serial(oa, ob, a, b, c1, s, acc);
      kernels::gemm_parallel(oa, ob, a, b, c2, s, acc);
      ASSERT_EQ(c1, c2);
    }
  }
}

TEST_F(ParallelKernels, Fft2ParallelIsBitwiseSerial) {
  Rng rng(2);
  for (auto [r, c] : {std::pair<std::size_t, std::size_t>{32, 32}, {16, 12}, {7, 9}}) {
    const auto grid = random_vec(r * c, rng);
    auto g1 = grid, g2 = grid;
    kernels::fft2_serial(g1, r, c, false);
    kernels::fft2_parallel(g2, r, c, false);
    ASSERT_EQ(g1, g2);
  }
}

TEST(Gemm, AdjointOperandsMatchExplicitConjugateTranspose) {
  Rng rng(3);
  const std::size_t m = 4, k = 3, n = 5;
  const auto a = random_vec(m * k, rng);
  const auto b = random_vec(k * n, rng);
  std::vector<Complex> ah(k * m), bh(n * k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t t = 0; t < k; ++t) ah[t * m + i] = std::conj(a[i * k + t]);
  for (std::size_t t = 0; t < k; ++t)
    for (std::size_t j = 0; j < n; ++j) bh[j * k + t] = std::conj(b[t * n + j]);
  std::vector<Complex> ref(m * n), via_a(m * n), via_b(m * n);
  kernels::gemm_serial(Op::none, Op::none, a, b, ref, {m, k, n}, false);
  kernels::gemm_serial(Op::adjoint, Op::none, ah, b, via_a, {m, k, n}, false);
  kernels::gemm_serial(Op::none, Op::adjoint, a, bh, via_b, {m, k, n}, false);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    EXPECT_NEAR(std::abs(ref[i] - via_a[i]), 0.0, 1e-13);
    EXPECT_NEAR(std::abs(ref[i] - via_b[i]), 0.0, 1e-13);
  }
}

TEST(Fft, RadixTwoAndDirectAgreeOnRoundTrip) {
  Rng rng(4);
  for (std::size_t n : {1u, 2u, 5u, 8u, 12u, 64u}) {
    const auto x = random_vec(n, rng);
    auto y = x;
    kernels::fft_inplace(y, false);
    kernels::fft_inplace(y, true);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(std::abs(y[i] / static_cast<double>(n) - x[i]), 0.0, 1e-12);
    }
  }
}
