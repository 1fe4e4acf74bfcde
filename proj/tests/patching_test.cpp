#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <tuple>

#include "fd_oracle.hpp"
#include "kvit/ops.hpp"
#include "kvit/patching.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace kvit;
using kvit::testing::oracle_rank;
using kvit::testing::random_slice;

TEST(RadialPartition, SinglePixel) {
  const auto part = RadialPartition::build(1, 1, 1);
  EXPECT_EQ(part.ring_count(), 1u);
  EXPECT_EQ(part.order()[0], 0u);
  EXPECT_EQ(part.squared_radius(0), 0);
}

TEST(RadialPartition, FourByFourHandDerived) {
  const auto part = RadialPartition::build(4, 4, 4);
  ASSERT_EQ(part.ring_count(), 4u);
  // (row, col) in rank order, worked out by listing r² for all 16 pixels.
  const std::array<std::pair<int, int>, 16> expected{{{2, 2}, {1, 2}, {2, 1}, {2, 3},
                                                       {3, 2}, {1, 1}, {1, 3}, {3, 1},
                                                       {3, 3}, {0, 2}, {2, 0}, {0, 1},
                                                       {0, 3}, {1, 0}, {3, 0}, {0, 0}}};
  for (std::size_t i = 0; i < 16; ++i) {
    const auto [r, c] = expected[i];
    EXPECT_EQ(part.order()[i], static_cast<std::uint32_t>(r * 4 + c)) << "rank " << i;
    EXPECT_EQ(part.ring_of()[r * 4 + c], i / 4);
  }
}

TEST(RadialPartition, RejectsBadCapacity) {
  EXPECT_THROW(RadialPartition::build(4, 4, 0), DomainError);
  EXPECT_THROW(RadialPartition::build(4, 4, 17), DomainError);
  EXPECT_THROW(RadialPartition::build(0, 4, 1), DomainError);
}

TEST(RadialPartition, FullResolutionRingCount) {
  // 16 rings of at most 3800 pixels: any grid with 15·3800 < HW <= 16·3800.
  const auto part = RadialPartition::build(240, 240, 3800);
  EXPECT_EQ(part.ring_count(), 16u);
  EXPECT_EQ(part.ring_size(15), 240u * 240u - 15u * 3800u);
}

TEST(RadialPartition, RandomTriplesMatchOracle) {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t h = 1 + rng.below(64), w = 1 + rng.below(64);
    const std::size_t p = 1 + rng.below(h * w);
    const auto part = RadialPartition::build(h, w, p);
    const std::size_t n = (h * w + p - 1) / p;
    ASSERT_EQ(part.ring_count(), n);

    std::vector<int> seen(h * w, 0);
    for (auto px : part.order()) ++seen[px];
    EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));

    std::vector<std::size_t> counts(n, 0);
    for (std::size_t px = 0; px < h * w; ++px) ++counts[part.ring_of()[px]];
    for (std::size_t k = 0; k + 1 < n; ++k) EXPECT_EQ(counts[k], p);
    EXPECT_EQ(counts[n - 1], h * w - (n - 1) * p);

    for (std::size_t k = 0; k + 1 < n; ++k) {
      const auto last = part.squared_radius(part.order()[(k + 1) * p - 1]);
      const auto next = part.squared_radius(part.order()[(k + 1) * p]);
      EXPECT_LE(last, next);
    }

    if (h * w <= 1024) {
      const auto rank = oracle_rank(h, w);
      for (std::size_t i = 0; i < h * w; ++i) ASSERT_EQ(rank[part.order()[i]], i);
    }

    const auto again = RadialPartition::build(h, w, p);
    EXPECT_TRUE(std::equal(part.order().begin(), part.order().end(), again.order().begin()));
  }
}

TEST(ExtractPatches, ZeroSliceGivesZeroPatches) {
  const auto part = RadialPartition::build(5, 7, 6);
  const auto seq = extract_patches(KSlice(5, 7), part);
  for (std::size_t i = 0; i < seq.values.size(); ++i) EXPECT_EQ(seq.values[i], Complex{});
}

TEST(ExtractPatches, DeltaAtDcLandsFirst) {
  KSlice s(6, 6);
  s.values[3 * 6 + 3] = {2.0, -1.0};
  const auto seq = extract_patches(s, RadialPartition::build(6, 6, 5));
  EXPECT_EQ(seq.values.at(0, 0), Complex(2.0, -1.0));
  for (std::size_t i = 1; i < seq.values.size(); ++i) EXPECT_EQ(seq.values[i], Complex{});
}

TEST(ExtractPatches, EnergyAndPaddingExact) {
  Rng rng(5);
  const auto s = random_slice(9, 11, rng);
  const auto part = RadialPartition::build(9, 11, 10);
  const auto seq = extract_patches(s, part);
  EXPECT_EQ(seq.values.rows(), 10u);
  EXPECT_EQ(seq.valid.back(), 9u);
  for (std::size_t j = seq.valid.back(); j < 10; ++j) EXPECT_EQ(seq.values.at(9, j), Complex{});
  // Same multiset of values, so summing in rank order gives the same total.
  double direct = 0.0;
  for (auto px : part.order()) direct += std::norm(s.values[px]);
  EXPECT_EQ(kvit::testing::energy(seq.values.data()), direct);
  EXPECT_NEAR(direct, kvit::testing::energy(s.values), 1e-12 * direct);
}

TEST(ExtractPatches, ShapeMismatchThrows) {
  EXPECT_THROW(extract_patches(KSlice(4, 5), RadialPartition::build(4, 4, 4)), ShapeError);
}

TEST(PatchWeights, OnesAreIdentityAndZeroClearsRing) {
  Rng rng(9);
  const auto seq = extract_patches(random_slice(4, 4, rng), RadialPartition::build(4, 4, 4));
  const ComplexTensor ones({4}, std::vector<Complex>(4, 1.0));
  const auto same = apply_patch_weights(seq, ones);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(same.values[i], seq.values[i]);

  ComplexTensor w({4}, {1.0, 0.0, 1.0, 1.0});
  const auto cut = apply_patch_weights(seq, w);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(cut.values.at(1, j), Complex{});
  EXPECT_THROW(apply_patch_weights(seq, ComplexTensor({3}, std::vector<Complex>(3, 1.0))), ShapeError);
}

TEST(PatchWeights, GradientMatchesFiniteDifferences) {
  Rng rng(11);
  const auto seq = extract_patches(random_slice(6, 6, rng), RadialPartition::build(6, 6, 8));
  auto w = kvit::testing::random_tensor({5}, rng);
  auto loss = [&] { return sum(abs2(apply_patch_weights(seq, w).values)).item().real(); };
  {
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(sum(abs2(apply_patch_weights(seq, w).values)));
  }
  EXPECT_LT(kvit::testing::check_leaf(w, loss).max_rel_error, 1e-4);
}

TEST(EmbedPatches, MatchesLoopOracle) {
  Rng rng(13);
  const auto seq = extract_patches(random_slice(5, 5, rng), RadialPartition::build(5, 5, 6));
  const auto we = kvit::testing::random_tensor({6, 3}, rng, false);
  const auto be = kvit::testing::random_tensor({3}, rng, false);
  const auto tok = embed_patches(seq, we, be);
  ASSERT_EQ(tok.shape(), (Shape{5, 3}));
  for (std::size_t k = 0; k < 5; ++k) {
    for (std::size_t d = 0; d < 3; ++d) {
      std::complex<long double> acc(be[d].real(), be[d].imag());
      for (std::size_t j = 0; j < 6; ++j) {
        acc += std::complex<long double>(seq.values.at(k, j).real(), seq.values.at(k, j).imag()) *
               std::complex<long double>(we.at(j, d).real(), we.at(j, d).imag());
      }
      EXPECT_NEAR(tok.at(k, d).real(), static_cast<double>(acc.real()), 1e-12);
      EXPECT_NEAR(tok.at(k, d).imag(), static_cast<double>(acc.imag()), 1e-12);
    }
  }
}

TEST(EmbedPatches, ZeroInputsAndSingleColumn) {
  const auto part = RadialPartition::build(3, 3, 1);
  const auto zero = embed_patches(extract_patches(KSlice(3, 3), part), ComplexTensor::zeros({1, 4}),
                                  ComplexTensor::zeros({4}));
  for (std::size_t i = 0; i < zero.size(); ++i) EXPECT_EQ(zero[i], Complex{});

  Rng rng(3);
  const auto s = random_slice(3, 3, rng);
  const auto seq = extract_patches(s, part);
  const auto tok = embed_patches(seq, ComplexTensor({1, 1}, {1.0}), ComplexTensor::zeros({1}));
  for (std::size_t k = 0; k < 9; ++k) EXPECT_EQ(tok[k], seq.values[k]);
  EXPECT_THROW(embed_patches(seq, ComplexTensor::zeros({2, 4}), ComplexTensor::zeros({4})), ShapeError);
}
