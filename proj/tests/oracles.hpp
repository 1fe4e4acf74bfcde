#pragma once

// Brute-force reference implementations shared by the unit tests and the
// acceptance runner. Each one is written from the definition, not from the
// library code it checks.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <tuple>
#include <vector>

#include "kvit/kslice.hpp"
#include "kvit/posembed.hpp"
#include "kvit/rng.hpp"

namespace kvit::testing {

// Centered DFT straight from its definition, O((HW)^2).
inline KSlice naive_dft2c(const KSlice& x) {
  const std::size_t h = x.height, w = x.width;
  const double r0 = static_cast<double>(h / 2), c0 = static_cast<double>(w / 2);
  KSlice out(h, w);
  for (std::size_t u = 0; u < h; ++u) {
    for (std::size_t v = 0; v < w; ++v) {
      std::complex<long double> acc = 0;
      for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
          const long double ph =
              -2.0L * std::numbers::pi_v<long double> *
              ((static_cast<long double>(u) - r0) * (static_cast<long double>(r) - r0) / h +
               (static_cast<long double>(v) - c0) * (static_cast<long double>(c) - c0) / w);
          acc += std::complex<long double>(x.at(r, c).real(), x.at(r, c).imag()) *
                 std::complex<long double>(std::cos(ph), std::sin(ph));
        }
      }
      acc /= std::sqrt(static_cast<long double>(h * w));
      out.at(u, v) = Complex(static_cast<double>(acc.real()), static_cast<double>(acc.imag()));
    }
  }
  return out;
}

inline double rel_diff(const KSlice& a, const KSlice& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::norm(a.values[i] - b.values[i]);
    den += std::norm(b.values[i]);
  }
  return std::sqrt(num / den);
}

// Rank of each pixel by brute-force counting of smaller (r², row, col) keys.
inline std::vector<std::size_t> oracle_rank(std::size_t h, std::size_t w) {
  const long cr = static_cast<long>(h / 2), cc = static_cast<long>(w / 2);
  auto key = [&](std::size_t p) {
    const long r = static_cast<long>(p / w), c = static_cast<long>(p % w);
    return std::tuple((r - cr) * (r - cr) + (c - cc) * (c - cc), r, c);
  };
  std::vector<std::size_t> rank(h * w, 0);
  for (std::size_t a = 0; a < h * w; ++a) {
    for (std::size_t b = 0; b < h * w; ++b) {
      if (key(b) < key(a)) ++rank[a];
    }
  }
  return rank;
}

// P(s+ > s-) + P(tie)/2 by enumerating every pair.
inline double pairwise_auroc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!y[i] || y[j]) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

// Sweep every distinct score as a threshold "predict positive if s >= t".
inline double threshold_sweep_ap(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  std::vector<double> t(s.begin(), s.end());
  std::sort(t.begin(), t.end(), std::greater<>());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  const double pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
  double ap = 0.0, prev = 0.0;
  for (double th : t) {
    double tp = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= th) (y[i] ? tp : fp) += 1.0;
    }
    ap += (tp / pos - prev) * tp / (tp + fp);
    prev = tp / pos;
  }
  return ap;
}

inline void random_instance(Rng& rng, std::vector<double>& s, std::vector<std::uint8_t>& y, bool ties) {
  const std::size_t n = 2 + rng.below(60);
  s.resize(n);
  y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = ties ? static_cast<double>(rng.below(4)) : rng.uniform();
    y[i] = rng.bernoulli(0.4) ? 1 : 0;
  }
  y[0] = 1;
  y[1] = 0;
}

// re(Σ_j q_j · conj(k_j)) after rotating q to position m and k to position n.
inline double rotated_product(const ComplexTensor& q, const ComplexTensor& k, double m, double n,
                              const RopeConfig& cfg) {
  const std::vector<double> pm{m}, pn{n};
  const auto qr = apply_rope(q, pm, cfg, 0);
  const auto kr = apply_rope(k, pn, cfg, 0);
  double acc = 0.0;
  for (std::size_t j = 0; j < q.cols(); ++j) acc += (qr[j] * std::conj(kr[j])).real();
  return acc;
}

}  // namespace kvit::testing
