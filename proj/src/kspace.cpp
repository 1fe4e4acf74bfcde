#include "kvit/kspace.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "kvit/error.hpp"
#include "kvit/rng.hpp"

namespace kvit {

namespace {

// ifftshift moves the centered index h/2 to 0; fftshift is its inverse.
KSlice roll(const KSlice& in, bool to_corner) {
  const std::size_t h = in.height, w = in.width;
  const std::size_t sr = to_corner ? h / 2 : h - h / 2;
  const std::size_t sc = to_corner ? w / 2 : w - w / 2;
  KSlice out(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    const std::size_t src_r = (r + sr) % h;
    for (std::size_t c = 0; c < w; ++c) out.at(r, c) = in.at(src_r, (c + sc) % w);
  }
  return out;
}

KSlice centered_transform(const KSlice& x, bool inverse, kernels::Exec exec) {
  if (x.size() == 0) return x;
  KSlice g = roll(x, true);
  kernels::fft2(g.values, g.height, g.width, inverse, exec);
  const double norm = 1.0 / std::sqrt(static_cast<double>(g.size()));
  for (auto& z : g.values) z *= norm;
  return roll(g, false);
}

struct RateRow {
  unsigned rate;
  double center_fraction;
};

// Printed as-is, including the 0.04 entry for R = 2.
constexpr std::array<RateRow, 9> kRateTable{{{0, 1.0},
                                             {2, 0.04},
                                             {4, 0.08},
                                             {6, 0.05},
                                             {8, 0.04},
                                             {10, 0.03},
                                             {12, 0.02},
                                             {16, 0.015},
                                             {24, 0.008}}};

constexpr std::array<unsigned, 9> kRates{0, 2, 4, 6, 8, 10, 12, 16, 24};

Complex sample_bilinear(const KSlice& img, double y, double x) {
  const double fy = std::floor(y), fx = std::floor(x);
  const double ty = y - fy, tx = x - fx;
  const auto r0 = static_cast<long>(fy), c0 = static_cast<long>(fx);
  const auto h = static_cast<long>(img.height), w = static_cast<long>(img.width);
  auto px = [&](long r, long c) -> Complex {
    if (r < 0 || c < 0 || r >= h || c >= w) return {};
    return img.values[static_cast<std::size_t>(r * w + c)];
  };
  return (1 - ty) * ((1 - tx) * px(r0, c0) + tx * px(r0, c0 + 1)) +
         ty * ((1 - tx) * px(r0 + 1, c0) + tx * px(r0 + 1, c0 + 1));
}

// Resamples with an inverse map given as a 2x2 matrix about the grid center.
KSlice resample(const KSlice& img, double a, double b, double c, double d) {
  KSlice out(img.height, img.width);
  const double cy = 0.5 * static_cast<double>(img.height - 1);
  const double cx = 0.5 * static_cast<double>(img.width - 1);
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t col = 0; col < img.width; ++col) {
      const double dy = static_cast<double>(r) - cy, dx = static_cast<double>(col) - cx;
      out.at(r, col) = sample_bilinear(img, cy + a * dy + b * dx, cx + c * dy + d * dx);
    }
  }
  return out;
}

}  // namespace

KSlice fft2c(const KSlice& image, kernels::Exec exec) { return centered_transform(image, false, exec); }
KSlice ifft2c(const KSlice& k, kernels::Exec exec) { return centered_transform(k, true, exec); }

std::span<const unsigned> table_rates() { return kRates; }

double table_center_fraction(unsigned acceleration) {
  for (const auto& row : kRateTable) {
    if (row.rate == acceleration) return row.center_fraction;
  }
  throw DomainError("acceleration " + std::to_string(acceleration) + " is not in the undersampling table");
}

MaskSpec MaskSpec::for_rate(unsigned acceleration, std::uint64_t seed) {
  return MaskSpec{acceleration, table_center_fraction(acceleration), seed};
}

std::size_t center_columns(double center_fraction, std::size_t width) {
  // The tolerance keeps products such as 0.08·100 from rounding up to 9.
  return static_cast<std::size_t>(std::ceil(center_fraction * static_cast<double>(width) - 1e-9));
}

std::vector<std::uint8_t> make_mask(const MaskSpec& spec, std::size_t width) {
  if (spec.acceleration == 1) throw DomainError("make_mask: acceleration must be 0 or >= 2");
  if (!(spec.center_fraction > 0.0 && spec.center_fraction <= 1.0)) {
    throw DomainError("make_mask: center fraction must lie in (0, 1]");
  }
  std::vector<std::uint8_t> mask(width, 0);
  if (spec.acceleration == 0) {
    std::fill(mask.begin(), mask.end(), 1);
    return mask;
  }
  const std::size_t center = center_columns(spec.center_fraction, width);
  if (center > width) throw DomainError("make_mask: center block wider than the grid");
  const std::size_t start = width / 2 - center / 2;
  for (std::size_t c = start; c < start + center; ++c) mask[c] = 1;

  const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(width) / spec.acceleration));
  const std::size_t total = std::max(target, center);
  std::vector<std::size_t> pool;
  for (std::size_t c = 0; c < width; ++c) {
    if (!mask[c]) pool.push_back(c);
  }
  Rng rng(derive_seed(spec.seed, 0x6d61736b));
  // Partial Fisher-Yates: the first (total - center) pool entries are the draw.
  for (std::size_t i = 0; i < total - center; ++i) {
    const std::size_t j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
    mask[pool[i]] = 1;
  }
  return mask;
}

KSlice apply_mask(const KSlice& k, std::span<const std::uint8_t> mask) {
  if (mask.size() != k.width) throw ShapeError("apply_mask: mask length does not match slice width");
  KSlice out = k;
  for (std::size_t r = 0; r < k.height; ++r) {
    for (std::size_t c = 0; c < k.width; ++c) {
      if (!mask[c]) out.at(r, c) = 0.0;
    }
  }
  return out;
}

CutoutSpec CutoutSpec::defaults(std::size_t height, std::size_t width, std::size_t count, double fraction,
                                std::uint64_t seed) {
  CutoutSpec s;
  s.count = count;
  s.max_rect_h = std::max<std::size_t>(1, static_cast<std::size_t>(fraction * static_cast<double>(height)));
  s.max_rect_w = std::max<std::size_t>(1, static_cast<std::size_t>(fraction * static_cast<double>(width)));
  s.seed = seed;
  return s;
}

KSlice kspace_cutout(const KSlice& k, const CutoutSpec& spec) {
  KSlice out = k;
  if (spec.count == 0 || k.size() == 0) return out;
  const std::size_t max_h = std::min(spec.max_rect_h, k.height), max_w = std::min(spec.max_rect_w, k.width);
  const std::size_t min_h = std::clamp<std::size_t>(spec.min_rect_h, 1, std::max<std::size_t>(max_h, 1));
  const std::size_t min_w = std::clamp<std::size_t>(spec.min_rect_w, 1, std::max<std::size_t>(max_w, 1));
  if (max_h == 0 || max_w == 0) return out;
  Rng rng(derive_seed(spec.seed, 0x637574));
  const std::size_t n = 1 + rng.below(spec.count);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t rh = min_h + rng.below(max_h - min_h + 1);
    const std::size_t rw = min_w + rng.below(max_w - min_w + 1);
    const std::size_t top = rng.below(k.height - rh + 1);
    const std::size_t left = rng.below(k.width - rw + 1);
    for (std::size_t r = top; r < top + rh; ++r) {
      for (std::size_t c = left; c < left + rw; ++c) out.at(r, c) = 0.0;
    }
  }
  return out;
}

Standardized standardize_slice(const KSlice& k) {
  Standardized out{KSlice(k.height, k.width), false};
  if (k.size() == 0) {
    out.degenerate = true;
    return out;
  }
  const double n = static_cast<double>(k.size());
  Complex mu{};
  for (const auto& z : k.values) mu += z;
  mu /= n;
  double var = 0.0;
  for (const auto& z : k.values) var += std::norm(z - mu);
  var /= n;
  const double sigma = std::sqrt(var);
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t i = 0; i < k.size(); ++i) out.slice.values[i] = (k.values[i] - mu) / sigma;
  return out;
}

std::vector<AugmentOp> sample_augmentation(const AugmentSpec& spec, Rng& rng) {
  std::vector<AugmentOp> ops;
  // Fixed draw count per call keeps downstream streams aligned.
  const bool flip = rng.bernoulli(spec.hflip_p);
  const double angle = rng.uniform(-spec.rot_deg, spec.rot_deg);
  const double shear = rng.uniform(-spec.shear, spec.shear);
  if (flip) ops.push_back({AugmentOp::Kind::hflip, 0.0});
  if (spec.rot_deg > 0.0) ops.push_back({AugmentOp::Kind::rotate, angle});
  if (spec.shear > 0.0) ops.push_back({AugmentOp::Kind::shear, shear});
  return ops;
}

KSlice transform_image(const KSlice& image, std::span<const AugmentOp> ops) {
  KSlice img = image;
  for (const auto& op : ops) {
    switch (op.kind) {
      case AugmentOp::Kind::hflip: {
        for (std::size_t r = 0; r < img.height; ++r) {
          auto row = std::span(img.values).subspan(r * img.width, img.width);
          std::reverse(row.begin(), row.end());
        }
        break;
      }
      case AugmentOp::Kind::rotate: {
        const double t = op.amount * std::numbers::pi / 180.0;
        // Output (dy, dx) samples the input at R(-t)(dy, dx).
        img = resample(img, std::cos(t), -std::sin(t), std::sin(t), std::cos(t));
        break;
      }
      case AugmentOp::Kind::shear:
        img = resample(img, 1.0, 0.0, -op.amount, 1.0);
        break;
    }
  }
  return img;
}

KSlice augment_image_domain(const KSlice& k, std::span<const AugmentOp> ops) {
  return fft2c(transform_image(ifft2c(k), ops));
}

}  // namespace kvit
