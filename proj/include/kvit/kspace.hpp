#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "kvit/kernels.hpp"
#include "kvit/kslice.hpp"

namespace kvit {

class Rng;

/// Centered orthonormal 2D DFT: fftshift(fft2(ifftshift(x))) / sqrt(H·W).
/// A KSlice doubles as the image-space grid; DC lands at (H/2, W/2).
KSlice fft2c(const KSlice& image, kernels::Exec exec = kernels::Exec::automatic);
KSlice ifft2c(const KSlice& k, kernels::Exec exec = kernels::Exec::automatic);

/// Cartesian column mask. acceleration 0 keeps every column.
struct MaskSpec {
  unsigned acceleration = 0;
  double center_fraction = 1.0;
  std::uint64_t seed = 0;

  /// Center fraction paired with `acceleration` in the undersampling table
  /// (0, 2, 4, 6, 8, 10, 12, 16, 24). Throws DomainError for other rates.
  static MaskSpec for_rate(unsigned acceleration, std::uint64_t seed = 0);
};

/// Rates listed in the undersampling table, ascending.
std::span<const unsigned> table_rates();
double table_center_fraction(unsigned acceleration);

/// ceil(cf·W) contiguous center columns plus seeded uniformly random other
/// columns, round(W/R) in total (never fewer than the center block).
/// Throws DomainError for R = 1, cf outside (0, 1], or a center block wider than W.
std::vector<std::uint8_t> make_mask(const MaskSpec& spec, std::size_t width);
std::size_t center_columns(double center_fraction, std::size_t width);

/// Zeroes every column whose mask entry is 0. Throws ShapeError on a width mismatch.
KSlice apply_mask(const KSlice& k, std::span<const std::uint8_t> mask);

/// Between 1 and `count` rectangles (none when count = 0), each with extents
/// drawn uniformly from [min_rect, max_rect], placed uniformly inside the grid.
struct CutoutSpec {
  std::size_t count = 2;
  std::size_t min_rect_h = 1, min_rect_w = 1;
  std::size_t max_rect_h = 0, max_rect_w = 0;
  std::uint64_t seed = 0;

  /// Up to `count` rectangles, each at most `fraction` of each dimension.
  static CutoutSpec defaults(std::size_t height, std::size_t width, std::size_t count = 2,
                             double fraction = 0.25, std::uint64_t seed = 0);
};

KSlice kspace_cutout(const KSlice& k, const CutoutSpec& spec);

struct Standardized {
  KSlice slice;
  bool degenerate = false;  // all values equal; slice is zero
};

/// Subtracts the complex mean and divides by sqrt(mean |x - mu|^2).
Standardized standardize_slice(const KSlice& k);

/// Geometric image-space transforms, applied identically to the real and
/// imaginary grids. Rotation and shear resample bilinearly about the grid
/// center with zero fill; hflip is an exact column permutation.
struct AugmentOp {
  enum class Kind { hflip, rotate, shear };
  Kind kind = Kind::hflip;
  double amount = 0.0;  // degrees for rotate, horizontal shear factor for shear
};

struct AugmentSpec {
  double hflip_p = 0.5;
  double rot_deg = 15.0;
  double shear = 0.1;
};

/// Random draw of ops from `spec` (hflip with probability hflip_p, rotation
/// uniform in ±rot_deg, shear uniform in ±shear; zero ranges are skipped).
std::vector<AugmentOp> sample_augmentation(const AugmentSpec& spec, Rng& rng);

/// Applies `ops` to an image-space grid.
KSlice transform_image(const KSlice& image, std::span<const AugmentOp> ops);

/// ifft2c -> transform_image -> fft2c.
KSlice augment_image_domain(const KSlice& k, std::span<const AugmentOp> ops);

}  // namespace kvit
