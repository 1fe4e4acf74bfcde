#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "kvit/ctensor.hpp"
#include "kvit/kslice.hpp"

namespace kvit {

/// Assignment of every pixel of an H×W grid to one of N radial rings of P
/// pixels each. Pixels are ranked by squared integer distance to the DC index
/// (H/2, W/2), ties broken by (row, col), and the ranked list is cut into
/// contiguous runs of P. The last ring may be short.
class RadialPartition {
 public:
  /// Throws DomainError unless H, W >= 1 and 1 <= P <= H*W.
  static RadialPartition build(std::size_t height, std::size_t width, std::size_t ring_pixels);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t ring_pixels() const { return ring_pixels_; }
  std::size_t ring_count() const { return ring_count_; }

  /// Row-major pixel indices in rank order.
  std::span<const std::uint32_t> order() const { return order_; }
  /// Ring index of each row-major pixel.
  std::span<const std::uint32_t> ring_of() const { return ring_of_; }
  /// Number of real (non-padding) pixels in ring k.
  std::size_t ring_size(std::size_t k) const;
  std::int64_t squared_radius(std::size_t pixel) const;

 private:
  std::size_t height_ = 0, width_ = 0, ring_pixels_ = 0, ring_count_ = 0;
  std::vector<std::uint32_t> order_;
  std::vector<std::uint32_t> ring_of_;
};

/// N×P ring values (last ring zero padded) plus per-ring valid counts.
struct PatchSequence {
  ComplexTensor values;
  std::vector<std::size_t> valid;

  std::size_t ring_count() const { return valid.size(); }
};

PatchSequence extract_patches(const KSlice& slice, const RadialPartition& partition);

/// Ring k scaled by weights[k] (differentiable in both arguments).
PatchSequence apply_patch_weights(const PatchSequence& patches, const ComplexTensor& weights);

/// tokens[k] = patches[k] · projection + bias, one projection shared by all rings.
ComplexTensor embed_patches(const PatchSequence& patches, const ComplexTensor& projection,
                            const ComplexTensor& bias);

}  // namespace kvit
