#include "kvit/patching.hpp"

#include <algorithm>
#include <numeric>

#include "kvit/ops.hpp"

namespace kvit {

RadialPartition RadialPartition::build(std::size_t height, std::size_t width, std::size_t ring_pixels) {
  if (height == 0 || width == 0) throw DomainError("RadialPartition: empty grid");
  const std::size_t total = height * width;
  if (ring_pixels == 0) throw DomainError("RadialPartition: ring capacity P must be >= 1");
  if (ring_pixels > total) throw DomainError("RadialPartition: ring capacity exceeds pixel count");
  if (total > UINT32_MAX) throw DomainError("RadialPartition: grid too large");

  RadialPartition p;
  p.height_ = height;
  p.width_ = width;
  p.ring_pixels_ = ring_pixels;
  p.ring_count_ = (total + ring_pixels - 1) / ring_pixels;

  std::vector<std::int64_t> r2(total);
  for (std::size_t i = 0; i < total; ++i) r2[i] = p.squared_radius(i);
  p.order_.resize(total);
  std::iota(p.order_.begin(), p.order_.end(), 0u);
  // Row-major start order + stable sort on r^2 == lexicographic (r^2, row, col).
  std::stable_sort(p.order_.begin(), p.order_.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return r2[a] < r2[b]; });

  p.ring_of_.resize(total);
  for (std::size_t rank = 0; rank < total; ++rank) {
    p.ring_of_[p.order_[rank]] = static_cast<std::uint32_t>(rank / ring_pixels);
  }
  return p;
}

std::size_t RadialPartition::ring_size(std::size_t k) const {
  if (k >= ring_count_) throw ShapeError("RadialPartition: ring index out of range");
  const std::size_t total = height_ * width_;
  return std::min(ring_pixels_, total - k * ring_pixels_);
}

std::int64_t RadialPartition::squared_radius(std::size_t pixel) const {
  const auto row = static_cast<std::int64_t>(pixel / width_);
  const auto col = static_cast<std::int64_t>(pixel % width_);
  const auto dy = row - static_cast<std::int64_t>(height_ / 2);
  const auto dx = col - static_cast<std::int64_t>(width_ / 2);
  return dy * dy + dx * dx;
}

PatchSequence extract_patches(const KSlice& slice, const RadialPartition& partition) {
  if (slice.height != partition.height() || slice.width != partition.width()) {
    throw ShapeError("extract_patches: slice shape does not match the partition");
  }
  const std::size_t n = partition.ring_count(), cap = partition.ring_pixels();
  std::vector<Complex> values(n * cap);
  const auto order = partition.order();
  for (std::size_t rank = 0; rank < order.size(); ++rank) values[rank] = slice.values[order[rank]];
  PatchSequence out;
  out.values = ComplexTensor({n, cap}, std::move(values));
  out.valid.resize(n);
  for (std::size_t k = 0; k < n; ++k) out.valid[k] = partition.ring_size(k);
  return out;
}

PatchSequence apply_patch_weights(const PatchSequence& patches, const ComplexTensor& weights) {
  if (weights.size() != patches.ring_count()) {
    throw ShapeError("apply_patch_weights: one weight per ring required");
  }
  return {mul_col_vector(patches.values, weights), patches.valid};
}

ComplexTensor embed_patches(const PatchSequence& patches, const ComplexTensor& projection,
                            const ComplexTensor& bias) {
  if (projection.rank() != 2 || projection.rows() != patches.values.cols()) {
    throw ShapeError("embed_patches: projection must be P×D");
  }
  if (bias.size() != projection.cols()) throw ShapeError("embed_patches: bias must have length D");
  return add_row_vector(matmul(patches.values, projection), bias);
}

}  // namespace kvit
