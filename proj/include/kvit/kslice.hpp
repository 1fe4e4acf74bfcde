#pragma once

#include <cstddef>
#include <vector>

#include "kvit/ctensor.hpp"

namespace kvit {

/// One 2D complex k-space slice, row-major, DC at (height/2, width/2).
struct KSlice {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Complex> values;

  KSlice() = default;
  KSlice(std::size_t h, std::size_t w) : height(h), width(w), values(h * w) {}
  KSlice(std::size_t h, std::size_t w, std::vector<Complex> v) : height(h), width(w), values(std::move(v)) {
    if (values.size() != h * w) throw ShapeError("KSlice: value count does not match extents");
  }

  Complex& at(std::size_t r, std::size_t c) { return values[r * width + c]; }
  Complex at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
  std::size_t size() const { return values.size(); }

  bool operator==(const KSlice&) const = default;
};

}  // namespace kvit
