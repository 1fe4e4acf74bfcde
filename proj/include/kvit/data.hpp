#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kvit/kslice.hpp"

namespace kvit {

/// One synthetic slice. The image is a sum of Gaussian blobs plus a real
/// texture band-limited to [band_lo, band_hi] cycles per field of view,
/// multiplied by exp(i·phi(x)) with phi = phase_amp·(0.75 + 0.25·cos(low-frequency
/// wave)), then transformed with fft2c and given complex Gaussian noise.
struct PhantomSpec {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t label = 0;
  double band_lo = 2.0;
  double band_hi = 6.0;
  double phase_amp = 0.0;  // [0, pi]
  std::size_t blobs_min = 2;
  std::size_t blobs_max = 5;
  double blob_sigma_min = 0.05;  // fraction of the field of view
  double blob_sigma_max = 0.15;
  double texture_amp = 0.5;
  std::size_t texture_waves = 8;
  double noise = 0.01;  // per-component std of the k-space noise
  std::uint64_t seed = 0;

  /// Throws DomainError for an invalid band, amplitude or blob range.
  void validate() const;
};

struct Record {
  KSlice slice;
  std::size_t label = 0;
  std::uint64_t id = 0;
  std::uint64_t bag_id = 0;
};

struct Bag {
  std::uint64_t id = 0;
  std::size_t label = 0;               // highest member label (any-positive for two classes)
  std::vector<std::size_t> members;    // indices into Dataset::records
};

struct Dataset {
  std::size_t classes = 2;
  std::vector<Record> records;

  /// Records grouped by bag_id, in order of first appearance.
  std::vector<Bag> bags() const;
};

/// Record generation. Values are rounded to f32 so the in-memory record is
/// exactly what the container stores.
Record gen_phantom(const PhantomSpec& spec);

/// Class c differs from class 0 in phase amplitude (phase_amp·c/(C−1)) and
/// in texture band (shifted by band_shift·c). Everything else comes from
/// `base` with per-record seeds derived from `seed`.
struct DatasetSpec {
  PhantomSpec base;
  std::size_t classes = 2;
  std::size_t n_per_class = 10;
  double phase_amp = 1.5707963267948966;
  double band_shift = 0.0;
  /// 0: slice-level records, each its own bag. Otherwise n_per_class bags
  /// per bag label, each with bag_size slices; a positive bag holds at least
  /// one positive slice, a negative bag none.
  std::size_t bag_size = 0;
  std::uint64_t seed = 0;
};

Dataset gen_dataset(const DatasetSpec& spec);

/// Container:
///   "KSDS" | u32 version | u32 manifest length | JSON manifest
///   {"classes": C, "records": [{"id","label","bag_id","offset","height","width"}]}
///   | payload of f32 (re, im) pairs, row-major, offsets in bytes from payload start.
inline constexpr std::uint32_t kDatasetVersion = 1;

std::string encode_dataset(const Dataset& ds);
Dataset decode_dataset(std::string_view bytes);
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

}  // namespace kvit
