#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "kvit/model.hpp"

namespace kvit {

/// KvitConfig as a JSON object with one member per field. Unknown members
/// are rejected on parse; missing members keep their defaults.
std::string config_to_json(const KvitConfig& cfg);
KvitConfig config_from_json(std::string_view text);

/// Model container:
///   "KVIT" | u32 version | u32 json length | JSON {config, input, parameters}
///   | per parameter, in declaration order, f64 re, f64 im (little endian).
/// Real-only parameters are stored as pairs as well, with im = 0.
struct Checkpoint {
  KvitModel model;
  std::size_t height = 0;  // input grid the model was trained on
  std::size_t width = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const KvitModel& model, std::size_t height, std::size_t width);
Checkpoint decode_checkpoint(std::string_view bytes);

/// Throws IoError when the file cannot be written or read, FormatError when
/// its contents are malformed.
void save_checkpoint(const std::string& path, const KvitModel& model, std::size_t height, std::size_t width);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace kvit
