#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "kvit/model.hpp"
#include "kvit/train.hpp"

namespace kvit {

/// Everything a `train` run needs besides the data. Defaults are the
/// prostate preset with lr 1e-4, batch 64, patience 15.
struct RunConfig {
  KvitConfig model = KvitConfig::prostate();
  bool auto_ring_pixels = false;  // ring_pixels = ceil(H·W / rings) once the grid is known
  std::uint64_t model_seed = 0;
  TrainConfig train;
  double val_fraction = 0.2;

  /// Fills ring_pixels when it was given as `auto`, then validates.
  KvitConfig resolve_model(std::size_t height, std::size_t width) const;
};

/// Flat UTF-8 key=value text, `#` starts a comment, blank lines ignored.
/// `preset` (prostate | mil | tiny) may appear anywhere and is applied before
/// every other key. Unknown keys and unparsable values raise ConfigError
/// carrying the 1-based line number.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::string& path);

/// Applies one key; used by the parser and by CLI overrides. line is only
/// used for error messages.
void apply_config_key(RunConfig& cfg, std::string_view key, std::string_view value, int line = 0);

}  // namespace kvit
