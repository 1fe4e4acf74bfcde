#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "kvit/ctensor.hpp"

namespace kvit {

enum class PeMode { learnable, rope, none };

PeMode parse_pe_mode(std::string_view s);
std::string_view to_string(PeMode m);

/// One learned complex vector per ring token.
struct LearnablePE {
  ComplexTensor table;  // N×D
};

ComplexTensor add_learnable_pe(const ComplexTensor& tokens, const LearnablePE& pe);

/// Complex rotary embedding: component j of the token at position m is
/// rotated by exp(i m s w_j), w_j = base^(-2j/d_h), with a per-head
/// frequency scale s = exp(log_scale[head]) > 0.
struct RopeConfig {
  double base = 10000.0;
  std::size_t head_dim = 0;
  ComplexTensor log_scale;  // real [heads]; undefined means s = 1 for every head
};

std::vector<double> rope_frequencies(std::size_t head_dim, double base);

ComplexTensor apply_rope(const ComplexTensor& qk, std::span<const double> positions,
                         const RopeConfig& cfg, std::size_t head);

}  // namespace kvit
