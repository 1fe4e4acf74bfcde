#include "kvit/posembed.hpp"

#include <cmath>
#include <string>

#include "kvit/ops.hpp"

namespace kvit {

PeMode parse_pe_mode(std::string_view s) {
  if (s == "learnable") return PeMode::learnable;
  if (s == "rope") return PeMode::rope;
  if (s == "none") return PeMode::none;
  throw DomainError("unknown positional embedding mode '" + std::string(s) + "'");
}

std::string_view to_string(PeMode m) {
  switch (m) {
    case PeMode::learnable: return "learnable";
    case PeMode::rope: return "rope";
    case PeMode::none: return "none";
  }
  return "none";
}

ComplexTensor add_learnable_pe(const ComplexTensor& tokens, const LearnablePE& pe) {
  if (tokens.shape() != pe.table.shape()) throw ShapeError("add_learnable_pe: shape mismatch");
  return add(tokens, pe.table);
}

std::vector<double> rope_frequencies(std::size_t head_dim, double base) {
  std::vector<double> w(head_dim);
  for (std::size_t j = 0; j < head_dim; ++j) {
    w[j] = std::pow(base, -2.0 * static_cast<double>(j) / static_cast<double>(head_dim));
  }
  return w;
}

ComplexTensor apply_rope(const ComplexTensor& qk, std::span<const double> positions,
                         const RopeConfig& cfg, std::size_t head) {
  if (qk.rank() != 2 || qk.cols() != cfg.head_dim) {
    throw ShapeError("apply_rope: expected a T×head_dim tensor");
  }
  const auto freqs = rope_frequencies(cfg.head_dim, cfg.base);
  return rotate_phase(qk, positions, freqs, cfg.log_scale, head);
}

}  // namespace kvit
