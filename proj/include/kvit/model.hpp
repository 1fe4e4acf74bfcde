#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kvit/ctensor.hpp"
#include "kvit/kslice.hpp"
#include "kvit/patching.hpp"
#include "kvit/posembed.hpp"

namespace kvit {

enum class PhaseMode { complex, magnitude_only };
enum class HeadKind { linear, mil_mlp };

PhaseMode parse_phase_mode(std::string_view s);
std::string_view to_string(PhaseMode m);
HeadKind parse_head_kind(std::string_view s);
std::string_view to_string(HeadKind h);

struct KvitConfig {
  std::size_t layers = 6;
  std::size_t heads = 16;
  std::size_t dim = 256;
  std::size_t mlp_dim = 768;
  double dropout = 0.1;
  std::size_t rings = 16;
  std::size_t ring_pixels = 3800;
  std::size_t classes = 2;
  PeMode pe_mode = PeMode::rope;
  double rope_base = 10000.0;
  bool rope_scale_learnable = true;
  bool patch_weights = true;
  PhaseMode phase_mode = PhaseMode::complex;
  HeadKind head = HeadKind::linear;
  // MIL head: gated attention width, MLP hidden width and its dropout.
  std::size_t mil_attn_dim = 64;
  std::size_t mil_hidden = 128;
  double mil_dropout = 0.2;
  double norm_eps = 1e-5;

  /// Throws ConfigError on inconsistent values.
  void validate() const;

  std::size_t head_dim() const { return dim / heads; }

  /// 6 layers, 16 heads, D=256, MLP 768, 16 rings of 3800 pixels, RoPE, linear head.
  static KvitConfig prostate();
  /// 2 layers, 4 heads, D=48, MLP 92, learnable PE, MIL head.
  static KvitConfig mil();
  /// L=1, h=2, D=8, N=4, P=4 (4×4 inputs); used for gradient checks.
  static KvitConfig tiny();

  bool operator==(const KvitConfig&) const = default;
};

struct NamedParameter {
  std::string name;
  ComplexTensor tensor;
};

struct ParameterCount {
  std::size_t complex_count = 0;  // complex scalars, each counted once
  std::size_t real_only = 0;      // real-valued parameters
  std::size_t real_count = 0;     // 2 * complex_count + real_only
};

ParameterCount count_parameters(std::span<const NamedParameter> params);

/// Head-averaged attention of the class token (row 0) in every layer.
struct AttentionTrace {
  std::vector<std::vector<double>> cls_attention;  // [layer][token], token 0 = class token
};

struct ForwardOptions {
  bool train = false;  // enables dropout
  std::uint64_t dropout_seed = 0;
  AttentionTrace* trace = nullptr;
};

struct MilOutput {
  ComplexTensor logits;            // real [C]
  std::vector<double> importance;  // one weight per slice, sums to 1
};

/// Complex-valued vision transformer over radial k-space ring tokens.
///
/// Pipeline: ring patches -> optional per-ring complex weights -> shared
/// complex projection -> (+ learnable PE) -> [class token; tokens] ->
/// L pre-norm blocks (complex MHSA, complex FFN) -> final norm ->
/// complex linear head on the class token -> (re + im) / 2.
///
/// Parameters are read-only during forward; concurrent forwards on separate
/// tapes are safe.
class KvitModel {
 public:
  explicit KvitModel(const KvitConfig& cfg, std::uint64_t seed = 0);
  KvitModel(KvitModel&&) noexcept = default;
  KvitModel& operator=(KvitModel&&) noexcept = default;

  const KvitConfig& config() const { return cfg_; }
  std::span<NamedParameter> parameters() { return params_; }
  std::span<const NamedParameter> parameters() const { return params_; }
  ParameterCount count_parameters() const { return kvit::count_parameters(params_); }
  void zero_grad();

  /// Final-norm class token feature, complex [1×D].
  ComplexTensor encode(const KSlice& slice, const ForwardOptions& opts = {}) const;
  /// Real logits [C]. Requires head == linear.
  ComplexTensor forward(const KSlice& slice, const ForwardOptions& opts = {}) const;
  /// Real logits [C] for a bag plus slice importance. Requires head == mil_mlp.
  MilOutput mil_forward(std::span<const KSlice> bag, const ForwardOptions& opts = {}) const;

  /// Partition matching an input grid; throws ShapeError if its ring count
  /// differs from the configured one.
  const RadialPartition& partition_for(std::size_t height, std::size_t width) const;

 private:
  struct Block {
    ComplexTensor norm1_gamma, norm1_beta;
    ComplexTensor wq, wk, wv, wo;
    ComplexTensor rope_log_scale;
    ComplexTensor norm2_gamma, norm2_beta;
    ComplexTensor w1, b1, w2, b2;
  };

  ComplexTensor& add_param(std::string name, ComplexTensor t);
  ComplexTensor attention(const ComplexTensor& x, const Block& b, std::span<const double> positions,
                          AttentionTrace* trace) const;
  ComplexTensor feed_forward(const ComplexTensor& x, const Block& b) const;
  ComplexTensor norm_affine(const ComplexTensor& x, const ComplexTensor& gamma,
                            const ComplexTensor& beta) const;

  KvitConfig cfg_;
  std::vector<NamedParameter> params_;

  ComplexTensor patch_weights_, embed_w_, embed_b_, pe_table_, cls_token_;
  std::vector<Block> blocks_;
  ComplexTensor final_gamma_, final_beta_;
  ComplexTensor head_w_, head_b_;
  ComplexTensor mil_v_, mil_u_, mil_w_, mil_w1_, mil_b1_, mil_w2_, mil_b2_;

  struct PartitionCache {
    std::mutex mutex;
    std::map<std::pair<std::size_t, std::size_t>, std::shared_ptr<const RadialPartition>> entries;
  };
  std::unique_ptr<PartitionCache> partitions_ = std::make_unique<PartitionCache>();
};

}  // namespace kvit
