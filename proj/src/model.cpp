#include "kvit/model.hpp"

#include <cmath>
#include <numeric>

#include "kvit/ops.hpp"
#include "kvit/rng.hpp"

namespace kvit {

PhaseMode parse_phase_mode(std::string_view s) {
  if (s == "complex") return PhaseMode::complex;
  if (s == "magnitude_only") return PhaseMode::magnitude_only;
  throw DomainError("unknown phase mode '" + std::string(s) + "'");
}

std::string_view to_string(PhaseMode m) {
  return m == PhaseMode::complex ? "complex" : "magnitude_only";
}

HeadKind parse_head_kind(std::string_view s) {
  if (s == "linear") return HeadKind::linear;
  if (s == "mil_mlp") return HeadKind::mil_mlp;
  throw DomainError("unknown head kind '" + std::string(s) + "'");
}

std::string_view to_string(HeadKind h) { return h == HeadKind::linear ? "linear" : "mil_mlp"; }

void KvitConfig::validate() const {
  if (layers == 0) throw ConfigError("model.layers must be >= 1");
  if (heads == 0 || dim == 0) throw ConfigError("model.heads and model.dim must be >= 1");
  if (dim % heads != 0) throw ConfigError("model.dim must be divisible by model.heads");
  if (mlp_dim == 0) throw ConfigError("model.mlp_dim must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.dropout must lie in [0, 1)");
  if (rings == 0 || ring_pixels == 0) throw ConfigError("model.rings and model.ring_pixels must be >= 1");
  if (classes < 2) throw ConfigError("model.classes must be >= 2");
  if (!(rope_base > 1.0)) throw ConfigError("pe.rope_base must exceed 1");
  if (head == HeadKind::mil_mlp) {
    if (mil_attn_dim == 0 || mil_hidden == 0) throw ConfigError("mil.* widths must be >= 1");
    if (!(mil_dropout >= 0.0 && mil_dropout < 1.0)) throw ConfigError("mil.dropout must lie in [0, 1)");
  }
  if (!(norm_eps > 0.0)) throw ConfigError("model.norm_eps must be positive");
}

KvitConfig KvitConfig::prostate() { return KvitConfig{}; }

KvitConfig KvitConfig::mil() {
  KvitConfig c;
  c.layers = 2;
  c.heads = 4;
  c.dim = 48;
  c.mlp_dim = 92;
  c.pe_mode = PeMode::learnable;
  c.head = HeadKind::mil_mlp;
  return c;
}

KvitConfig KvitConfig::tiny() {
  KvitConfig c;
  c.layers = 1;
  c.heads = 2;
  c.dim = 8;
  c.mlp_dim = 16;
  c.rings = 4;
  c.ring_pixels = 4;
  return c;
}

ParameterCount count_parameters(std::span<const NamedParameter> params) {
  ParameterCount c;
  for (const auto& p : params) {
    if (p.tensor.is_real()) {
      c.real_only += p.tensor.size();
    } else {
      c.complex_count += p.tensor.size();
    }
  }
  c.real_count = 2 * c.complex_count + c.real_only;
  return c;
}

namespace {

// E|w|^2 = 1 / fan_in, split evenly between re and im.
ComplexTensor complex_init(Shape shape, std::size_t fan_in, Rng& rng) {
  const double sd = std::sqrt(0.5 / static_cast<double>(fan_in));
  std::vector<Complex> v(shape_size(shape));
  for (auto& z : v) z = Complex(rng.normal(0.0, sd), rng.normal(0.0, sd));
  return ComplexTensor(std::move(shape), std::move(v), true);
}

ComplexTensor complex_normal(Shape shape, double sd, Rng& rng) {
  std::vector<Complex> v(shape_size(shape));
  for (auto& z : v) z = Complex(rng.normal(0.0, sd), rng.normal(0.0, sd));
  return ComplexTensor(std::move(shape), std::move(v), true);
}

ComplexTensor complex_fill(Shape shape, Complex value) {
  std::vector<Complex> v(shape_size(shape), value);
  return ComplexTensor(std::move(shape), std::move(v), true);
}

ComplexTensor real_init(Shape shape, std::size_t fan_in, Rng& rng) {
  const double sd = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = rng.normal(0.0, sd);
  return ComplexTensor::real(std::move(shape), std::move(v), true);
}

ComplexTensor real_zeros(Shape shape) {
  return ComplexTensor::real(shape, std::vector<double>(shape_size(shape)), true);
}

}  // namespace

ComplexTensor& KvitModel::add_param(std::string name, ComplexTensor t) {
  params_.push_back({std::move(name), std::move(t)});
  return params_.back().tensor;
}

KvitModel::KvitModel(const KvitConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(seed, 0x6b766974));
  const std::size_t n = cfg_.rings, p = cfg_.ring_pixels, d = cfg_.dim, f = cfg_.mlp_dim;
  params_.reserve(32 + 16 * cfg_.layers);

  if (cfg_.patch_weights) patch_weights_ = add_param("patch_weights", complex_fill({n}, 1.0));
  embed_w_ = add_param("embed.weight", complex_init({p, d}, p, rng));
  embed_b_ = add_param("embed.bias", complex_fill({d}, 0.0));
  if (cfg_.pe_mode == PeMode::learnable) pe_table_ = add_param("pe.table", complex_normal({n, d}, 0.02, rng));
  cls_token_ = add_param("cls_token", complex_normal({d}, 0.02, rng));

  blocks_.resize(cfg_.layers);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    Block& b = blocks_[l];
    const std::string pre = "layers." + std::to_string(l) + ".";
    b.norm1_gamma = add_param(pre + "norm1.gamma", complex_fill({d}, 1.0));
    b.norm1_beta = add_param(pre + "norm1.beta", complex_fill({d}, 0.0));
    b.wq = add_param(pre + "attn.wq", complex_init({d, d}, d, rng));
    b.wk = add_param(pre + "attn.wk", complex_init({d, d}, d, rng));
    b.wv = add_param(pre + "attn.wv", complex_init({d, d}, d, rng));
    b.wo = add_param(pre + "attn.wo", complex_init({d, d}, d, rng));
    if (cfg_.pe_mode == PeMode::rope && cfg_.rope_scale_learnable) {
      b.rope_log_scale = add_param(pre + "attn.rope_log_scale", real_zeros({cfg_.heads}));
    }
    b.norm2_gamma = add_param(pre + "norm2.gamma", complex_fill({d}, 1.0));
    b.norm2_beta = add_param(pre + "norm2.beta", complex_fill({d}, 0.0));
    b.w1 = add_param(pre + "ffn.w1", complex_init({d, f}, d, rng));
    b.b1 = add_param(pre + "ffn.b1", complex_fill({f}, 0.0));
    b.w2 = add_param(pre + "ffn.w2", complex_init({f, d}, f, rng));
    b.b2 = add_param(pre + "ffn.b2", complex_fill({d}, 0.0));
  }
  final_gamma_ = add_param("final_norm.gamma", complex_fill({d}, 1.0));
  final_beta_ = add_param("final_norm.beta", complex_fill({d}, 0.0));

  const std::size_t c = cfg_.classes;
  if (cfg_.head == HeadKind::linear) {
    head_w_ = add_param("head.weight", complex_init({d, c}, d, rng));
    head_b_ = add_param("head.bias", complex_fill({c}, 0.0));
  } else {
    const std::size_t a = cfg_.mil_attn_dim, h = cfg_.mil_hidden;
    mil_v_ = add_param("mil.attn_v", real_init({d, a}, d, rng));
    mil_u_ = add_param("mil.attn_u", real_init({d, a}, d, rng));
    mil_w_ = add_param("mil.attn_w", real_init({a, 1}, a, rng));
    mil_w1_ = add_param("mil.mlp.w1", real_init({d, h}, d, rng));
    mil_b1_ = add_param("mil.mlp.b1", real_zeros({h}));
    mil_w2_ = add_param("mil.mlp.w2", real_init({h, c}, h, rng));
    mil_b2_ = add_param("mil.mlp.b2", real_zeros({c}));
  }
}

void KvitModel::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

const RadialPartition& KvitModel::partition_for(std::size_t height, std::size_t width) const {
  std::lock_guard lock(partitions_->mutex);
  auto& slot = partitions_->entries[{height, width}];
  if (!slot) {
    auto part = std::make_shared<RadialPartition>(RadialPartition::build(height, width, cfg_.ring_pixels));
    if (part->ring_count() != cfg_.rings) {
      partitions_->entries.erase({height, width});
      throw ShapeError("input " + std::to_string(height) + "x" + std::to_string(width) + " with " +
                       std::to_string(cfg_.ring_pixels) + " pixels per ring gives " +
                       std::to_string(part->ring_count()) + " rings, model expects " +
                       std::to_string(cfg_.rings));
    }
    slot = std::move(part);
  }
  return *slot;
}

ComplexTensor KvitModel::norm_affine(const ComplexTensor& x, const ComplexTensor& gamma,
                                     const ComplexTensor& beta) const {
  return add_row_vector(mul_row_vector(layer_norm_rows(x, cfg_.norm_eps), gamma), beta);
}

ComplexTensor KvitModel::attention(const ComplexTensor& x, const Block& b,
                                   std::span<const double> positions, AttentionTrace* trace) const {
  const std::size_t h = cfg_.heads, dh = cfg_.head_dim(), t = x.rows();
  const ComplexTensor q = matmul(x, b.wq);
  const ComplexTensor k = matmul(x, b.wk);
  const ComplexTensor v = matmul(x, b.wv);
  RopeConfig rope{cfg_.rope_base, dh, b.rope_log_scale};
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<ComplexTensor> heads;
  heads.reserve(h);
  std::vector<double> cls_row;
  if (trace) cls_row.assign(t, 0.0);
  for (std::size_t head = 0; head < h; ++head) {
    ComplexTensor qh = slice_cols(q, head * dh, dh);
    ComplexTensor kh = slice_cols(k, head * dh, dh);
    if (cfg_.pe_mode == PeMode::rope) {
      qh = apply_rope(qh, positions, rope, head);
      kh = apply_rope(kh, positions, rope, head);
    }
    // score(i, j) = re(<q_i, k_j>) / sqrt(d_h), Hermitian product, real softmax
    const ComplexTensor scores =
        scale(real_part(matmul(qh, kh, kernels::Op::none, kernels::Op::adjoint)), inv_sqrt);
    const ComplexTensor attn = softmax_rows(scores);
    if (trace) {
      for (std::size_t j = 0; j < t; ++j) cls_row[j] += attn[j].real() / static_cast<double>(h);
    }
    heads.push_back(matmul(attn, slice_cols(v, head * dh, dh)));
  }
  if (trace) trace->cls_attention.push_back(std::move(cls_row));
  return matmul(concat_cols(heads), b.wo);
}

ComplexTensor KvitModel::feed_forward(const ComplexTensor& x, const Block& b) const {
  const ComplexTensor hidden = split_gelu(add_row_vector(matmul(x, b.w1), b.b1));
  return add_row_vector(matmul(hidden, b.w2), b.b2);
}

ComplexTensor KvitModel::encode(const KSlice& slice, const ForwardOptions& opts) const {
  const RadialPartition& part = partition_for(slice.height, slice.width);
  PatchSequence patches;
  if (cfg_.phase_mode == PhaseMode::magnitude_only) {
    KSlice mag(slice.height, slice.width);
    for (std::size_t i = 0; i < slice.size(); ++i) mag.values[i] = Complex(std::abs(slice.values[i]), 0.0);
    patches = extract_patches(mag, part);
  } else {
    patches = extract_patches(slice, part);
  }
  if (cfg_.patch_weights) patches = apply_patch_weights(patches, patch_weights_);

  ComplexTensor tokens = embed_patches(patches, embed_w_, embed_b_);
  if (cfg_.pe_mode == PeMode::learnable) tokens = add_learnable_pe(tokens, LearnablePE{pe_table_});

  const std::size_t d = cfg_.dim;
  const std::vector<ComplexTensor> rows{reshape(cls_token_, {1, d}), tokens};
  ComplexTensor x = concat_rows(rows);

  std::vector<double> positions(x.rows());
  std::iota(positions.begin(), positions.end(), 0.0);

  Rng rng(opts.dropout_seed);
  const bool drop = opts.train && cfg_.dropout > 0.0;
  for (const Block& b : blocks_) {
    ComplexTensor a = attention(norm_affine(x, b.norm1_gamma, b.norm1_beta), b, positions, opts.trace);
    if (drop) a = dropout(a, cfg_.dropout, rng);
    x = add(x, a);
    ComplexTensor f = feed_forward(norm_affine(x, b.norm2_gamma, b.norm2_beta), b);
    if (drop) f = dropout(f, cfg_.dropout, rng);
    x = add(x, f);
  }
  x = norm_affine(x, final_gamma_, final_beta_);
  return slice_rows(x, 0, 1);
}

ComplexTensor KvitModel::forward(const KSlice& slice, const ForwardOptions& opts) const {
  if (cfg_.head != HeadKind::linear) throw ContractError("forward: model has a MIL head; use mil_forward");
  const ComplexTensor cls = encode(slice, opts);
  const ComplexTensor z = add_row_vector(matmul(cls, head_w_), head_b_);
  return reshape(readout_average(z), {cfg_.classes});
}

MilOutput KvitModel::mil_forward(std::span<const KSlice> bag, const ForwardOptions& opts) const {
  if (cfg_.head != HeadKind::mil_mlp) throw ContractError("mil_forward: model has a linear head");
  if (bag.empty()) throw DomainError("mil_forward: empty bag");
  std::vector<ComplexTensor> feats;
  feats.reserve(bag.size());
  for (std::size_t s = 0; s < bag.size(); ++s) {
    ForwardOptions slice_opts = opts;
    slice_opts.dropout_seed = derive_seed(opts.dropout_seed, s);
    feats.push_back(readout_average(encode(bag[s], slice_opts)));
  }
  const ComplexTensor r = concat_rows(feats);  // real [S×D]
  const ComplexTensor gate = mul(split_tanh(matmul(r, mil_v_)), split_sigmoid(matmul(r, mil_u_)));
  const ComplexTensor scores = reshape(matmul(gate, mil_w_), {1, bag.size()});
  const ComplexTensor attn = softmax_rows(scores);
  const ComplexTensor pooled = matmul(attn, r);  // [1×D]
  ComplexTensor hidden = split_relu(add_row_vector(matmul(pooled, mil_w1_), mil_b1_));
  if (opts.train && cfg_.mil_dropout > 0.0) {
    Rng rng(derive_seed(opts.dropout_seed, 0x4d494cULL));
    hidden = dropout(hidden, cfg_.mil_dropout, rng);
  }
  const ComplexTensor logits = add_row_vector(matmul(hidden, mil_w2_), mil_b2_);
  MilOutput out;
  out.logits = reshape(logits, {cfg_.classes});
  out.importance.resize(bag.size());
  for (std::size_t s = 0; s < bag.size(); ++s) out.importance[s] = attn[s].real();
  return out;
}

}  // namespace kvit
