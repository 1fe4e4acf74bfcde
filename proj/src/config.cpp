#include "kvit/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

namespace kvit {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Parsed {
  std::string key;
  std::string value;
  int line;
};

class ValueParser {
 public:
  ValueParser(std::string_view key, std::string_view value, int line) : key_(key), value_(value), line_(line) {}

  std::size_t size() const {
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(value_.data(), value_.data() + value_.size(), v);
    if (ec != std::errc() || p != value_.data() + value_.size()) fail("a non-negative integer");
    return v;
  }

  std::uint64_t u64() const { return static_cast<std::uint64_t>(size()); }

  double real() const {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(value_.data(), value_.data() + value_.size(), v);
    if (ec != std::errc() || p != value_.data() + value_.size()) fail("a number");
    return v;
  }

  bool boolean() const {
    if (value_ == "true" || value_ == "1") return true;
    if (value_ == "false" || value_ == "0") return false;
    fail("true or false");
  }

  std::vector<double> reals() const {
    std::vector<double> out;
    std::string_view rest = value_;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const auto item = trim(rest.substr(0, comma));
      out.push_back(ValueParser(key_, item, line_).real());
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    return out;
  }

  template <class F>
  auto parse_enum(F f) const {
    try {
      return f(value_);
    } catch (const DomainError& e) {
      throw ConfigError(std::string(key_) + ": " + e.what(), line_);
    }
  }

  std::string_view text() const { return value_; }

  [[noreturn]] void fail(const char* expected) const {
    throw ConfigError(std::string(key_) + " expects " + expected + ", got '" + std::string(value_) + "'", line_);
  }

 private:
  std::string_view key_, value_;
  int line_;
};

}  // namespace

KvitConfig RunConfig::resolve_model(std::size_t height, std::size_t width) const {
  KvitConfig m = model;
  if (auto_ring_pixels) {
    if (m.rings == 0) throw ConfigError("model.rings must be >= 1");
    m.ring_pixels = (height * width + m.rings - 1) / m.rings;
  }
  m.validate();
  const std::size_t n = (height * width + m.ring_pixels - 1) / m.ring_pixels;
  if (m.ring_pixels > height * width || n != m.rings) {
    throw ConfigError(std::to_string(height) + "x" + std::to_string(width) + " grid with " +
                      std::to_string(m.ring_pixels) + " pixels per ring gives " + std::to_string(n) +
                      " rings, config asks for " + std::to_string(m.rings));
  }
  return m;
}

void apply_config_key(RunConfig& cfg, std::string_view key, std::string_view value, int line) {
  const ValueParser v(key, value, line);
  KvitConfig& m = cfg.model;
  TrainConfig& t = cfg.train;
  if (key == "preset") {
    const bool keep_auto = cfg.auto_ring_pixels;
    if (value == "prostate") m = KvitConfig::prostate();
    else if (value == "mil") {
      m = KvitConfig::mil();
      t.batch_size = 1;  // one bag per step
    }
    else if (value == "tiny") m = KvitConfig::tiny();
    else v.fail("prostate, mil or tiny");
    cfg.auto_ring_pixels = keep_auto;
  }
  else if (key == "model.layers") m.layers = v.size();
  else if (key == "model.heads") m.heads = v.size();
  else if (key == "model.dim") m.dim = v.size();
  else if (key == "model.mlp_dim") m.mlp_dim = v.size();
  else if (key == "model.dropout") m.dropout = v.real();
  else if (key == "model.rings") m.rings = v.size();
  else if (key == "model.ring_pixels") {
    cfg.auto_ring_pixels = value == "auto";
    if (!cfg.auto_ring_pixels) m.ring_pixels = v.size();
  }
  else if (key == "model.classes") m.classes = v.size();
  else if (key == "model.patch_weights") m.patch_weights = v.boolean();
  else if (key == "model.phase_mode") m.phase_mode = v.parse_enum(parse_phase_mode);
  else if (key == "model.head") m.head = v.parse_enum(parse_head_kind);
  else if (key == "model.norm_eps") m.norm_eps = v.real();
  else if (key == "model.seed") cfg.model_seed = v.u64();
  else if (key == "pe.mode") m.pe_mode = v.parse_enum(parse_pe_mode);
  else if (key == "pe.rope_base") m.rope_base = v.real();
  else if (key == "pe.rope_scale_learnable") m.rope_scale_learnable = v.boolean();
  else if (key == "mil.attn_dim") m.mil_attn_dim = v.size();
  else if (key == "mil.hidden") m.mil_hidden = v.size();
  else if (key == "mil.dropout") m.mil_dropout = v.real();
  else if (key == "mask.rate") {
    const auto rate = static_cast<unsigned>(v.size());
    t.pre.mask.acceleration = rate;
    try {
      t.pre.mask.center_fraction = table_center_fraction(rate);
    } catch (const DomainError&) {
      // Off-table rates need an explicit mask.center_fraction.
      t.pre.mask.center_fraction = 0.0;
    }
  }
  else if (key == "mask.center_fraction") t.pre.mask.center_fraction = v.real();
  else if (key == "mask.seed") t.pre.mask.seed = v.u64();
  else if (key == "aug.enabled") t.pre.augment = v.boolean();
  else if (key == "aug.hflip_p") t.pre.aug.hflip_p = v.real();
  else if (key == "aug.rot_deg") t.pre.aug.rot_deg = v.real();
  else if (key == "aug.shear") t.pre.aug.shear = v.real();
  else if (key == "aug.cutout_n") t.pre.cutout_n = v.size();
  else if (key == "aug.cutout_frac") t.pre.cutout_frac = v.real();
  else if (key == "train.lr") t.optimizer.lr = v.real();
  else if (key == "train.beta1") t.optimizer.beta1 = v.real();
  else if (key == "train.beta2") t.optimizer.beta2 = v.real();
  else if (key == "train.eps") t.optimizer.eps = v.real();
  else if (key == "train.weight_decay") t.optimizer.weight_decay = v.real();
  else if (key == "train.batch_size") t.batch_size = v.size();
  else if (key == "train.max_epochs") t.max_epochs = v.size();
  else if (key == "train.patience") t.patience = v.size();
  else if (key == "train.seed") t.seed = v.u64();
  else if (key == "train.parallel") t.parallel = v.boolean();
  else if (key == "train.class_weights") t.class_weights = v.reals();
  else if (key == "train.val_fraction") cfg.val_fraction = v.real();
  else throw ConfigError("unknown key '" + std::string(key) + "'", line);
}

RunConfig parse_run_config(std::string_view text) {
  std::vector<Parsed> entries;
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected key = value", line_no);
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key", line_no);
    entries.push_back({std::string(key), std::string(value), line_no});
  }

  RunConfig cfg;
  for (const auto& e : entries) {
    if (e.key == "preset") apply_config_key(cfg, e.key, e.value, e.line);
  }
  for (const auto& e : entries) {
    if (e.key != "preset") apply_config_key(cfg, e.key, e.value, e.line);
  }
  if (cfg.train.pre.mask.acceleration != 0 && !(cfg.train.pre.mask.center_fraction > 0.0)) {
    throw ConfigError("mask.rate " + std::to_string(cfg.train.pre.mask.acceleration) +
                      " is not in the undersampling table; set mask.center_fraction");
  }
  if (cfg.train.patience == 0 || cfg.train.batch_size == 0) throw ConfigError("train.patience and train.batch_size must be >= 1");
  if (!(cfg.val_fraction > 0.0 && cfg.val_fraction < 1.0)) throw ConfigError("train.val_fraction must lie in (0, 1)");
  if (!cfg.auto_ring_pixels) cfg.model.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace kvit
