#include "kvit/checkpoint.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "binio.hpp"

namespace kvit {

namespace binio {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed for '" + path + "'");
  return std::move(ss).str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace binio

namespace {

using nlohmann::json;

json to_json_object(const KvitConfig& c) {
  return json{{"layers", c.layers},
              {"heads", c.heads},
              {"dim", c.dim},
              {"mlp_dim", c.mlp_dim},
              {"dropout", c.dropout},
              {"rings", c.rings},
              {"ring_pixels", c.ring_pixels},
              {"classes", c.classes},
              {"pe_mode", std::string(to_string(c.pe_mode))},
              {"rope_base", c.rope_base},
              {"rope_scale_learnable", c.rope_scale_learnable},
              {"patch_weights", c.patch_weights},
              {"phase_mode", std::string(to_string(c.phase_mode))},
              {"head", std::string(to_string(c.head))},
              {"mil_attn_dim", c.mil_attn_dim},
              {"mil_hidden", c.mil_hidden},
              {"mil_dropout", c.mil_dropout},
              {"norm_eps", c.norm_eps}};
}

KvitConfig from_json_object(const json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  KvitConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "layers") c.layers = v.get<std::size_t>();
    else if (key == "heads") c.heads = v.get<std::size_t>();
    else if (key == "dim") c.dim = v.get<std::size_t>();
    else if (key == "mlp_dim") c.mlp_dim = v.get<std::size_t>();
    else if (key == "dropout") c.dropout = v.get<double>();
    else if (key == "rings") c.rings = v.get<std::size_t>();
    else if (key == "ring_pixels") c.ring_pixels = v.get<std::size_t>();
    else if (key == "classes") c.classes = v.get<std::size_t>();
    else if (key == "pe_mode") c.pe_mode = parse_pe_mode(v.get<std::string>());
    else if (key == "rope_base") c.rope_base = v.get<double>();
    else if (key == "rope_scale_learnable") c.rope_scale_learnable = v.get<bool>();
    else if (key == "patch_weights") c.patch_weights = v.get<bool>();
    else if (key == "phase_mode") c.phase_mode = parse_phase_mode(v.get<std::string>());
    else if (key == "head") c.head = parse_head_kind(v.get<std::string>());
    else if (key == "mil_attn_dim") c.mil_attn_dim = v.get<std::size_t>();
    else if (key == "mil_hidden") c.mil_hidden = v.get<std::size_t>();
    else if (key == "mil_dropout") c.mil_dropout = v.get<double>();
    else if (key == "norm_eps") c.norm_eps = v.get<double>();
    else throw ConfigError("unknown model config key '" + key + "'");
  }
  c.validate();
  return c;
}

}  // namespace

std::string config_to_json(const KvitConfig& cfg) { return to_json_object(cfg).dump(); }

KvitConfig config_from_json(std::string_view text) {
  try {
    return from_json_object(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config JSON: ") + e.what());
  }
}

std::string encode_checkpoint(const KvitModel& model, std::size_t height, std::size_t width) {
  json names = json::array();
  for (const auto& p : model.parameters()) {
    names.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"real", p.tensor.is_real()}});
  }
  const json header{{"config", to_json_object(model.config())},
                    {"input", {{"height", height}, {"width", width}}},
                    {"parameters", names}};
  const std::string text = header.dump();

  std::string out = "KVIT";
  binio::put_u32(out, kCheckpointVersion);
  binio::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (const auto& p : model.parameters()) {
    for (const Complex& z : p.tensor.data()) {
      binio::put_f64(out, z.real());
      binio::put_f64(out, z.imag());
    }
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  binio::Reader in(bytes);
  if (in.take(4, "magic") != "KVIT") throw FormatError("bad checkpoint magic", 0);
  const std::size_t version_at = in.offset();
  const auto version = in.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  }
  const auto len = in.u32("header length");
  const std::size_t header_at = in.offset();
  const auto text = in.take(len, "header");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header is not JSON: ") + e.what(), header_at);
  }

  std::size_t h = 0, w = 0;
  KvitConfig cfg;
  try {
    cfg = from_json_object(header.at("config"));
    h = header.at("input").at("height").get<std::size_t>();
    w = header.at("input").at("width").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what(), header_at);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what(), header_at);
  }

  Checkpoint ck{KvitModel(cfg), h, w};
  auto params = ck.model.parameters();
  const auto& listed = header.value("parameters", json::array());
  if (listed.size() != params.size()) {
    throw FormatError("checkpoint lists " + std::to_string(listed.size()) + " parameters, config implies " +
                          std::to_string(params.size()),
                      header_at);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (listed[i].value("name", std::string()) != params[i].name) {
      throw FormatError("parameter " + std::to_string(i) + " name mismatch", header_at);
    }
    auto data = params[i].tensor.mutable_data();
    for (auto& z : data) {
      const double re = in.f64("parameter payload");
      const double im = in.f64("parameter payload");
      z = Complex(re, params[i].tensor.is_real() ? 0.0 : im);
    }
  }
  if (in.remaining() != 0) throw FormatError("trailing bytes after parameters", in.offset());
  return ck;
}

void save_checkpoint(const std::string& path, const KvitModel& model, std::size_t height, std::size_t width) {
  binio::write_file(path, encode_checkpoint(model, height, width));
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(binio::read_file(path)); }

}  // namespace kvit
