#include "kvit/data.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <map>
#include <numbers>

#include "binio.hpp"
#include "kvit/kspace.hpp"
#include "kvit/rng.hpp"

namespace kvit {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

enum Stream : std::uint64_t { kBlobs = 1, kTexture, kPhase, kNoise };

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

void PhantomSpec::validate() const {
  if (height == 0 || width == 0) throw DomainError("phantom: empty grid");
  const double nyquist = 0.5 * static_cast<double>(std::min(height, width));
  if (!(band_lo >= 0.0 && band_lo < band_hi && band_hi <= nyquist)) {
    throw DomainError("phantom: texture band must satisfy 0 <= lo < hi <= " + std::to_string(nyquist));
  }
  if (!(phase_amp >= 0.0 && phase_amp <= std::numbers::pi)) throw DomainError("phantom: phase amplitude outside [0, pi]");
  if (blobs_min > blobs_max) throw DomainError("phantom: blobs_min > blobs_max");
  if (!(blob_sigma_min > 0.0 && blob_sigma_min <= blob_sigma_max)) throw DomainError("phantom: bad blob size range");
  if (!(noise >= 0.0) || !(texture_amp >= 0.0)) throw DomainError("phantom: negative noise or texture amplitude");
}

Record gen_phantom(const PhantomSpec& spec) {
  spec.validate();
  const std::size_t h = spec.height, w = spec.width;
  const double hd = static_cast<double>(h), wd = static_cast<double>(w);
  KSlice img(h, w);

  Rng blobs(derive_seed(spec.seed, kBlobs));
  const std::size_t n_blobs = spec.blobs_min + blobs.below(spec.blobs_max - spec.blobs_min + 1);
  for (std::size_t b = 0; b < n_blobs; ++b) {
    const double cy = blobs.uniform(0.25, 0.75) * hd, cx = blobs.uniform(0.25, 0.75) * wd;
    const double sy = blobs.uniform(spec.blob_sigma_min, spec.blob_sigma_max) * hd;
    const double sx = blobs.uniform(spec.blob_sigma_min, spec.blob_sigma_max) * wd;
    const double amp = blobs.uniform(0.5, 1.5);
    for (std::size_t r = 0; r < h; ++r) {
      const double dy = (static_cast<double>(r) - cy) / sy;
      for (std::size_t c = 0; c < w; ++c) {
        const double dx = (static_cast<double>(c) - cx) / sx;
        img.at(r, c) += amp * std::exp(-0.5 * (dy * dy + dx * dx));
      }
    }
  }

  if (spec.texture_amp > 0.0 && spec.texture_waves > 0) {
    Rng tex(derive_seed(spec.seed, kTexture));
    const double a = spec.texture_amp / std::sqrt(static_cast<double>(spec.texture_waves));
    for (std::size_t k = 0; k < spec.texture_waves; ++k) {
      const double f = tex.uniform(spec.band_lo, spec.band_hi);
      const double theta = tex.uniform(0.0, kTwoPi), phase = tex.uniform(0.0, kTwoPi);
      const double fy = f * std::sin(theta) / hd, fx = f * std::cos(theta) / wd;
      for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
          img.at(r, c) += a * std::cos(kTwoPi * (fy * static_cast<double>(r) + fx * static_cast<double>(c)) + phase);
        }
      }
    }
  }

  if (spec.phase_amp > 0.0) {
    Rng ph(derive_seed(spec.seed, kPhase));
    const double theta = ph.uniform(0.0, kTwoPi), offset = ph.uniform(0.0, kTwoPi);
    const double f = ph.uniform(0.5, 1.5);
    const double fy = f * std::sin(theta) / hd, fx = f * std::cos(theta) / wd;
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        const double field = std::cos(kTwoPi * (fy * static_cast<double>(r) + fx * static_cast<double>(c)) + offset);
        img.at(r, c) *= std::polar(1.0, spec.phase_amp * (0.75 + 0.25 * field));
      }
    }
  }

  Record rec;
  rec.slice = fft2c(img, kernels::Exec::serial);
  rec.label = spec.label;
  if (spec.noise > 0.0) {
    Rng noise(derive_seed(spec.seed, kNoise));
    for (auto& z : rec.slice.values) z += Complex(noise.normal(0.0, spec.noise), noise.normal(0.0, spec.noise));
  }
  for (auto& z : rec.slice.values) z = Complex(to_f32(z.real()), to_f32(z.imag()));
  return rec;
}

std::vector<Bag> Dataset::bags() const {
  std::vector<Bag> out;
  std::map<std::uint64_t, std::size_t> index;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto [it, fresh] = index.try_emplace(records[i].bag_id, out.size());
    if (fresh) out.push_back(Bag{records[i].bag_id, 0, {}});
    Bag& b = out[it->second];
    b.members.push_back(i);
    b.label = std::max(b.label, records[i].label);
  }
  return out;
}

Dataset gen_dataset(const DatasetSpec& spec) {
  if (spec.classes < 2) throw DomainError("gen_dataset: need at least two classes");
  if (spec.n_per_class == 0) throw DomainError("gen_dataset: n_per_class must be >= 1");
  if (spec.bag_size > 0 && spec.classes != 2) throw DomainError("gen_dataset: bags require two classes");

  // Plan every record first (label, bag) so generation can run in parallel.
  struct Plan {
    std::size_t label;
    std::uint64_t bag;
  };
  std::vector<Plan> plan;
  if (spec.bag_size == 0) {
    for (std::size_t i = 0; i < spec.n_per_class; ++i) {
      for (std::size_t c = 0; c < spec.classes; ++c) plan.push_back({c, plan.size()});
    }
  } else {
    Rng rng(derive_seed(spec.seed, 0x626167));
    std::uint64_t bag = 0;
    for (std::size_t i = 0; i < spec.n_per_class; ++i) {
      for (std::size_t label = 0; label < 2; ++label, ++bag) {
        std::vector<std::size_t> labels(spec.bag_size, 0);
        if (label == 1) {
          const std::size_t positives = 1 + rng.below(spec.bag_size);
          std::fill_n(labels.begin(), positives, 1);
          for (std::size_t k = labels.size(); k > 1; --k) std::swap(labels[k - 1], labels[rng.below(k)]);
        }
        for (auto l : labels) plan.push_back({l, bag});
      }
    }
  }

  Dataset ds;
  ds.classes = spec.classes;
  ds.records.resize(plan.size());
  const auto n = static_cast<std::ptrdiff_t>(plan.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& p = plan[static_cast<std::size_t>(i)];
    PhantomSpec ps = spec.base;
    ps.label = p.label;
    ps.phase_amp = spec.phase_amp * static_cast<double>(p.label) / static_cast<double>(spec.classes - 1);
    ps.band_lo += spec.band_shift * static_cast<double>(p.label);
    ps.band_hi += spec.band_shift * static_cast<double>(p.label);
    ps.seed = derive_seed(spec.seed, static_cast<std::uint64_t>(i));
    Record r = gen_phantom(ps);
    r.id = static_cast<std::uint64_t>(i);
    r.bag_id = p.bag;
    ds.records[static_cast<std::size_t>(i)] = std::move(r);
  }
  return ds;
}

std::string encode_dataset(const Dataset& ds) {
  nlohmann::json recs = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& r : ds.records) {
    recs.push_back({{"id", r.id},
                    {"label", r.label},
                    {"bag_id", r.bag_id},
                    {"offset", offset},
                    {"height", r.slice.height},
                    {"width", r.slice.width}});
    offset += 8 * r.slice.size();
  }
  const std::string manifest = nlohmann::json{{"classes", ds.classes}, {"records", recs}}.dump();
  std::string out = "KSDS";
  binio::put_u32(out, kDatasetVersion);
  binio::put_u32(out, static_cast<std::uint32_t>(manifest.size()));
  out += manifest;
  out.reserve(out.size() + offset);
  for (const auto& r : ds.records) {
    for (const auto& z : r.slice.values) {
      binio::put_f32(out, static_cast<float>(z.real()));
      binio::put_f32(out, static_cast<float>(z.imag()));
    }
  }
  return out;
}

Dataset decode_dataset(std::string_view bytes) {
  binio::Reader in(bytes);
  if (in.take(4, "magic") != "KSDS") throw FormatError("bad dataset magic", 0);
  const std::size_t version_at = in.offset();
  const auto version = in.u32("version");
  if (version != kDatasetVersion) throw FormatError("unsupported dataset version " + std::to_string(version), version_at);
  const auto len = in.u32("manifest length");
  const std::size_t manifest_at = in.offset();
  const auto text = in.take(len, "manifest");

  Dataset ds;
  std::vector<std::uint64_t> offsets;
  try {
    const auto m = nlohmann::json::parse(text);
    ds.classes = m.at("classes").get<std::size_t>();
    for (const auto& e : m.at("records")) {
      Record r;
      r.id = e.at("id").get<std::uint64_t>();
      r.label = e.at("label").get<std::size_t>();
      r.bag_id = e.at("bag_id").get<std::uint64_t>();
      r.slice = KSlice(e.at("height").get<std::size_t>(), e.at("width").get<std::size_t>());
      if (r.label >= ds.classes) throw FormatError("record label out of range", manifest_at);
      offsets.push_back(e.at("offset").get<std::uint64_t>());
      ds.records.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset manifest: ") + e.what(), manifest_at);
  }

  const std::size_t payload_at = in.offset();
  std::uint64_t expected = 0;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    if (offsets[i] != expected) {
      throw FormatError("record " + std::to_string(i) + " offset disagrees with payload layout", manifest_at);
    }
    expected += 8 * ds.records[i].slice.size();
  }
  in.need(expected, "payload");
  for (auto& r : ds.records) {
    for (auto& z : r.slice.values) {
      const float re = in.f32("payload");
      const float im = in.f32("payload");
      z = Complex(re, im);
    }
  }
  if (in.remaining() != 0) throw FormatError("trailing bytes after payload", payload_at + expected);
  return ds;
}

void save_dataset(const std::string& path, const Dataset& ds) { binio::write_file(path, encode_dataset(ds)); }

Dataset load_dataset(const std::string& path) { return decode_dataset(binio::read_file(path)); }

}  // namespace kvit
