#include "kvit/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "kvit/checkpoint.hpp"
#include "kvit/config.hpp"
#include "kvit/data.hpp"
#include "kvit/kspace.hpp"
#include "kvit/patching.hpp"
#include "kvit/train.hpp"

namespace kvit {

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw IoError("write failed for '" + path + "'");
}

std::pair<std::size_t, std::size_t> grid_of(const Dataset& ds) {
  if (ds.records.empty()) throw DomainError("dataset has no records");
  const auto h = ds.records[0].slice.height, w = ds.records[0].slice.width;
  for (const auto& r : ds.records) {
    if (r.slice.height != h || r.slice.width != w) throw DomainError("dataset mixes grid sizes");
  }
  return {h, w};
}

std::vector<std::size_t> all_indices(const Dataset& ds) {
  std::vector<std::size_t> idx(ds.records.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

// "lo,hi" -> two numbers.
std::pair<double, double> parse_band(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw ConfigError("--band expects lo,hi");
  try {
    return {std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))};
  } catch (const std::exception&) {
    throw ConfigError("--band expects lo,hi");
  }
}

struct GenDataArgs {
  std::size_t n = 10, classes = 2, hw = 32, bags = 0;
  double phase_amp = 1.5707963267948966, noise = 0.01, band_shift = 0.0;
  std::string band = "2,6", out;
  std::uint64_t seed = 0;
};

int cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
  DatasetSpec spec;
  spec.base.height = spec.base.width = a.hw;
  std::tie(spec.base.band_lo, spec.base.band_hi) = parse_band(a.band);
  spec.base.noise = a.noise;
  spec.classes = a.classes;
  spec.n_per_class = a.n;
  spec.phase_amp = a.phase_amp;
  spec.band_shift = a.band_shift;
  spec.bag_size = a.bags;
  spec.seed = a.seed;
  const auto ds = gen_dataset(spec);
  save_dataset(a.out, ds);
  out << "wrote " << ds.records.size() << " records to " << a.out << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string config, data, out_dir, phase_mode;
  int undersample = -1;
  std::size_t epochs = 0;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig rc = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  if (a.undersample >= 0) apply_config_key(rc, "mask.rate", std::to_string(a.undersample));
  if (!a.phase_mode.empty()) apply_config_key(rc, "model.phase_mode", a.phase_mode);
  if (a.epochs > 0) rc.train.max_epochs = a.epochs;
  if (rc.train.pre.mask.acceleration != 0 && !(rc.train.pre.mask.center_fraction > 0.0)) {
    throw ConfigError("undersampling rate is not in the table");
  }

  const auto ds = load_dataset(a.data);
  const auto [h, w] = grid_of(ds);
  KvitConfig mc = rc.resolve_model(h, w);
  if (mc.classes != ds.classes) {
    if (mc.classes != KvitConfig{}.classes) throw ConfigError("model.classes disagrees with the dataset");
    mc.classes = ds.classes;
  }
  KvitModel model(mc, rc.model_seed);
  const auto split = split_by_bag(ds, rc.val_fraction, rc.train.seed);
  const auto report = fit(model, ds, split.train, split.val, rc.train);

  std::filesystem::create_directories(a.out_dir);
  const auto ck = (std::filesystem::path(a.out_dir) / "model.kvit").string();
  const auto metrics = (std::filesystem::path(a.out_dir) / "metrics.json").string();
  save_checkpoint(ck, model, h, w);
  write_text(metrics, report.to_json() + "\n");
  out << "epochs " << report.epochs.size() << ", best " << report.best_epoch << ", val auroc " << report.auroc
      << "\nwrote " << ck << " and " << metrics << "\n";
  return kExitOk;
}

std::vector<unsigned> parse_rates(const std::string& s) {
  std::vector<unsigned> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument(item);
      out.push_back(static_cast<unsigned>(v));
    } catch (const std::exception&) {
      throw ConfigError("--undersample expects a comma list of rates, got '" + s + "'");
    }
  }
  if (out.empty()) throw ConfigError("--undersample is empty");
  return out;
}

struct EvalArgs {
  std::string checkpoint, data, undersample = "0", out;
  std::uint64_t mask_seed = 0;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto rates = parse_rates(a.undersample);
  for (auto r : rates) table_center_fraction(r);
  const auto ck = load_checkpoint(a.checkpoint);
  const auto ds = load_dataset(a.data);
  const auto [h, w] = grid_of(ds);
  if (h != ck.height || w != ck.width) throw DomainError("dataset grid differs from the checkpoint's");
  if (ds.classes != ck.model.config().classes) throw DomainError("dataset class count differs from the checkpoint's");

  const auto idx = all_indices(ds);
  const auto samples = make_samples(ds, idx, ck.model.config().head);
  const std::vector<double> weights(ds.classes, 1.0);
  nlohmann::json rows = nlohmann::json::array();
  for (auto r : rates) {
    Preprocess pre;
    pre.mask = MaskSpec::for_rate(r, a.mask_seed);
    const auto ev = evaluate(ck.model, ds, samples, pre, weights);
    nlohmann::json row{{"undersample", r},
                       {"center_fraction", pre.mask.center_fraction},
                       {"loss", ev.loss},
                       {"auroc", ev.metrics_defined ? nlohmann::json(ev.metrics.auroc) : nlohmann::json()},
                       {"auprc", ev.metrics_defined ? nlohmann::json(ev.metrics.auprc) : nlohmann::json()}};
    rows.push_back(row);
  }
  const std::string text = nlohmann::json{{"rows", rows}}.dump(2) + "\n";
  if (a.out.empty()) {
    out << text;
  } else {
    write_text(a.out, text);
  }
  return kExitOk;
}

struct MaskArgs {
  unsigned rate = 0;
  double center_fraction = -1.0;
  std::size_t width = 0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_mask(const MaskArgs& a, std::ostream& out) {
  MaskSpec spec = a.center_fraction > 0.0 ? MaskSpec{a.rate, a.center_fraction, a.seed} : MaskSpec::for_rate(a.rate, a.seed);
  const auto m = make_mask(spec, a.width);
  std::string row;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (i) row += ',';
    row += m[i] ? '1' : '0';
  }
  row += '\n';
  if (a.out.empty()) {
    out << row;
  } else {
    write_text(a.out, row);
  }
  return kExitOk;
}

struct PatchDumpArgs {
  std::size_t height = 0, width = 0, ring_pixels = 0;
  std::string out;
};

int cmd_patch_dump(const PatchDumpArgs& a, std::ostream& out) {
  const auto part = RadialPartition::build(a.height, a.width, a.ring_pixels);
  std::string csv = "row,col,ring\n";
  for (std::size_t r = 0; r < a.height; ++r) {
    for (std::size_t c = 0; c < a.width; ++c) {
      csv += std::to_string(r) + ',' + std::to_string(c) + ',' + std::to_string(part.ring_of()[r * a.width + c]) + '\n';
    }
  }
  if (a.out.empty()) {
    out << csv;
  } else {
    write_text(a.out, csv);
  }
  return kExitOk;
}

struct AttnArgs {
  std::string checkpoint, data, out_prefix;
  std::uint64_t record = 0;
  unsigned undersample = 0;
  int layer = -1;
};

int cmd_attn_map(const AttnArgs& a, std::ostream& out) {
  const auto ck = load_checkpoint(a.checkpoint);
  if (ck.model.config().head != HeadKind::linear) throw DomainError("attn-map needs a linear-head checkpoint");
  const auto ds = load_dataset(a.data);
  const auto it = std::find_if(ds.records.begin(), ds.records.end(), [&](const Record& r) { return r.id == a.record; });
  if (it == ds.records.end()) throw DomainError("no record with id " + std::to_string(a.record));

  Preprocess pre;
  pre.mask = MaskSpec::for_rate(a.undersample, 0);
  const KSlice input = prepare_slice(*it, pre, false, 0);
  AttentionTrace trace;
  ck.model.forward(input, {false, 0, &trace});
  const auto layers = static_cast<int>(trace.cls_attention.size());
  const int layer = a.layer < 0 ? layers - 1 : a.layer;
  if (layer >= layers) throw DomainError("--layer out of range");
  const auto& row = trace.cls_attention[static_cast<std::size_t>(layer)];

  // Class-token attention over the ring tokens, renormalized without the
  // class token's attention to itself.
  const std::size_t n = row.size() - 1;
  double total = 0.0;
  for (std::size_t k = 1; k <= n; ++k) total += row[k];
  std::vector<double> mass(n), logm(n);
  for (std::size_t k = 0; k < n; ++k) {
    mass[k] = row[k + 1] / total;
    logm[k] = std::log10(std::max(mass[k], 1e-300));
  }
  std::ostringstream csv;
  csv.precision(17);
  csv << "ring,mass,log10_mass\n";
  for (std::size_t k = 0; k < n; ++k) csv << k << ',' << mass[k] << ',' << logm[k] << '\n';
  write_text(a.out_prefix + ".csv", csv.str());

  const auto [lo, hi] = std::minmax_element(logm.begin(), logm.end());
  const auto& part = ck.model.partition_for(input.height, input.width);
  std::string pgm = "P5\n" + std::to_string(input.width) + " " + std::to_string(input.height) + "\n255\n";
  for (std::size_t px = 0; px < input.size(); ++px) {
    const double v = logm[part.ring_of()[px]];
    const double t = *hi > *lo ? (v - *lo) / (*hi - *lo) : 1.0;
    pgm.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * t))));
  }
  write_text(a.out_prefix + ".pgm", pgm);
  out << "wrote " << a.out_prefix << ".csv and " << a.out_prefix << ".pgm (layer " << layer << ")\n";
  return kExitOk;
}

struct ParamCountArgs {
  std::string config, preset;
  std::size_t height = 0, width = 0;
};

int cmd_param_count(const ParamCountArgs& a, std::ostream& out) {
  RunConfig rc;
  if (!a.config.empty()) rc = load_run_config(a.config);
  if (!a.preset.empty()) apply_config_key(rc, "preset", a.preset);
  KvitConfig m = rc.model;
  if (rc.auto_ring_pixels) {
    if (a.height == 0 || a.width == 0) throw ConfigError("model.ring_pixels = auto needs --hw");
    m = rc.resolve_model(a.height, a.width);
  }
  m.validate();
  const auto c = KvitModel(m).count_parameters();
  out << "complex_parameters " << c.complex_count << "\nreal_only_parameters " << c.real_only
      << "\nreal_parameters " << c.real_count << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"kvit: complex-valued transformer over radial k-space rings", "kvit"};
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic k-space dataset (KSDS)");
  gen->add_option("--n", gd.n, "Records (or bags) per class")->check(CLI::PositiveNumber);
  gen->add_option("--classes", gd.classes, "Number of classes");
  gen->add_option("--hw", gd.hw, "Grid size (square)")->check(CLI::PositiveNumber);
  gen->add_option("--phase-amp", gd.phase_amp, "Phase-map amplitude of the last class, radians");
  gen->add_option("--band", gd.band, "Texture band lo,hi in cycles per field of view");
  gen->add_option("--band-shift", gd.band_shift, "Per-class shift of the texture band");
  gen->add_option("--noise", gd.noise, "k-space noise std per component");
  gen->add_option("--bags", gd.bags, "Slices per bag (0: slice-level records)");
  gen->add_option("--seed", gd.seed, "Master seed");
  gen->add_option("--out", gd.out, "Output .ksds path")->required();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a model; writes model.kvit and metrics.json");
  train->add_option("--config", tr.config, "key=value config file");
  train->add_option("--data", tr.data, "Training dataset (KSDS)")->required();
  train->add_option("--out", tr.out_dir, "Output directory")->required();
  train->add_option("--undersample", tr.undersample, "Acceleration rate from the undersampling table");
  train->add_option("--phase-mode", tr.phase_mode, "complex or magnitude_only");
  train->add_option("--epochs", tr.epochs, "Override train.max_epochs");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint; one metrics row per rate");
  eval->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->required();
  eval->add_option("--data", ev.data, "Dataset (KSDS)")->required();
  eval->add_option("--undersample", ev.undersample, "Comma list of rates, e.g. 0,2,4,8");
  eval->add_option("--mask-seed", ev.mask_seed, "Mask seed");
  eval->add_option("--out", ev.out, "Write JSON here instead of stdout");

  MaskArgs mk;
  auto* mask = app.add_subcommand("mask", "Print a column mask as a 0/1 CSV row");
  mask->add_option("--rate", mk.rate, "Acceleration rate")->required();
  mask->add_option("--center-fraction", mk.center_fraction, "Override the table's center fraction");
  mask->add_option("--width", mk.width, "Number of columns")->required()->check(CLI::PositiveNumber);
  mask->add_option("--seed", mk.seed, "Mask seed");
  mask->add_option("--out", mk.out, "Output path (default stdout)");

  PatchDumpArgs pd;
  std::vector<std::size_t> pd_hw;
  auto* patch = app.add_subcommand("patch-dump", "Ring assignment CSV (row,col,ring)");
  patch->add_option("--hw", pd_hw, "H [W]")->required()->expected(1, 2);
  patch->add_option("--ring-pixels", pd.ring_pixels, "Pixels per ring")->required();
  patch->add_option("--out", pd.out, "Output path (default stdout)");

  AttnArgs at;
  auto* attn = app.add_subcommand("attn-map", "Class-token ring attention as CSV plus log-scaled PGM");
  attn->add_option("--checkpoint", at.checkpoint, "Model checkpoint")->required();
  attn->add_option("--data", at.data, "Dataset (KSDS)")->required();
  attn->add_option("--record", at.record, "Record id")->required();
  attn->add_option("--out", at.out_prefix, "Output prefix; writes PREFIX.csv and PREFIX.pgm")->required();
  attn->add_option("--undersample", at.undersample, "Acceleration rate applied before the forward pass");
  attn->add_option("--layer", at.layer, "Layer index (default: last)");

  ParamCountArgs pc;
  std::vector<std::size_t> pc_hw;
  auto* count = app.add_subcommand("param-count", "Print complex and real parameter counts");
  count->add_option("--config", pc.config, "key=value config file");
  count->add_option("--preset", pc.preset, "prostate, mil or tiny");
  count->add_option("--hw", pc_hw, "Grid H [W], needed when ring_pixels = auto")->expected(1, 2);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_data(gd, out);
    if (*train) return cmd_train(tr, out);
    if (*eval) return cmd_eval(ev, out);
    if (*mask) return cmd_mask(mk, out);
    if (*patch) {
      pd.height = pd_hw[0];
      pd.width = pd_hw.size() > 1 ? pd_hw[1] : pd_hw[0];
      return cmd_patch_dump(pd, out);
    }
    if (*attn) return cmd_attn_map(at, out);
    if (*count) {
      if (!pc_hw.empty()) {
        pc.height = pc_hw[0];
        pc.width = pc_hw.size() > 1 ? pc_hw[1] : pc_hw[0];
      }
      return cmd_param_count(pc, out);
    }
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace kvit
