#include "kvit/train.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <map>
#include <memory>
#include <numeric>

#include "kvit/ops.hpp"
#include "kvit/rng.hpp"

namespace kvit {

OptimState::OptimState(std::span<const NamedParameter> params) {
  for (const auto& p : params) {
    m.emplace_back(p.tensor.size());
    v.emplace_back(p.tensor.size());
  }
}

void adamw_step(std::span<NamedParameter> params, OptimState& state, const AdamWConfig& cfg) {
  if (state.m.size() != params.size()) throw ContractError("adamw_step: optimizer state built for other parameters");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t), c2 = 1.0 - std::pow(cfg.beta2, t);
  auto update = [&](double& p, double g, double& m, double& v) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
    p -= cfg.lr * cfg.weight_decay * p;
    p -= cfg.lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps);
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto data = params[i].tensor.mutable_data();
    const auto grad = params[i].tensor.grad();
    const bool real_only = params[i].tensor.is_real();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const Complex g = grad.empty() ? Complex{} : grad[j];
      double re = data[j].real(), im = data[j].imag();
      double mr = state.m[i][j].real(), mi = state.m[i][j].imag();
      double vr = state.v[i][j].real(), vi = state.v[i][j].imag();
      update(re, g.real(), mr, vr);
      if (!real_only) update(im, g.imag(), mi, vi);
      data[j] = Complex(re, im);
      state.m[i][j] = Complex(mr, mi);
      state.v[i][j] = Complex(vr, vi);
    }
  }
}

KSlice prepare_slice(const Record& rec, const Preprocess& pre, bool train, std::uint64_t draw_seed) {
  KSlice k = rec.slice;
  if (train) {
    Rng rng(derive_seed(draw_seed, 0x617567));
    if (pre.augment) {
      const auto ops = sample_augmentation(pre.aug, rng);
      if (!ops.empty()) k = augment_image_domain(k, ops);
    }
    if (pre.cutout_n > 0) {
      k = kspace_cutout(k, CutoutSpec::defaults(k.height, k.width, pre.cutout_n, pre.cutout_frac, rng.next_u64()));
    }
  }
  if (pre.mask.acceleration != 0) {
    MaskSpec spec = pre.mask;
    spec.seed = derive_seed(pre.mask.seed, rec.id);
    k = apply_mask(k, make_mask(spec, k.width));
  }
  return standardize_slice(k).slice;
}

std::string MetricReport::to_json() const {
  nlohmann::json epochs_json = nlohmann::json::array();
  for (const auto& e : epochs) {
    epochs_json.push_back({{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"val_loss", e.val_loss},
                           {"val_auroc", e.val_auroc},
                           {"val_auprc", e.val_auprc}});
  }
  nlohmann::json j{{"auroc", auroc},
                   {"auprc", auprc},
                   {"best_epoch", best_epoch},
                   {"stopped_early", stopped_early},
                   {"epochs", epochs_json}};
  if (!per_class_auroc.empty()) {
    j["per_class_auroc"] = per_class_auroc;
    j["per_class_auprc"] = per_class_auprc;
  }
  return j.dump(2);
}

std::vector<Sample> make_samples(const Dataset& ds, std::span<const std::size_t> records, HeadKind head) {
  std::vector<Sample> out;
  if (head == HeadKind::linear) {
    for (auto i : records) out.push_back({{i}, ds.records.at(i).label, ds.records.at(i).id});
    return out;
  }
  std::map<std::uint64_t, std::size_t> index;
  for (auto i : records) {
    const auto& r = ds.records.at(i);
    const auto [it, fresh] = index.try_emplace(r.bag_id, out.size());
    if (fresh) out.push_back({{}, 0, r.bag_id});
    out[it->second].members.push_back(i);
    out[it->second].label = std::max(out[it->second].label, r.label);
  }
  return out;
}

Split split_by_bag(const Dataset& ds, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw DomainError("split_by_bag: fraction must lie in (0, 1)");
  const auto bags = ds.bags();
  std::vector<std::vector<std::size_t>> by_label(ds.classes);
  for (std::size_t b = 0; b < bags.size(); ++b) by_label.at(bags[b].label).push_back(b);
  Rng rng(derive_seed(seed, 0x73706c6974));
  std::vector<std::uint8_t> in_val(bags.size(), 0);
  for (auto& group : by_label) {
    for (std::size_t k = group.size(); k > 1; --k) std::swap(group[k - 1], group[rng.below(k)]);
    const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(group.size())));
    for (std::size_t i = 0; i < n_val; ++i) in_val[group[i]] = 1;
  }
  Split s;
  for (std::size_t b = 0; b < bags.size(); ++b) {
    auto& side = in_val[b] ? s.val : s.train;
    side.insert(side.end(), bags[b].members.begin(), bags[b].members.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  return s;
}

std::vector<double> inverse_frequency_weights(std::span<const Sample> samples, std::size_t classes) {
  std::vector<double> counts(classes, 0.0);
  for (const auto& s : samples) counts.at(s.label) += 1.0;
  std::vector<double> w(classes, 1.0);
  const double n = static_cast<double>(samples.size());
  for (std::size_t c = 0; c < classes; ++c) {
    if (counts[c] > 0) w[c] = n / (static_cast<double>(classes) * counts[c]);
  }
  return w;
}

namespace {

ComplexTensor sample_logits(const KvitModel& model, const Dataset& ds, const Sample& s, const Preprocess& pre,
                            bool train, std::uint64_t draw_seed) {
  ForwardOptions opts{train, derive_seed(draw_seed, 0x64726f70), nullptr};
  if (model.config().head == HeadKind::linear) {
    return model.forward(prepare_slice(ds.records[s.members[0]], pre, train, draw_seed), opts);
  }
  std::vector<KSlice> bag;
  bag.reserve(s.members.size());
  for (std::size_t i = 0; i < s.members.size(); ++i) {
    bag.push_back(prepare_slice(ds.records[s.members[i]], pre, train, derive_seed(draw_seed, i)));
  }
  return model.mil_forward(bag, opts).logits;
}

std::vector<std::vector<Complex>> snapshot(const KvitModel& model) {
  std::vector<std::vector<Complex>> out;
  for (const auto& p : model.parameters()) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

void restore(KvitModel& model, const std::vector<std::vector<Complex>>& snap) {
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) std::ranges::copy(snap[i], params[i].tensor.mutable_data().begin());
}

}  // namespace

Evaluation evaluate(const KvitModel& model, const Dataset& ds, std::span<const Sample> samples,
                    const Preprocess& pre, std::span<const double> class_weights) {
  if (samples.empty()) throw DomainError("evaluate: no samples");
  const std::size_t c = model.config().classes;
  if (ds.classes != c) throw ShapeError("evaluate: dataset and model disagree on the class count");
  Evaluation ev;
  ev.probs.resize(samples.size() * c);
  ev.labels.resize(samples.size());
  std::vector<double> losses(samples.size());
  const auto n = static_cast<std::ptrdiff_t>(samples.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& s = samples[static_cast<std::size_t>(i)];
    const auto logits = sample_logits(model, ds, s, pre, false, 0);
    losses[static_cast<std::size_t>(i)] = weighted_cross_entropy(logits, s.label, class_weights).item().real();
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < c; ++k) mx = std::max(mx, logits[k].real());
    double z = 0.0;
    for (std::size_t k = 0; k < c; ++k) z += std::exp(logits[k].real() - mx);
    for (std::size_t k = 0; k < c; ++k) {
      ev.probs[static_cast<std::size_t>(i) * c + k] = std::exp(logits[k].real() - mx) / z;
    }
    ev.labels[static_cast<std::size_t>(i)] = s.label;
  }
  double wsum = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    ev.loss += losses[i];
    wsum += class_weights[samples[i].label];
  }
  ev.loss /= wsum;
  try {
    ev.metrics = classification_metrics(ev.probs, c, ev.labels);
    ev.metrics_defined = true;
  } catch (const DomainError&) {
    ev.metrics_defined = false;
  }
  return ev;
}

MetricReport fit(KvitModel& model, const Dataset& ds, std::span<const std::size_t> train_records,
                 std::span<const std::size_t> val_records, const TrainConfig& cfg) {
  if (train_records.empty() || val_records.empty()) throw DomainError("fit: empty train or validation split");
  if (cfg.batch_size == 0 || cfg.patience == 0) throw DomainError("fit: batch_size and patience must be >= 1");
  const std::size_t classes = model.config().classes;
  if (ds.classes != classes) throw ShapeError("fit: dataset and model disagree on the class count");

  const auto head = model.config().head;
  const auto train = make_samples(ds, train_records, head);
  const auto val = make_samples(ds, val_records, head);
  const auto weights = cfg.class_weights.empty() ? inverse_frequency_weights(train, classes) : cfg.class_weights;
  if (weights.size() != classes) throw ConfigError("class weight count does not match the class count");

  OptimState state(model.parameters());
  MetricReport report;
  auto best = snapshot(model);
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs = 0;
  std::vector<std::size_t> order(train.size());

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(derive_seed(cfg.seed, epoch));
    for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[shuffle.below(k)]);

    double epoch_loss = 0.0, epoch_weight = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const std::size_t b = stop - start;
      double wsum = 0.0;
      for (std::size_t i = start; i < stop; ++i) wsum += weights[train[order[i]].label];

      model.zero_grad();
      std::vector<std::unique_ptr<Tape>> tapes(b);
      std::vector<double> losses(b);
      auto run = [&](std::size_t i) {
        const Sample& s = train[order[start + i]];
        const std::uint64_t draw = derive_seed(derive_seed(cfg.seed, epoch), s.key);
        tapes[i] = std::make_unique<Tape>();
        Tape::Scope scope(*tapes[i]);
        const auto loss = weighted_cross_entropy(sample_logits(model, ds, s, cfg.pre, true, draw), s.label, weights);
        losses[i] = loss.item().real();
        tapes[i]->backward_deferred(scale(loss, 1.0 / wsum));
      };
      if (cfg.parallel) {
        const auto nb = static_cast<std::ptrdiff_t>(b);
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t i = 0; i < nb; ++i) run(static_cast<std::size_t>(i));
      } else {
        for (std::size_t i = 0; i < b; ++i) run(i);
      }
      // Fixed flush order keeps the gradient sum independent of scheduling.
      for (std::size_t i = 0; i < b; ++i) {
        tapes[i]->flush_leaf_grads();
        epoch_loss += losses[i];
      }
      epoch_weight += wsum;
      adamw_step(model.parameters(), state, cfg.optimizer);
    }

    const auto ev = evaluate(model, ds, val, cfg.pre, weights);
    EpochRecord rec{epoch, epoch_loss / epoch_weight, ev.loss, ev.metrics.auroc, ev.metrics.auprc};
    report.epochs.push_back(rec);
    if (ev.loss < best_loss) {
      best_loss = ev.loss;
      best = snapshot(model);
      report.best_epoch = epoch;
      report.auroc = ev.metrics.auroc;
      report.auprc = ev.metrics.auprc;
      report.per_class_auroc = ev.metrics.per_class_auroc;
      report.per_class_auprc = ev.metrics.per_class_auprc;
      bad_epochs = 0;
    } else if (++bad_epochs >= cfg.patience) {
      report.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }
  restore(model, best);
  model.zero_grad();
  return report;
}

}  // namespace kvit
