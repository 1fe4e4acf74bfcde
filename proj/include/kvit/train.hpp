#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kvit/data.hpp"
#include "kvit/kspace.hpp"
#include "kvit/metrics.hpp"
#include "kvit/model.hpp"

namespace kvit {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// First and second moments per real component of every parameter.
struct OptimState {
  std::vector<std::vector<Complex>> m;  // re, im moments packed as a complex pair
  std::vector<std::vector<Complex>> v;
  std::uint64_t step = 0;

  explicit OptimState(std::span<const NamedParameter> params);
};

/// One decoupled-decay AdamW step on the real-pair view, reading each
/// parameter's accumulated grad(). Real-only parameters update their real part.
void adamw_step(std::span<NamedParameter> params, OptimState& state, const AdamWConfig& cfg);

/// What happens to a record before it reaches the model. Training draws
/// augmentation and cutout; evaluation applies only mask and standardization.
struct Preprocess {
  MaskSpec mask;            // acceleration 0 keeps everything
  bool augment = true;
  AugmentSpec aug;
  std::size_t cutout_n = 2;  // 0 disables cutout
  double cutout_frac = 0.25;
};

/// Training input: augment -> cutout (train only) -> mask -> standardize.
/// The mask seed is derived from the record id so a record sees the same mask
/// in training and evaluation.
KSlice prepare_slice(const Record& rec, const Preprocess& pre, bool train, std::uint64_t draw_seed);

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t max_epochs = 100;
  std::size_t patience = 15;
  AdamWConfig optimizer;
  std::vector<double> class_weights;  // empty: inverse class frequency of the training samples
  Preprocess pre;
  std::uint64_t seed = 0;
  bool parallel = false;  // per-sample tapes on OpenMP threads; same result as serial
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_auroc = 0.0;
  double val_auprc = 0.0;
};

struct MetricReport {
  double auroc = 0.0;
  double auprc = 0.0;
  std::vector<double> per_class_auroc;
  std::vector<double> per_class_auprc;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool stopped_early = false;

  std::string to_json() const;
};

/// A training or evaluation unit: one record for a linear head, a bag of
/// records for a MIL head.
struct Sample {
  std::vector<std::size_t> members;
  std::size_t label = 0;
  std::uint64_t key = 0;  // record id or bag id; seeds per-sample randomness
};

std::vector<Sample> make_samples(const Dataset& ds, std::span<const std::size_t> records, HeadKind head);

/// Record indices split by bag (no bag on both sides), stratified by bag label.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};
Split split_by_bag(const Dataset& ds, double val_fraction, std::uint64_t seed);

/// inverse-frequency weights n / (C · n_c); classes without samples get 1.
std::vector<double> inverse_frequency_weights(std::span<const Sample> samples, std::size_t classes);

struct Evaluation {
  double loss = 0.0;                  // weighted mean cross-entropy
  std::vector<double> probs;          // n×C softmax outputs
  std::vector<std::size_t> labels;
  ClassMetrics metrics;               // zeros when only one class is present
  bool metrics_defined = false;
};

Evaluation evaluate(const KvitModel& model, const Dataset& ds, std::span<const Sample> samples,
                    const Preprocess& pre, std::span<const double> class_weights);

/// Epoch loop with seeded shuffling, weighted cross-entropy, AdamW, early
/// stopping on validation loss and restore of the best parameters.
/// Throws DomainError for an empty split.
MetricReport fit(KvitModel& model, const Dataset& ds, std::span<const std::size_t> train_records,
                 std::span<const std::size_t> val_records, const TrainConfig& cfg);

}  // namespace kvit
