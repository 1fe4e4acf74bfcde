#include <gtest/gtest.h>

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "kvit/ops.hpp"
#include "kvit/train.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace kvit;
using kvit::testing::pairwise_auroc;
using kvit::testing::random_instance;
using kvit::testing::threshold_sweep_ap;

namespace {
DatasetSpec tiny_data(std::size_t n_per_class, std::uint64_t seed) {
  DatasetSpec d;
  d.base.height = d.base.width = 4;
  d.base.band_lo = 0.5;
  d.base.band_hi = 2.0;
  d.n_per_class = n_per_class;
  d.seed = seed;
  return d;
}

TrainConfig quick_config() {
  TrainConfig tc;
  tc.batch_size = 8;
  tc.max_epochs = 3;
  tc.optimizer.lr = 1e-2;
  tc.seed = 21;
  return tc;
}

}  // namespace

TEST(Auroc, Examples) {
  const std::vector<double> s{0.1, 0.2, 0.8, 0.9};
  const std::vector<std::uint8_t> y{0, 0, 1, 1};
  EXPECT_EQ(auroc(s, y), 1.0);
  const std::vector<double> flat(4, 0.3);
  EXPECT_EQ(auroc(flat, y), 0.5);
  EXPECT_THROW(auroc(s, std::vector<std::uint8_t>(4, 1)), DomainError);
}

TEST(Auroc, MatchesPairwiseOracle) {
  Rng rng(1);
  std::vector<double> s;
  std::vector<std::uint8_t> y;
  for (int i = 0; i < 200; ++i) {
    random_instance(rng, s, y, i % 2 == 0);
    EXPECT_NEAR(auroc(s, y), pairwise_auroc(s, y), 1e-12);
  }
}

TEST(Auroc, InvariantUnderMonotoneTransform) {
  Rng rng(2);
  std::vector<double> s;
  std::vector<std::uint8_t> y;
  for (int i = 0; i < 50; ++i) {
    random_instance(rng, s, y, i % 3 == 0);
    std::vector<double> t(s.size());
    std::transform(s.begin(), s.end(), t.begin(), [](double v) { return std::exp(3.0 * v) - 7.0; });
    EXPECT_EQ(auroc(s, y), auroc(t, y));
  }
}

TEST(Auprc, Examples) {
  const std::vector<std::uint8_t> y{1, 1, 0, 0};
  EXPECT_EQ(auprc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, y), 1.0);
  const std::size_t n = 7;
  std::vector<double> s(n);
  std::vector<std::uint8_t> one(n, 0);
  for (std::size_t i = 0; i < n; ++i) s[i] = static_cast<double>(n - i);
  one[n - 1] = 1;
  EXPECT_NEAR(auprc(s, one), 1.0 / n, 1e-15);
  EXPECT_THROW(auprc(s, std::vector<std::uint8_t>(n, 0)), DomainError);
}

TEST(Auprc, MatchesThresholdSweep) {
  Rng rng(3);
  std::vector<double> s;
  std::vector<std::uint8_t> y;
  for (int i = 0; i < 200; ++i) {
    random_instance(rng, s, y, i % 2 == 1);
    EXPECT_NEAR(auprc(s, y), threshold_sweep_ap(s, y), 1e-12);
  }
}

TEST(ClassificationMetrics, BinaryAndMacro) {
  const std::vector<double> p2{0.8, 0.2, 0.3, 0.7, 0.6, 0.4};
  const std::vector<std::size_t> l2{0, 1, 0};
  const auto m2 = classification_metrics(p2, 2, l2);
  EXPECT_EQ(m2.auroc, 1.0);
  EXPECT_TRUE(m2.per_class_auroc.empty());

  // Three classes, each perfectly ranked by its own column.
  const std::vector<double> p3{0.8, 0.1, 0.1, 0.1, 0.8, 0.1, 0.1, 0.1, 0.8, 0.6, 0.3, 0.1};
  const std::vector<std::size_t> l3{0, 1, 2, 0};
  const auto m3 = classification_metrics(p3, 3, l3);
  EXPECT_EQ(m3.auroc, 1.0);
  EXPECT_EQ(m3.per_class_auroc.size(), 3u);
}

TEST(AdamW, ZeroGradientZeroDecayLeavesParameters) {
  std::vector<NamedParameter> p{{"w", ComplexTensor({3}, {Complex(1, 2), Complex(-3, 4), Complex(0.5, 0)}, true)}};
  const auto before = std::vector<Complex>(p[0].tensor.data().begin(), p[0].tensor.data().end());
  OptimState st(p);
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  for (int i = 0; i < 5; ++i) adamw_step(p, st, cfg);
  EXPECT_TRUE(std::equal(before.begin(), before.end(), p[0].tensor.data().begin()));
}

TEST(AdamW, FirstStepIsSignOfGradient) {
  auto w = ComplexTensor({2}, {Complex(1, 1), Complex(-2, 0.5)}, true);
  {
    Tape tape;
    Tape::Scope scope(tape);
    const ComplexTensor probe({2}, {Complex(3, -0.5), Complex(-4, 2)});
    tape.backward(real_part(sum(mul(w, probe))));
  }
  std::vector<NamedParameter> p{{"w", w}};
  OptimState st(p);
  AdamWConfig cfg;
  cfg.lr = 1e-3;
  cfg.weight_decay = 0.0;
  const std::vector<Complex> g(w.grad().begin(), w.grad().end());
  const std::vector<Complex> before(w.data().begin(), w.data().end());
  adamw_step(p, st, cfg);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(w[i].real() - before[i].real(), -cfg.lr * std::copysign(1.0, g[i].real()), 1e-9);
    EXPECT_NEAR(w[i].imag() - before[i].imag(), -cfg.lr * std::copysign(1.0, g[i].imag()), 1e-9);
  }
}

TEST(AdamW, LearningRateZeroIsBitwiseIdentity) {
  Rng rng(4);
  auto w = kvit::testing::random_tensor({4, 3}, rng);
  {
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(real_part(sum(mul(w, w))));
  }
  std::vector<NamedParameter> p{{"w", w}};
  const std::vector<Complex> before(w.data().begin(), w.data().end());
  OptimState st(p);
  AdamWConfig cfg;
  cfg.lr = 0.0;
  cfg.weight_decay = 0.0;
  adamw_step(p, st, cfg);
  EXPECT_TRUE(std::equal(before.begin(), before.end(), w.data().begin()));
}

TEST(AdamW, QuadraticBowlConverges) {
  const ComplexTensor target({3}, {Complex(1.5, -2.0), Complex(-0.5, 0.25), Complex(3.0, 1.0)});
  auto w = ComplexTensor({3}, std::vector<Complex>(3, Complex{}), true);
  auto r = ComplexTensor::real({1}, {-1.0}, true);
  std::vector<NamedParameter> p{{"w", w}, {"r", r}};
  OptimState st(p);
  AdamWConfig cfg;
  cfg.lr = 0.05;
  cfg.weight_decay = 0.0;
  for (int step = 0; step < 2000; ++step) {
    w.zero_grad();
    r.zero_grad();
    Tape tape;
    Tape::Scope scope(tape);
    const ComplexTensor two({1}, {2.0});
    tape.backward(add(sum(abs2(sub(w, target))), sum(abs2(sub(r, two)))));
    adamw_step(p, st, cfg);
  }
  for (std::size_t i = 0; i < 3; ++i) EXPECT_LT(std::abs(w[i] - target[i]), 1e-3);
  EXPECT_NEAR(r[0].real(), 2.0, 1e-3);
  EXPECT_EQ(r[0].imag(), 0.0);
}

TEST(Split, BagsNeverStraddle) {
  auto d = tiny_data(10, 5);
  d.bag_size = 3;
  const auto ds = gen_dataset(d);
  const auto s = split_by_bag(ds, 0.2, 9);
  std::set<std::uint64_t> train_bags, val_bags;
  for (auto i : s.train) train_bags.insert(ds.records[i].bag_id);
  for (auto i : s.val) val_bags.insert(ds.records[i].bag_id);
  for (auto b : val_bags) EXPECT_EQ(train_bags.count(b), 0u);
  EXPECT_EQ(s.train.size() + s.val.size(), ds.records.size());
  EXPECT_EQ(val_bags.size(), 4u);
}

TEST(Fit, EmptySplitIsDomainError) {
  const auto ds = gen_dataset(tiny_data(2, 1));
  KvitModel m(KvitConfig::tiny());
  const std::vector<std::size_t> some{0, 1};
  EXPECT_THROW(fit(m, ds, {}, some, quick_config()), DomainError);
  EXPECT_THROW(fit(m, ds, some, {}, quick_config()), DomainError);
}

TEST(Fit, PatienceOneStopsAfterTwoWorseningEpochs) {
  // Validation holds the training slices with swapped labels, so every step
  // that helps training hurts validation.
  auto ds = gen_dataset(tiny_data(8, 2));
  const std::size_t n = ds.records.size();
  std::vector<std::size_t> train(n), val(n);
  for (std::size_t i = 0; i < n; ++i) {
    Record flipped = ds.records[i];
    flipped.label = 1 - flipped.label;
    flipped.id += n;
    flipped.bag_id += n;
    ds.records.push_back(flipped);
    train[i] = i;
    val[i] = n + i;
  }
  auto cfg = quick_config();
  cfg.patience = 1;
  cfg.max_epochs = 10;
  cfg.pre.augment = false;
  cfg.pre.cutout_n = 0;
  KvitModel m(KvitConfig::tiny(), 4);
  const auto report = fit(m, ds, train, val, cfg);
  ASSERT_EQ(report.epochs.size(), 2u);
  EXPECT_GT(report.epochs[1].val_loss, report.epochs[0].val_loss);
  EXPECT_TRUE(report.stopped_early);
  EXPECT_EQ(report.best_epoch, 1u);
}

TEST(Fit, SameSeedSameTrajectoryAndParameters) {
  const auto ds = gen_dataset(tiny_data(12, 3));
  const auto split = split_by_bag(ds, 0.25, 1);
  auto run = [&](bool parallel) {
    KvitModel m(KvitConfig::tiny(), 8);
    auto cfg = quick_config();
    cfg.parallel = parallel;
    const auto rep = fit(m, ds, split.train, split.val, cfg);
    std::vector<Complex> flat;
    for (const auto& p : m.parameters()) flat.insert(flat.end(), p.tensor.data().begin(), p.tensor.data().end());
    return std::pair(rep, flat);
  };
  const auto [r1, p1] = run(false);
  const auto [r2, p2] = run(false);
  omp_set_num_threads(4);
  const auto [r3, p3] = run(true);
  ASSERT_EQ(r1.epochs.size(), r2.epochs.size());
  for (std::size_t e = 0; e < r1.epochs.size(); ++e) {
    EXPECT_EQ(r1.epochs[e].train_loss, r2.epochs[e].train_loss);
    EXPECT_EQ(r1.epochs[e].train_loss, r3.epochs[e].train_loss);
    EXPECT_EQ(r1.epochs[e].val_loss, r3.epochs[e].val_loss);
  }
  EXPECT_EQ(p1, p2);
  EXPECT_EQ(p1, p3);
}

TEST(Fit, MilHeadTrainsOnBags) {
  auto d = tiny_data(6, 6);
  d.bag_size = 3;
  const auto ds = gen_dataset(d);
  const auto split = split_by_bag(ds, 0.3, 2);
  auto cfg = KvitConfig::tiny();
  cfg.head = HeadKind::mil_mlp;
  KvitModel m(cfg, 5);
  auto tc = quick_config();
  tc.batch_size = 1;
  tc.max_epochs = 2;
  const auto rep = fit(m, ds, split.train, split.val, tc);
  EXPECT_EQ(rep.epochs.size(), 2u);
  EXPECT_TRUE(std::isfinite(rep.epochs.back().train_loss));
}

TEST(MetricReport, JsonHasRequiredKeys) {
  MetricReport r;
  r.auroc = 0.75;
  r.epochs.push_back({1, 0.5, 0.6, 0.7, 0.8});
  const auto text = r.to_json();
  for (const char* key : {"\"auroc\"", "\"auprc\"", "\"epochs\"", "\"val_loss\""}) {
    EXPECT_NE(text.find(key), std::string::npos) << key;
  }
}

TEST(Preprocess, EvaluationPathIsDeterministicAndStandardized) {
  const auto ds = gen_dataset(tiny_data(1, 4));
  Preprocess pre;
  pre.mask = MaskSpec{2, 0.5, 3};
  const auto a = prepare_slice(ds.records[0], pre, false, 1);
  const auto b = prepare_slice(ds.records[0], pre, false, 2);
  EXPECT_EQ(a, b);
  double ms = 0.0;
  for (const auto& z : a.values) ms += std::norm(z);
  EXPECT_NEAR(ms / static_cast<double>(a.size()), 1.0, 1e-10);
  EXPECT_NE(prepare_slice(ds.records[0], pre, true, 1), a);
}
