#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fd_oracle.hpp"
#include "kvit/model.hpp"
#include "kvit/ops.hpp"
#include "test_util.hpp"

using namespace kvit;
using kvit::testing::random_slice;

namespace {

ComplexTensor loss_of(const KvitModel& m, const KSlice& s, std::size_t label, const ForwardOptions& o) {
  const std::vector<double> w(m.config().classes, 1.0);
  return weighted_cross_entropy(m.forward(s, o), label, w);
}

void zero_param(KvitModel& m, const std::string& suffix) {
  for (auto& p : m.parameters()) {
    if (p.name.ends_with(suffix)) {
      for (auto& z : p.tensor.mutable_data()) z = 0.0;
    }
  }
}

// Analytic gradient of every parameter entry versus central differences.
double full_model_grad_error(KvitModel& model, const std::function<ComplexTensor()>& build) {
  model.zero_grad();
  {
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(build());
  }
  auto loss = [&] { return build().item().real(); };
  double worst = 0.0;
  for (auto& p : model.parameters()) {
    const auto r = kvit::testing::check_leaf(p.tensor, loss);
    EXPECT_LT(r.max_rel_error, 1e-4) << p.name;
    worst = std::max(worst, r.max_rel_error);
  }
  return worst;
}

}  // namespace

TEST(KvitConfig, PresetsValidate) {
  EXPECT_NO_THROW(KvitConfig::prostate().validate());
  EXPECT_NO_THROW(KvitConfig::mil().validate());
  EXPECT_NO_THROW(KvitConfig::tiny().validate());
  auto bad = KvitConfig::tiny();
  bad.heads = 3;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = KvitConfig::tiny();
  bad.dropout = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(ParameterCount, SingleMatrix) {
  const std::vector<NamedParameter> p{{"w", ComplexTensor::zeros({2, 2}, true)}};
  const auto c = count_parameters(p);
  EXPECT_EQ(c.complex_count, 4u);
  EXPECT_EQ(c.real_count, 8u);
}

TEST(ParameterCount, TinyClosedForm) {
  const auto cfg = KvitConfig::tiny();
  const std::size_t n = cfg.rings, p = cfg.ring_pixels, d = cfg.dim, f = cfg.mlp_dim, c = cfg.classes;
  const std::size_t per_layer = 4 * d + 4 * d * d + d * f + f + f * d + d;
  const std::size_t expected = n + p * d + d + d + cfg.layers * per_layer + 2 * d + d * c + c;
  const auto count = KvitModel(cfg).count_parameters();
  EXPECT_EQ(count.complex_count, expected);
  EXPECT_EQ(count.real_only, cfg.layers * cfg.heads);
  EXPECT_EQ(count.real_count, 2 * expected + cfg.layers * cfg.heads);
}

TEST(ParameterCount, ProstateNearTargetAndMilSmaller) {
  const auto prostate = KvitModel(KvitConfig::prostate()).count_parameters();
  EXPECT_NEAR(static_cast<double>(prostate.complex_count), 4.9e6, 0.15 * 4.9e6);
  const auto mil = KvitModel(KvitConfig::mil()).count_parameters();
  EXPECT_LT(mil.real_count, prostate.real_count);
}

TEST(KvitModel, ForwardIsDeterministicWithoutDropout) {
  KvitModel m(KvitConfig::tiny(), 3);
  Rng rng(1);
  const auto s = random_slice(4, 4, rng);
  const auto a = m.forward(s), b = m.forward(s);
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(a[i], b[i]);
    EXPECT_EQ(a[i].imag(), 0.0);
  }
  ForwardOptions train{true, 99, nullptr};
  const auto c = m.forward(s, train), d = m.forward(s, train);
  EXPECT_EQ(c[0], d[0]);
}

TEST(KvitModel, RejectsMismatchedGrid) {
  KvitModel m(KvitConfig::tiny());
  EXPECT_THROW(m.forward(KSlice(8, 8)), ShapeError);
  EXPECT_NO_THROW(m.forward(KSlice(4, 4)));
}

TEST(KvitModel, FullGradientCheckTinyRope) {
  KvitModel model(KvitConfig::tiny(), 11);
  Rng rng(2);
  const auto s = random_slice(4, 4, rng);
  const ForwardOptions opts{true, 5, nullptr};
  EXPECT_LT(full_model_grad_error(model, [&] { return loss_of(model, s, 1, opts); }), 1e-4);
}

TEST(KvitModel, FullGradientCheckLearnablePeMagnitude) {
  auto cfg = KvitConfig::tiny();
  cfg.pe_mode = PeMode::learnable;
  cfg.phase_mode = PhaseMode::magnitude_only;
  KvitModel model(cfg, 12);
  Rng rng(3);
  const auto s = random_slice(4, 4, rng);
  EXPECT_LT(full_model_grad_error(model, [&] { return loss_of(model, s, 0, {}); }), 1e-4);
}

TEST(KvitModel, FullGradientCheckMilHead) {
  auto cfg = KvitConfig::tiny();
  cfg.head = HeadKind::mil_mlp;
  cfg.mil_attn_dim = 4;
  cfg.mil_hidden = 6;
  KvitModel model(cfg, 13);
  Rng rng(4);
  const std::vector<KSlice> bag{random_slice(4, 4, rng), random_slice(4, 4, rng), random_slice(4, 4, rng)};
  const ForwardOptions opts{true, 8, nullptr};
  const std::vector<double> w{1.0, 2.0};
  EXPECT_LT(full_model_grad_error(
                model, [&] { return weighted_cross_entropy(model.mil_forward(bag, opts).logits, 1, w); }),
            1e-4);
}

TEST(KvitModel, AttentionRowsSumToOne) {
  auto cfg = KvitConfig::tiny();
  cfg.layers = 3;
  KvitModel m(cfg, 4);
  Rng rng(5);
  AttentionTrace trace;
  m.forward(random_slice(4, 4, rng), {false, 0, &trace});
  ASSERT_EQ(trace.cls_attention.size(), 3u);
  for (const auto& row : trace.cls_attention) {
    ASSERT_EQ(row.size(), cfg.rings + 1);
    EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(KvitModel, IdenticalTokensGiveUniformAttention) {
  auto cfg = KvitConfig::tiny();
  cfg.pe_mode = PeMode::none;
  cfg.patch_weights = false;
  KvitModel m(cfg, 6);
  zero_param(m, "embed.weight");
  zero_param(m, "cls_token");
  AttentionTrace trace;
  Rng rng(6);
  m.forward(random_slice(4, 4, rng), {false, 0, &trace});
  for (double a : trace.cls_attention[0]) EXPECT_NEAR(a, 1.0 / 5.0, 1e-15);
}

TEST(KvitModel, ZeroedBlocksCollapseToSkipPath) {
  KvitModel m(KvitConfig::tiny(), 7);
  for (const char* s : {"attn.wq", "attn.wk", "attn.wv", "attn.wo", "ffn.w1", "ffn.b1", "ffn.w2", "ffn.b2"}) {
    zero_param(m, s);
  }
  Rng rng(7);
  const auto a = m.forward(random_slice(4, 4, rng));
  const auto b = m.forward(random_slice(4, 4, rng));

  // Oracle: head(final_norm(cls)) computed directly.
  const auto params = m.parameters();
  auto find = [&](const std::string& n) {
    for (const auto& p : params) {
      if (p.name == n) return p.tensor;
    }
    throw std::runtime_error(n);
  };
  const auto cls = find("cls_token");
  const auto gamma = find("final_norm.gamma"), beta = find("final_norm.beta");
  const auto hw = find("head.weight"), hb = find("head.bias");
  const std::size_t d = cls.size();
  Complex mu{};
  for (std::size_t j = 0; j < d; ++j) mu += cls[j];
  mu /= static_cast<double>(d);
  double var = 0.0;
  for (std::size_t j = 0; j < d; ++j) var += std::norm(cls[j] - mu);
  var /= static_cast<double>(d);
  for (std::size_t c = 0; c < 2; ++c) {
    Complex z = hb[c];
    for (std::size_t j = 0; j < d; ++j) {
      const Complex y = (cls[j] - mu) / std::sqrt(var + 1e-5) * gamma[j] + beta[j];
      z += y * hw.at(j, c);
    }
    EXPECT_NEAR(a[c].real(), 0.5 * (z.real() + z.imag()), 1e-12);
    EXPECT_EQ(a[c], b[c]);
  }
}

TEST(KvitModel, MagnitudeOnlyIgnoresPhase) {
  auto cfg = KvitConfig::tiny();
  cfg.phase_mode = PhaseMode::magnitude_only;
  KvitModel m(cfg, 8);
  Rng rng(8);
  const auto s = random_slice(4, 4, rng);
  KSlice rotated = s, mag = s;
  for (std::size_t i = 0; i < s.size(); ++i) {
    rotated.values[i] = s.values[i] * std::polar(1.0, rng.uniform(-3.0, 3.0));
    mag.values[i] = std::abs(s.values[i]);
  }
  auto ref = KvitConfig::tiny();
  KvitModel complex_model(ref, 8);
  const auto a = m.forward(s), b = m.forward(rotated), c = complex_model.forward(mag);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(a[i].real(), b[i].real(), 1e-12);
    EXPECT_EQ(a[i], c[i]);
  }
}

TEST(KvitModel, DropoutKeepsComplexValuesAtomic) {
  // Dropout is exercised inside the model; atomicity itself is covered in the
  // op tests, here we check train mode actually changes the output.
  auto cfg = KvitConfig::tiny();
  cfg.dropout = 0.5;
  KvitModel m(cfg, 9);
  Rng rng(9);
  const auto s = random_slice(4, 4, rng);
  const auto eval = m.forward(s);
  const auto tr = m.forward(s, {true, 1, nullptr});
  EXPECT_NE(eval[0], tr[0]);
}

TEST(MilHead, SingletonAndDuplicates) {
  auto cfg = KvitConfig::tiny();
  cfg.head = HeadKind::mil_mlp;
  KvitModel m(cfg, 10);
  Rng rng(10);
  const auto a = random_slice(4, 4, rng), b = random_slice(4, 4, rng);
  const std::vector<KSlice> one{a};
  EXPECT_EQ(m.mil_forward(one).importance, std::vector<double>{1.0});

  const std::vector<KSlice> bag{a, b, a, random_slice(4, 4, rng)};
  const auto out = m.mil_forward(bag);
  EXPECT_NEAR(std::accumulate(out.importance.begin(), out.importance.end(), 0.0), 1.0, 1e-12);
  EXPECT_NEAR(out.importance[0], out.importance[2], 1e-10);
  EXPECT_THROW(m.mil_forward(std::span<const KSlice>{}), DomainError);
  EXPECT_THROW(m.forward(a), ContractError);
}

TEST(Readout, AverageOfParts) {
  const ComplexTensor z({2}, {Complex(1, 1), Complex(3, -1)});
  const auto r = readout_average(z);
  EXPECT_EQ(r[0], Complex(1.0, 0.0));
  EXPECT_EQ(r[1], Complex(1.0, 0.0));
  Rng rng(11);
  const auto z1 = kvit::testing::random_tensor({5}, rng, false), z2 = kvit::testing::random_tensor({5}, rng, false);
  const auto lhs = readout_average(add(z1, z2));
  const auto rhs = add(readout_average(z1), readout_average(z2));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(lhs[i].real(), rhs[i].real(), 1e-15);
}
