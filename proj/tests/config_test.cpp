#include <gtest/gtest.h>

#include <cmath>

#include "kvit/config.hpp"
#include "kvit/error.hpp"
#include "kvit/kspace.hpp"

using namespace kvit;

TEST(Config, DefaultsAreProstatePreset) {
  const auto rc = parse_run_config("");
  EXPECT_EQ(rc.model, KvitConfig::prostate());
  EXPECT_DOUBLE_EQ(rc.train.optimizer.lr, 1e-4);
  EXPECT_EQ(rc.train.batch_size, 64u);
}

TEST(Config, PresetAppliesBeforeOtherKeys) {
  const auto rc = parse_run_config("model.layers = 3\npreset = tiny\n");
  KvitConfig expected = KvitConfig::tiny();
  expected.layers = 3;
  EXPECT_EQ(rc.model, expected);
}

TEST(Config, MilPresetUsesSingleBagBatches) {
  EXPECT_EQ(parse_run_config("preset = mil\n").train.batch_size, 1u);
  EXPECT_EQ(parse_run_config("train.batch_size = 4\npreset = mil\n").train.batch_size, 4u);
}

TEST(Config, CommentsAndBlankLines) {
  const auto rc = parse_run_config("# header\n\n  train.lr = 0.001   # inline\npreset=tiny\n");
  EXPECT_DOUBLE_EQ(rc.train.optimizer.lr, 1e-3);
}

TEST(Config, UnknownKeyReportsLine) {
  try {
    parse_run_config("preset = tiny\n\nmodel.layres = 2\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 3);
  }
}

TEST(Config, BadValueReportsLine) {
  try {
    parse_run_config("train.lr = fast\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 1);
  }
  EXPECT_THROW(parse_run_config("model.layers 2\n"), ConfigError);
  EXPECT_THROW(parse_run_config("model.phase_mode = polar\n"), ConfigError);
}

TEST(Config, InvalidCombinationRejected) {
  EXPECT_THROW(parse_run_config("preset = tiny\nmodel.heads = 3\n"), ConfigError);
}

TEST(Config, AutoRingPixels) {
  const auto rc = parse_run_config("preset = tiny\nmodel.ring_pixels = auto\n");
  EXPECT_TRUE(rc.auto_ring_pixels);
  const auto m = rc.resolve_model(32, 32);
  EXPECT_EQ(m.ring_pixels, 256u);
  EXPECT_EQ(rc.resolve_model(30, 30).ring_pixels, 225u);
  EXPECT_EQ(rc.resolve_model(5, 5).ring_pixels, 7u);
}

TEST(Config, ResolveRejectsRingMismatch) {
  const auto rc = parse_run_config("preset = tiny\n");
  EXPECT_NO_THROW(rc.resolve_model(4, 4));
  EXPECT_THROW(rc.resolve_model(8, 8), ConfigError);
}

TEST(Config, MaskRateUsesTableCenterFraction) {
  for (unsigned r : table_rates()) {
    const auto rc = parse_run_config("mask.rate = " + std::to_string(r) + "\n");
    EXPECT_EQ(rc.train.pre.mask.acceleration, r);
    EXPECT_DOUBLE_EQ(rc.train.pre.mask.center_fraction, table_center_fraction(r));
  }
}

TEST(Config, ClassWeightsList) {
  const auto rc = parse_run_config("train.class_weights = 1, 2.5\n");
  ASSERT_EQ(rc.train.class_weights.size(), 2u);
  EXPECT_DOUBLE_EQ(rc.train.class_weights[1], 2.5);
}

TEST(Config, MissingFileIsIoError) {
  EXPECT_THROW(load_run_config("/nonexistent/kvit.cfg"), IoError);
}
