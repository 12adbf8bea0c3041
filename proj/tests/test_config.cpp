#include <gtest/gtest.h>

#include <fstream>

#include "r2d2/config.hpp"
#include "r2d2/errors.hpp"
#include "r2d2/hashing.hpp"
#include "test_util.hpp"

using namespace r2d2;
using nlohmann::json;

TEST(RunConfig, DefaultsDescribeTheDeskRun) {
  const RunConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.grid.tile_size, 64);
  EXPECT_EQ(c.grid.grid_rows, 4);
  EXPECT_EQ(c.data.n_pairs, 200);
  EXPECT_EQ(c.training.epochs, 10);
  EXPECT_EQ(c.training.batch_size, 3);
  EXPECT_EQ(c.training.d1_updates_per_g, 3);
  EXPECT_EQ(c.training.d2_updates_per_g, 1);
  EXPECT_EQ(c.training.learning_rate, 2e-4);
  EXPECT_EQ(c.training.beta1, 0.5);
  EXPECT_EQ(c.training.prob_epsilon, 1e-7);
  EXPECT_EQ(c.training.loss_form, LossForm::Standard);
  EXPECT_EQ(c.layout().num_classes, 4);
}

TEST(RunConfig, JsonRoundTripIsExact) {
  RunConfig c;
  c.training.loss_form = LossForm::Literal;
  c.training.condition_source = ConditionSource::Generated;
  c.training.gan_weight = 0.25;
  c.generator.norm = NormKind::Instance;
  c.terrain.classes[1].ripple_orientation = 0.123456789;
  c.benchmark.presets[1].lines_per_second = 7.5;
  c.atr.seeds = {4, 5};
  c.grid = TileGridSpec::make(32, 3, 5, 1, 3);
  const RunConfig back = run_config_from_json(run_config_to_json(c));
  EXPECT_TRUE(back == c);
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_NE(config_hash(back), config_hash(RunConfig{}));
}

TEST(RunConfig, MissingFieldsTakeDefaults) {
  const RunConfig c = run_config_from_json(json::parse(R"({"training": {"epochs": 2}})"));
  EXPECT_EQ(c.training.epochs, 2);
  EXPECT_EQ(c.training.batch_size, 3);
  EXPECT_TRUE(c.terrain == TerrainParams::defaults());
}

TEST(RunConfig, UnknownKeysAreRejected) {
  EXPECT_THROW(run_config_from_json(json::parse(R"({"trainig": {}})")), ConfigError);
  EXPECT_THROW(run_config_from_json(json::parse(R"({"training": {"epoch": 3}})")), ConfigError);
  EXPECT_THROW(run_config_from_json(json::parse(R"({"training": {"epochs": "ten"}})")),
               ConfigError);
  EXPECT_THROW(run_config_from_json(json::parse(R"({"training": {"loss_form": "odd"}})")),
               ConfigError);
}

TEST(RunConfig, ValidationCatchesInconsistency) {
  RunConfig c;
  c.grid = TileGridSpec::make(40, 2, 2);
  c.generator.downsamples = 4;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(RunConfig, FileRoundTrip) {
  test_util::TempDir dir;
  RunConfig c;
  c.data.seed = 99;
  save_run_config(c, dir.path / "c.json");
  EXPECT_TRUE(load_run_config(dir.path / "c.json") == c);
  {
    std::ofstream f(dir.path / "bad.json");
    f << "{ not json";
  }
  EXPECT_THROW(load_run_config(dir.path / "bad.json"), ConfigError);
  EXPECT_ANY_THROW(load_run_config(dir.path / "missing.json"));
}

TEST(Hashing, DerivedSeedsAreStableAndDistinct) {
  EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 2));
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 2));
  EXPECT_EQ(sha256_hex(std::string_view("abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
