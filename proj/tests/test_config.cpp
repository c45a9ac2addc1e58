#include <catch2/catch_amalgamated.hpp>

#include "cmcrl/config.hpp"

using namespace cmcrl;

TEST_CASE("an empty config yields the stock defaults") {
  ConfigFile cf;
  const auto rc = run_config_from(cf);
  REQUIRE(rc.epochs == 50);
  REQUIRE(rc.iters_per_epoch == 100);
  REQUIRE(rc.batch_size == 16);
  REQUIRE(rc.instances_per_cluster == 4);
  REQUIRE(rc.learning_rate == Catch::Approx(0.35));
  REQUIRE(rc.weight_decay == Catch::Approx(5e-4));
  REQUIRE(rc.image_size == 256);
  REQUIRE(rc.encoder.embedding_dim == 512);
  REQUIRE(rc.loss.temperature == Catch::Approx(0.05));
  REQUIRE(rc.memory_alpha == Catch::Approx(0.1));
  REQUIRE(rc.cluster.eps == Catch::Approx(0.4));
  REQUIRE(rc.cluster.k1 == 30);
  REQUIRE(rc.cluster.k2 == 6);
  REQUIRE(rc.augment.rhf_probability == Catch::Approx(0.5));
  REQUIRE(rc.augment.pad_pixels == 10);
  REQUIRE(rc.augment.re_fill[0] == Catch::Approx(0.485f));
  REQUIRE(rc.augment.re_fill[1] == Catch::Approx(0.456f));
  REQUIRE(rc.augment.re_fill[2] == Catch::Approx(0.406f));
  REQUIRE(rc.encoder.layer_set == std::vector<int>{1, 2, 3, 4});
}

TEST_CASE("unknown keys are rejected by name") {
  auto cf = ConfigFile::parse_string("[train]\nepochs = 5\ntypo_key = 1\n");
  try {
    run_config_from(cf);
    FAIL("expected config_error");
  } catch (const config_error& e) {
    REQUIRE(std::string(e.what()).find("typo_key") != std::string::npos);
    REQUIRE(std::string(e.what()).find("train") != std::string::npos);
  }
}

TEST_CASE("section values parse into the embedded configs") {
  auto cf = ConfigFile::parse_string(
      "[model]\n"
      "stage_widths = 8,16,32,64\n"
      "embedding_dim = 64\n"
      "use_ibn = true\n"
      "projection = linear\n"
      "layer_set = 4\n"
      "[cluster]\n"
      "eps = 0.55\n"
      "cluster_on = concat\n"
      "[memory]\n"
      "update = hardest\n"
      "[loss]\n"
      "layer_mode = mean\n"
      "[augment]\n"
      "enabled = RC,RHF\n");
  const auto rc = run_config_from(cf);
  REQUIRE(rc.encoder.stage_widths == std::array<std::size_t, 4>{8, 16, 32, 64});
  REQUIRE(rc.encoder.embedding_dim == 64);
  REQUIRE(rc.encoder.use_ibn);
  REQUIRE(rc.encoder.projection == Projection::linear);
  REQUIRE(rc.encoder.layer_set == std::vector<int>{4});
  REQUIRE(rc.loss.layer_set == std::vector<int>{4});  // mirrors the model
  REQUIRE(rc.cluster.eps == Catch::Approx(0.55));
  REQUIRE(rc.cluster.cluster_on_concat);
  REQUIRE(rc.memory_update == MemoryUpdate::hardest);
  REQUIRE(rc.loss.mode == LayerMode::mean);
  REQUIRE(rc.augment.rc);
  REQUIRE(rc.augment.rhf);
  REQUIRE_FALSE(rc.augment.re);
  REQUIRE_FALSE(rc.augment.pad);
}

TEST_CASE("augment enabled=none disables everything") {
  auto cf = ConfigFile::parse_string("[augment]\nenabled = none\n");
  const auto rc = run_config_from(cf);
  REQUIRE(rc.augment.enabled_string() == "none");
}

TEST_CASE("invalid values carry the offending key") {
  auto a = ConfigFile::parse_string("[train]\nepochs = soon\n");
  REQUIRE_THROWS_WITH(run_config_from(a), Catch::Matchers::ContainsSubstring("train.epochs"));
  auto b = ConfigFile::parse_string("[model]\nprojection = fancy\n");
  REQUIRE_THROWS_AS(run_config_from(b), config_error);
  auto c = ConfigFile::parse_string("[augment]\nenabled = RC,XY\n");
  REQUIRE_THROWS_AS(run_config_from(c), config_error);
}

TEST_CASE("batch size must be divisible by instances per cluster") {
  auto cf = ConfigFile::parse_string("[train]\nbatch_size = 10\ninstances_per_cluster = 4\n");
  REQUIRE_THROWS_AS(run_config_from(cf), config_error);
}

TEST_CASE("malformed config text is rejected with a location") {
  REQUIRE_THROWS_WITH(ConfigFile::parse_string("[train\nepochs = 5\n", "test.ini"),
                      Catch::Matchers::ContainsSubstring("test.ini:1"));
  REQUIRE_THROWS_WITH(ConfigFile::parse_string("[train]\nnonsense line\n", "test.ini"),
                      Catch::Matchers::ContainsSubstring("test.ini:2"));
}

TEST_CASE("comments and blank lines are ignored") {
  auto cf = ConfigFile::parse_string("# comment\n\n[train]\n; other comment\nepochs = 3\n");
  const auto rc = run_config_from(cf);
  REQUIRE(rc.epochs == 3);
}

TEST_CASE("the effective config echo parses back to the same values") {
  auto cf = ConfigFile::parse_string(
      "[train]\nepochs = 7\nlearning_rate = 0.005\nseed = 42\n"
      "[model]\nembedding_dim = 64\nlayer_set = 1,3\n"
      "[data]\nimage_size = 32\n");
  const auto rc = run_config_from(cf);
  auto cf2 = ConfigFile::parse_string(echo_config(rc));
  const auto rc2 = run_config_from(cf2);
  REQUIRE(rc2.epochs == rc.epochs);
  REQUIRE(rc2.learning_rate == rc.learning_rate);
  REQUIRE(rc2.seed == rc.seed);
  REQUIRE(rc2.encoder.embedding_dim == rc.encoder.embedding_dim);
  REQUIRE(rc2.encoder.layer_set == rc.encoder.layer_set);
  REQUIRE(rc2.image_size == rc.image_size);
  REQUIRE(rc2.augment.re_fill == rc.augment.re_fill);
  REQUIRE(rc2.split.pretrain_fraction == rc.split.pretrain_fraction);
}

TEST_CASE("set overrides an existing key in place") {
  auto cf = ConfigFile::parse_string("[train]\nepochs = 5\n");
  cf.set("train", "epochs", "9");
  cf.set("train", "seed", "4");
  const auto rc = run_config_from(cf);
  REQUIRE(rc.epochs == 9);
  REQUIRE(rc.seed == 4);
}
