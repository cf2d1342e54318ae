#include <fstream>

#include "doctest.h"
#include "rsfiqa/config.hpp"
#include "support.hpp"

using namespace rsfiqa;
using testing::code_of;

TEST_CASE("defaults") {
  const RunConfig c;
  CHECK(c.regions == 5);
  CHECK(c.lr == 3e-4);
  CHECK(c.weight_decay == 1e-5);
  CHECK(c.t_max == 50);
  CHECK(c.eta_min == 0.0);
  CHECK(c.peak_lr() == c.lr);
  CHECK(c.epochs == 200);
  CHECK(c.batch_size == 8);
  CHECK(c.split == std::array<double, 3>{0.7, 0.1, 0.2});
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("to_toml round trips every key") {
  RunConfig c;
  c.height = c.width = 32;
  c.channels = {4, 8, 16};
  c.regions = 6;
  c.lr = 1.0 / 3.0;
  c.eta_max = 0.1 + 0.2;
  c.split = {0.6, 0.2, 0.2};
  c.describer = "remote";
  c.rsa_bias = false;
  c.dims[2] = false;
  c.prompt_score = false;
  c.augment = false;
  c.seed = 18446744073709551615ull;
  const RunConfig back = parse_config(c.to_toml());
  CHECK(back == c);
  for (const auto& key : RunConfig::keys()) CHECK(c.to_toml().find(key.substr(key.find('.') + 1) + " = ") != std::string::npos);
}

TEST_CASE("parsing") {
  SUBCASE("sections, comments and arrays") {
    const RunConfig c = parse_config(R"(
# desk run
[model]
regions = 3   # L
channels = [4, 8]
height = 16
width = 16

[providers]
describer = "heuristic"  # not "remote # here"
)");
    CHECK(c.regions == 3);
    CHECK(c.channels == std::vector<std::size_t>{4, 8});
    CHECK(c.height == 16);
  }
  SUBCASE("unknown key") { CHECK(code_of([] { parse_config("[model]\nbogus = 1\n"); }) == ErrorCode::InvalidConfig); }
  SUBCASE("key outside a section") { CHECK(code_of([] { parse_config("regions = 3\n"); }) == ErrorCode::InvalidConfig); }
  SUBCASE("wrong value type") {
    CHECK(code_of([] { parse_config("[model]\nregions = \"five\"\n"); }) == ErrorCode::InvalidConfig);
    CHECK(code_of([] { parse_config("[toggles]\nmhf = 1\n"); }) == ErrorCode::InvalidConfig);
    CHECK(code_of([] { parse_config("[model]\nregions = -2\n"); }) == ErrorCode::InvalidConfig);
  }
  SUBCASE("missing file") { CHECK(code_of([] { load_config("/nonexistent/run.toml"); }) == ErrorCode::IoError); }
  SUBCASE("file on disk") {
    testing::TempDir dir("config");
    std::ofstream(dir / "run.toml") << "[train]\nepochs = 7\n";
    CHECK(load_config(dir / "run.toml").epochs == 7);
  }
}

TEST_CASE("overrides") {
  RunConfig c;
  apply_overrides(c, {"model.regions=4", "providers.describer=remote", "toggles.mllm=false", "train.split=[0.8,0,0.2]"});
  CHECK(c.regions == 4);
  CHECK(c.describer == "remote");
  CHECK_FALSE(c.mllm);
  CHECK(c.split[1] == 0.0);
  apply_overrides(c, {"model.regions=6", "model.regions=3"});
  CHECK(c.regions == 3);
  CHECK(code_of([&] { apply_overrides(c, {"model.regions"}); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([&] { apply_overrides(c, {"nope.key=1"}); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("validation") {
  auto invalid = [](const std::string& assignment) {
    RunConfig c;
    apply_overrides(c, {assignment});
    return code_of([&] { c.validate(); }) == ErrorCode::InvalidConfig;
  };
  CHECK(invalid("model.regions=1"));
  CHECK(invalid("train.split=[0.5, 0.1, 0.2]"));
  CHECK(invalid("model.height=60"));
  CHECK(invalid("model.channels=[8]"));
  CHECK(invalid("model.heads=3"));
  CHECK(invalid("train.batch_size=0"));
  CHECK(invalid("providers.segmenter=\"sam\""));
  CHECK(invalid("model.lambda_init=-0.5"));
}

TEST_CASE("description fields follow the toggles") {
  RunConfig c;
  apply_overrides(c, {"toggles.mllm=false", "prompt.level=false", "dims.blur=false"});
  const DescriptionFields f = c.description_fields();
  CHECK_FALSE(f.descriptions);
  CHECK_FALSE(f.level);
  CHECK(f.score);
  CHECK_FALSE(f.uses(Dimension::Blur));
  CHECK(f.uses(Dimension::Noise));
}
