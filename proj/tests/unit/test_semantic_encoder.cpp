#include <limits>
#include <random>
#include <set>

#include "doctest.h"
#include "rsfiqa/error.hpp"
#include "rsfiqa/numerics/gradcheck.hpp"
#include "rsfiqa/semantic_encoder.hpp"
#include "support.hpp"

using namespace rsfiqa;

namespace {

RegionDescriptionRecord uniform_record(double score) {
  RegionDescriptionRecord r;
  r.image_id = "img";
  r.content = "A parrot on a branch";
  for (Dimension d : kDimensions) r[d] = {level_for_score(score), score};
  return r;
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("compose_description") {
  SUBCASE("five scores in canonical order") {
    const std::string text = compose_description(uniform_record(70));
    CHECK(text ==
          "A parrot on a branch. color: good (70); noise: good (70); artifact: good (70); blur: good (70); "
          "overall: good (70).");
    CHECK(count(text, "(70)") == 5);
  }
  SUBCASE("deterministic and independent of how the record was filled") {
    RegionDescriptionRecord a = uniform_record(50), b;
    b.image_id = a.image_id;
    b.content = a.content;
    for (auto it = kDimensions.rbegin(); it != kDimensions.rend(); ++it) b[*it] = a[*it];
    a[Dimension::Noise] = {QualityLevel::Excellent, 91.4};
    b[Dimension::Noise] = {QualityLevel::Excellent, 91.4};
    CHECK(compose_description(a) == compose_description(b));
    CHECK(compose_description(a).find("noise: excellent (91)") != std::string::npos);
  }
  SUBCASE("field toggles") {
    const auto rec = uniform_record(30);
    DescriptionFields f;
    f.content = false;
    CHECK(compose_description(rec, f).rfind("color: poor (30)", 0) == 0);
    f = {};
    f.level = false;
    CHECK(compose_description(rec, f).find("color: 30;") != std::string::npos);
    f = {};
    f.score = false;
    CHECK(compose_description(rec, f).find("(30)") == std::string::npos);
    f = {};
    f.level = f.score = false;
    CHECK(compose_description(rec, f) == "A parrot on a branch.");
    f.content = false;
    CHECK(compose_description(rec, f) == "Answer.");
    f = {};
    f.descriptions = false;
    CHECK(compose_description(rec, f) == "Answer.");
  }
  SUBCASE("dimension toggles") {
    DescriptionFields f;
    f.dims = {true, true, true, true, false};
    const std::string text = compose_description(uniform_record(90), f);
    CHECK(text.find("overall") == std::string::npos);
    CHECK(count(text, "(90)") == 4);
    f.dims = {false, false, false, false, false};
    CHECK(compose_description(uniform_record(90), f) == "A parrot on a branch.");
  }
}

TEST_CASE("tokenizer and hashing") {
  CHECK(tokenize("A Parrot, on-a branch!! 70") == std::vector<std::string>{"a", "parrot", "on", "a", "branch", "70"});
  CHECK(tokenize(" ... ").empty());
  // FNV-1a 64 reference values
  CHECK(token_id("", std::numeric_limits<std::size_t>::max()) == 14695981039346656037ull % std::numeric_limits<std::size_t>::max());
  CHECK(token_id("a", 0xffffffffffffffffull) == 0xaf63dc4c8601ec8cull);
  CHECK(token_id("foobar", 0xffffffffffffffffull) == 0x85944171f73967e8ull);
  CHECK(token_id("parrot", 4096) < 4096);
  CHECK(token_id("parrot", 4096, 1) != token_id("parrot", 4096, 0));
}

TEST_CASE("hashed text encoder") {
  ParameterSet params;
  std::mt19937_64 rng(4);
  HashedTextEncoder enc({.max_tokens = 16, .dim = 32, .vocab = 4096}, params, rng);
  CHECK(params.get("text.embedding").shape() == Shape{4096, 32});

  SUBCASE("deterministic") { CHECK(enc.encode("sky is blue").tokens.value() == enc.encode("sky is blue").tokens.value()); }
  SUBCASE("truncation") {
    std::string text;
    for (int i = 0; i < 26; ++i) text += "w" + std::to_string(i) + " ";
    auto e = enc.encode(text);
    CHECK(e.valid_count == 16);
    CHECK(e.tokens.shape() == Shape{16, 32});
  }
  SUBCASE("single token") {
    auto e = enc.encode("Parrot");
    CHECK(e.valid_count == 1);
    const std::size_t id = token_id("parrot", 4096);
    for (std::size_t j = 0; j < 32; ++j) CHECK(e.tokens.value().at(0, j) == enc.table().value().at(id, j));
    for (std::size_t t = 1; t < 16; ++t)
      for (std::size_t j = 0; j < 32; ++j) CHECK(e.tokens.value().at(t, j) == 0.0);
  }
  SUBCASE("empty text") {
    try {
      enc.encode("  ,;  ");
      FAIL("expected EmptyText");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyText);
    }
  }
  SUBCASE("gradient w.r.t. the table") {
    Tensor probe = testing::random_tensor({16, 32}, rng);
    auto loss = [&] {
      auto e = enc.encode("the parrot is sharp and the background is blurry");
      return ops::sum(ops::mul(ops::sigmoid(e.tokens), Var::constant(probe)));
    };
    auto r = finite_diff_check(loss, params.entries(), {.epsilon = 1e-6, .samples_per_parameter = 64, .seed = 2});
    CHECK(r.max_relative_error < 1e-5);
  }
  SUBCASE("collision rate at the default vocabulary") {
    std::set<std::size_t> ids;
    const int n = 200;
    for (int i = 0; i < n; ++i) ids.insert(token_id("token" + std::to_string(i), 4096));
    CHECK(ids.size() >= n - 15);  // expected about n^2 / 2V = 5 collisions
  }
}
