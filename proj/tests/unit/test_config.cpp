#include "elsa/config.hpp"
#include "elsa/errors.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <fstream>
#include <set>

using namespace elsa;

namespace {

bool mentions(const std::vector<std::string>& v, const std::string& needle) {
  for (const auto& s : v) {
    if (s.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("presets validate") {
  CHECK_NOTHROW(preset("default").validate());
  CHECK_NOTHROW(preset("tiny").validate());
  CHECK_THROWS_AS(preset("huge"), ValidationError);
}

TEST_CASE("json round trip") {
  RunConfig c = preset("tiny");
  c.seed = 42;
  c.mode = Mode::Elsa;
  c.score = ScoreKind::Cosine;
  c.anomaly_classes = {1, 3};
  const RunConfig back = config_from_json(to_json(c));
  CHECK(to_json(back).dump() == to_json(c).dump());
}

TEST_CASE("unknown keys and wrong types are rejected") {
  nlohmann::json j = to_json(RunConfig{});
  j["pretrain"]["epoch"] = 3;
  CHECK_THROWS_AS(config_from_json(j), ValidationError);
  j = to_json(RunConfig{});
  j["objective"]["tau"] = "warm";
  CHECK_THROWS_AS(config_from_json(j), ValidationError);
  j = to_json(RunConfig{});
  j["mode"] = "elsa++";
  CHECK_THROWS_AS(config_from_json(j), ValidationError);
}

TEST_CASE("missing keys keep the base values") {
  const RunConfig base = preset("tiny");
  const RunConfig c = config_from_json(nlohmann::json{{"seed", 9}}, base);
  CHECK(c.seed == 9);
  CHECK(c.pretrain_epochs == base.pretrain_epochs);
}

TEST_CASE("overrides") {
  nlohmann::json tree = to_json(RunConfig{});
  apply_override(tree, "objective.tau=0.25");
  apply_override(tree, "mode=elsa");
  apply_override(tree, "scenario.anomaly_classes=[2,4]");
  const RunConfig c = config_from_json(tree);
  CHECK(c.tau == 0.25);
  CHECK(c.mode == Mode::Elsa);
  CHECK(c.anomaly_classes == std::vector<int>{2, 4});
  CHECK_THROWS_AS(apply_override(tree, "objective.tau"), UsageError);
}

TEST_CASE("violations list every broken constraint") {
  RunConfig c;
  c.scenario = Scenario::S1;
  c.gamma_p = 0.1;
  c.prototype_count = 1;
  c.shift_count = 1;
  const auto v = c.violations();
  CHECK(v.size() >= 3);
  CHECK(mentions(v, "s1"));
  CHECK(mentions(v, "prototypes.count"));
  CHECK(mentions(v, "shift"));
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("positivity check can be switched off for the prototype-count sweep") {
  RunConfig c;
  c.prototype_count = 1;
  CHECK_FALSE(c.violations().empty());
  c.enforce_positivity = false;
  CHECK(c.violations().empty());
}

TEST_CASE("mode defaults") {
  RunConfig c;
  CHECK(c.effective_refresh_period() == 3);
  CHECK(c.effective_shift_count() == c.shift_count);
  c.mode = Mode::Elsa;
  CHECK(c.effective_refresh_period() == 1);
  CHECK(c.effective_shift_count() == 1);
  c.refresh_period = 5;
  CHECK(c.effective_refresh_period() == 5);
  CHECK(mode_from_string("elsa+") == Mode::ElsaPlus);
  CHECK(mode_from_string(to_string(Mode::Elsa)) == Mode::Elsa);
}

TEST_CASE("config files") {
  test::TempDir dir("cfg");
  {
    std::ofstream out(dir / "c.json");
    out << R"({"objective": {"tau": 0.4}, "seed": 5})";
  }
  const RunConfig c = load_config_file((dir / "c.json").string(), preset("tiny"));
  CHECK(c.tau == 0.4);
  CHECK(c.seed == 5);
  CHECK(c.embed == preset("tiny").embed);
  CHECK_THROWS_AS(load_config_file((dir / "none.json").string(), RunConfig{}), IoError);
}

TEST_CASE("derived seeds are distinct per stream and master") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t m = 0; m < 10; ++m) {
    for (std::uint64_t s = 0; s < 20; ++s) seen.insert(derive_seed(m, s));
  }
  CHECK(seen.size() == 200);
  CHECK(derive_seed(3, 4) == derive_seed(3, 4));
}

}
