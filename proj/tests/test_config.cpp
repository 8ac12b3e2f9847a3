#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fedmp/config.hpp"

using namespace fedmp;

TEST_CASE("parse tables, comments and quotes") {
  const auto v = ConfigValues::parse(R"(
# experiment
[strategy]
kind = fedyogi   # trailing comment
[data]
plan = "1,2; 3,4"
train_csv = "a#b.csv"
)");
  CHECK(v.get("strategy.kind") == "fedyogi");
  CHECK(v.get("data.plan") == "1,2; 3,4");
  CHECK(v.get("data.train_csv") == "a#b.csv");
  CHECK_FALSE(v.get("data.missing").has_value());
}

TEST_CASE("malformed config text") {
  CHECK_THROWS_AS(ConfigValues::parse("key = 1"), ConfigError);
  CHECK_THROWS_AS(ConfigValues::parse("[run\nrounds = 2"), ConfigError);
  CHECK_THROWS_AS(ConfigValues::parse("[run]\nrounds"), ConfigError);
  CHECK_THROWS_AS(ConfigValues::parse("[]\nx=1"), ConfigError);
  CHECK_THROWS_AS(ConfigValues::load("/nonexistent/fedmp.toml"), ConfigError);
}

TEST_CASE("defaults build a valid experiment") {
  const auto s = build_settings(ConfigValues{});
  const auto& e = s.experiment;
  CHECK(e.strategy.kind == StrategyKind::fedavg);
  CHECK(e.privacy.mode == PrivacyMode::none);
  CHECK(e.privacy.noise_multiplier == 0.01);
  CHECK(e.privacy.clipping_norm == 5.0);
  CHECK(e.rounds == 20);
  CHECK(e.train.epochs == 5);
  CHECK(e.train.batch_size == 32);
  CHECK(e.train.optimizer == OptimizerKind::adam);
  CHECK(e.num_clients == 4);
  CHECK(e.client_test_fraction == 0.2);
  CHECK(e.server_validation_fraction == 0.5);
  CHECK(e.model.hidden_dims == std::vector<std::size_t>{32});
  CHECK(e.shadow_fraction == 0.1);
  CHECK(e.attacker == 0);
  CHECK(e.target == 2);
  CHECK_FALSE(e.strategy.server_lr.has_value());
  CHECK_FALSE(e.init_seed.has_value());
  CHECK_FALSE(e.pretrain.has_value());
  CHECK(s.cia_modes.size() == 3);
  CHECK(s.last_k == 5);
}

TEST_CASE("every default key is accepted back") {
  ConfigValues v;
  for (const auto& [key, value] : config_defaults()) v.set(key, value);
  CHECK_NOTHROW(build_settings(v));
}

TEST_CASE("overrides replace file values") {
  auto v = ConfigValues::parse("[run]\nrounds = 3\n[strategy]\nkind = fedprox\nprox_mu = 0.5\n");
  v.apply_override("run.rounds=7");
  v.apply_override("model.hidden = 8,4");
  v.apply_override("strategy.server_lr=0.2");
  const auto s = build_settings(v);
  CHECK(s.experiment.rounds == 7);
  CHECK(s.experiment.strategy.kind == StrategyKind::fedprox);
  CHECK(s.experiment.strategy.prox_mu == 0.5);
  CHECK(s.experiment.strategy.server_lr == 0.2);
  CHECK(s.experiment.model.hidden_dims == std::vector<std::size_t>{8, 4});
  CHECK_THROWS_AS(v.apply_override("rounds"), ConfigError);
  CHECK_THROWS_AS(v.apply_override("rounds=3"), ConfigError);
}

TEST_CASE("bad values are configuration errors") {
  auto bad = [](const std::string& assignment) {
    ConfigValues v;
    v.apply_override(assignment);
    CHECK_THROWS_AS(build_settings(v), ConfigError);
  };
  bad("run.rounds=abc");
  bad("run.rounds=-1");
  bad("run.rounds=0");
  bad("run.optimizer=rmsprop");
  bad("strategy.kind=fedsgd");
  bad("privacy.mode=local");
  bad("privacy.noise_multiplier=-0.1");
  bad("privacy.clipping_norm=0");
  bad("data.csv_header=maybe");
  bad("model.hidden=8,0");
  bad("run.typo=1");
  bad("cia.attacker=0");
  bad("data.plan=1,2;3");
  bad("data.scenario=by_plan");
}

TEST_CASE("plan text round-trip") {
  const auto plan = parse_plan("280,16,881,615; 107,13,368,280;257,17,1054,720 ;80,3,263,166");
  REQUIRE(plan.num_clients() == 4);
  CHECK(plan.counts[3] == std::vector<std::size_t>{80, 3, 263, 166});
  CHECK(parse_plan(format_plan(plan)).counts == plan.counts);
  CHECK(parse_plan("").num_clients() == 0);
  CHECK_THROWS_AS(parse_plan("1,x"), ConfigError);
}

TEST_CASE("shipped configs parse") {
  const std::filesystem::path dir = FEDMP_CONFIG_DIR;
  std::size_t seen = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".toml") continue;
    CAPTURE(entry.path().string());
    CHECK_NOTHROW(build_settings(ConfigValues::load(entry.path().string())));
    ++seen;
  }
  CHECK(seen >= 3);
}
