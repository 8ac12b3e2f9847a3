#include <doctest.h>

#include "fedmp/errors.hpp"
#include "fedmp/strategies.hpp"
#include "oracles.hpp"

using namespace fedmp;

namespace {

ParameterSet scalar(double v) {
  ParameterSet s;
  s.add("w", Tensor({1}, {v}));
  return s;
}

std::vector<ClientUpdate> updates_of(const std::vector<ParameterSet>& sets, const std::vector<std::size_t>& n) {
  std::vector<ClientUpdate> out;
  for (std::size_t i = 0; i < sets.size(); ++i) out.push_back({i, n[i], sets[i], 0.0});
  return out;
}

StrategyConfig config_for(StrategyKind kind) {
  StrategyConfig c;
  c.kind = kind;
  return c;
}

}  // namespace

TEST_CASE("strategy names round-trip") {
  for (auto k : kAllStrategies) CHECK(parse_strategy_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_strategy_kind("fedsgd"), ConfigError);
}

TEST_CASE("config validation and defaults") {
  StrategyConfig c;
  CHECK(c.effective_server_lr() == 1.0);
  c.kind = StrategyKind::fedyogi;
  CHECK(c.effective_server_lr() == 0.01);
  c.server_lr = 0.5;
  CHECK(c.effective_server_lr() == 0.5);
  c.beta = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.beta = 0.5;
  c.tau = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);

  CHECK(requires_initial_parameters(StrategyKind::fedavgm));
  CHECK(requires_initial_parameters(StrategyKind::fedopt));
  CHECK(requires_initial_parameters(StrategyKind::fedyogi));
  CHECK_FALSE(requires_initial_parameters(StrategyKind::fedavg));
}

TEST_CASE("fedavg arithmetic") {
  const auto state = ServerState::initial(scalar(0.0));
  const auto next = aggregate(config_for(StrategyKind::fedavg), state, updates_of({scalar(0), scalar(4)}, {1, 3}));
  CHECK(next.global == scalar(3.0));
  CHECK(next.round == 1);
}

TEST_CASE("fedmedian arithmetic and robustness") {
  const auto state = ServerState::initial(scalar(0.0));
  auto cfg = config_for(StrategyKind::fedmedian);
  CHECK(aggregate(cfg, state, updates_of({scalar(1), scalar(2), scalar(9)}, {1, 1, 1})).global == scalar(2));
  CHECK(aggregate(cfg, state, updates_of({scalar(5), scalar(5), scalar(1e12)}, {1, 1, 1})).global == scalar(5));
}

TEST_CASE("fedyogi scalar trace") {
  auto cfg = config_for(StrategyKind::fedyogi);
  const auto state = ServerState::initial(scalar(0.0));
  const auto next = aggregate(cfg, state, updates_of({scalar(1.0)}, {1}));
  CHECK(next.first_moment.tensor(0)[0] == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(next.second_moment.tensor(0)[0] == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(next.global.tensor(0)[0] == doctest::Approx(0.01 * 0.1 / (0.1 + 0.001)).epsilon(1e-15));
  CHECK(std::abs(next.global.tensor(0)[0] - 0.0099010) < 5e-8);
}

TEST_CASE("fedavgm without momentum is fedavg, bitwise") {
  std::mt19937_64 rng(2);
  auto cfg = config_for(StrategyKind::fedavgm);
  cfg.beta = 0.0;
  cfg.server_lr = 1.0;
  for (int t = 0; t < 50; ++t) {
    const auto shape = oracle::random_two_layer_shape(rng);
    const auto state = ServerState::initial(oracle::random_set(shape, rng));
    std::vector<ParameterSet> sets;
    std::vector<std::size_t> n;
    for (int i = 0; i < 2 + t % 4; ++i) {
      sets.push_back(oracle::random_set(shape, rng));
      n.push_back(1 + rng() % 100);
    }
    const auto u = updates_of(sets, n);
    CHECK(aggregate(cfg, state, u).global == aggregate(config_for(StrategyKind::fedavg), state, u).global);
  }
}

TEST_CASE("fedopt with unit step is the unweighted mean") {
  std::mt19937_64 rng(4);
  const auto shape = oracle::random_two_layer_shape(rng);
  const auto state = ServerState::initial(oracle::random_set(shape, rng));
  std::vector<ParameterSet> sets;
  std::vector<oracle::Vec> flat;
  for (int i = 0; i < 4; ++i) {
    sets.push_back(oracle::random_set(shape, rng));
    flat.push_back(oracle::flatten(sets.back()));
  }
  const auto got = aggregate(config_for(StrategyKind::fedopt), state, updates_of(sets, {5, 1, 9, 2})).global;
  CHECK(oracle::relative_error(oracle::flatten(got), oracle::weighted_mean(flat, {1, 1, 1, 1})) < 1e-12);
}

TEST_CASE("fedavg is invariant to uniform scaling of sample counts") {
  std::mt19937_64 rng(6);
  const auto shape = oracle::random_two_layer_shape(rng);
  const auto state = ServerState::initial(oracle::random_set(shape, rng));
  std::vector<ParameterSet> sets{oracle::random_set(shape, rng), oracle::random_set(shape, rng),
                                 oracle::random_set(shape, rng)};
  const auto a = aggregate(config_for(StrategyKind::fedavg), state, updates_of(sets, {2, 3, 7})).global;
  const auto b = aggregate(config_for(StrategyKind::fedavg), state, updates_of(sets, {20, 30, 70})).global;
  CHECK(oracle::relative_error(oracle::flatten(a), oracle::flatten(b)) < 1e-14);
}

TEST_CASE("every strategy matches the reference over several rounds") {
  std::mt19937_64 rng(8);
  for (auto kind : kAllStrategies) {
    CAPTURE(to_string(kind));
    auto cfg = config_for(kind);
    if (kind == StrategyKind::fedavgm) cfg.server_lr = 0.7;
    for (int t = 0; t < 20; ++t) {
      const auto shape = oracle::random_two_layer_shape(rng);
      auto state = ServerState::initial(oracle::random_set(shape, rng));
      oracle::StrategyState ref{oracle::flatten(state.global), {}, {}, {}};
      ref.momentum = ref.m = ref.v = oracle::Vec(ref.global.size(), 0.0);
      for (int round = 0; round < 3; ++round) {
        std::vector<ParameterSet> sets;
        std::vector<oracle::Vec> flat;
        std::vector<std::size_t> n;
        oracle::Vec nd;
        for (int i = 0; i < 2 + t % 4; ++i) {
          sets.push_back(oracle::random_set(shape, rng));
          flat.push_back(oracle::flatten(sets.back()));
          n.push_back(1 + rng() % 50);
          nd.push_back(static_cast<double>(n.back()));
        }
        state = aggregate(cfg, state, updates_of(sets, n));
        ref = oracle::reference_aggregate(cfg, ref, flat, nd);
        CHECK(oracle::relative_error(oracle::flatten(state.global), ref.global) < 1e-10);
        CHECK(state.round == static_cast<std::size_t>(round + 1));
      }
    }
  }
}

TEST_CASE("identical clients leave the global model unchanged") {
  std::mt19937_64 rng(10);
  for (auto kind : kAllStrategies) {
    const auto global = oracle::random_set({{4, 3}, {3}}, rng);
    const auto state = ServerState::initial(global);
    const auto next = aggregate(config_for(kind), state, updates_of({global, global, global}, {3, 8, 1}));
    CHECK_MESSAGE(next.global == global, to_string(kind));
  }
}

TEST_CASE("mean-type strategies stay in the convex hull") {
  std::mt19937_64 rng(12);
  for (auto kind : {StrategyKind::fedavg, StrategyKind::fedmedian, StrategyKind::fedprox}) {
    for (int t = 0; t < 30; ++t) {
      const auto state = ServerState::initial(oracle::random_set({{2, 2}, {2}}, rng));
      std::vector<ParameterSet> sets;
      for (int i = 0; i < 3; ++i) sets.push_back(oracle::random_set({{2, 2}, {2}}, rng));
      const auto out = oracle::flatten(aggregate(config_for(kind), state, updates_of(sets, {1, 4, 2})).global);
      for (std::size_t i = 0; i < out.size(); ++i) {
        double lo = INFINITY, hi = -INFINITY;
        for (const auto& s : sets) {
          lo = std::min(lo, oracle::flatten(s)[i]);
          hi = std::max(hi, oracle::flatten(s)[i]);
        }
        CHECK(out[i] >= lo - 1e-12);
        CHECK(out[i] <= hi + 1e-12);
      }
    }
  }
}

TEST_CASE("update order does not matter") {
  std::mt19937_64 rng(14);
  const auto state = ServerState::initial(oracle::random_set({{3, 2}, {2}}, rng));
  auto u = updates_of({oracle::random_set({{3, 2}, {2}}, rng), oracle::random_set({{3, 2}, {2}}, rng),
                       oracle::random_set({{3, 2}, {2}}, rng)},
                      {2, 5, 3});
  for (auto kind : kAllStrategies) {
    const auto a = aggregate(config_for(kind), state, u);
    auto r = u;
    std::reverse(r.begin(), r.end());
    CHECK(aggregate(config_for(kind), state, r) == a);
  }
}

TEST_CASE("aggregate errors") {
  const auto state = ServerState::initial(scalar(0));
  CHECK_THROWS(aggregate(config_for(StrategyKind::fedavg), state, std::vector<ClientUpdate>{}));
  ParameterSet wide;
  wide.add("w", Tensor({2}));
  CHECK_THROWS_AS(aggregate(config_for(StrategyKind::fedavg), state, updates_of({wide}, {1})), ShapeMismatch);
  CHECK_THROWS(aggregate(config_for(StrategyKind::fedavg), state, updates_of({scalar(1)}, {0})));
}

TEST_CASE("pretrain_initial") {
  const auto validation = synth_blobs(3, 4, 30, 0.5, 2);
  ModelSpec spec{4, {6}, 3};
  TrainConfig cfg;
  cfg.seed = 3;
  cfg.epochs = 0;
  CHECK(pretrain_initial(spec, validation, cfg) == init_params(spec, 3));
  cfg.epochs = 10;
  cfg.learning_rate = 0.01;
  const auto p = pretrain_initial(spec, validation, cfg);
  CHECK(pretrain_initial(spec, validation, cfg) == p);
  CHECK(evaluate(p, validation).loss < evaluate(init_params(spec, 3), validation).loss);
  CHECK_THROWS(pretrain_initial(spec, LabeledDataset(4, 3), cfg));
}
