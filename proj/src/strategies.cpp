#include "fedmp/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedmp/format.hpp"

namespace fedmp {

namespace {

// Pseudo-gradient: unweighted mean of (w_i - w).
ParameterSet mean_delta(const ParameterSet& global, std::span<const ParameterSet> clients) {
  ParameterSet delta = global.zeros_like();
  const double inv = 1.0 / static_cast<double>(clients.size());
  for (const auto& c : clients) {
    for (std::size_t l = 0; l < delta.num_layers(); ++l) {
      auto d = delta.tensor(l).values();
      auto w = global.tensor(l).values();
      auto x = c.tensor(l).values();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += (x[i] - w[i]) * inv;
    }
  }
  return delta;
}

double sign(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace

std::string to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::fedavg: return "fedavg";
    case StrategyKind::fedavgm: return "fedavgm";
    case StrategyKind::fedmedian: return "fedmedian";
    case StrategyKind::fedprox: return "fedprox";
    case StrategyKind::fedopt: return "fedopt";
    case StrategyKind::fedyogi: return "fedyogi";
  }
  return "unknown";
}

StrategyKind parse_strategy_kind(const std::string& name) {
  for (auto kind : kAllStrategies) {
    if (to_string(kind) == name) return kind;
  }
  throw ConfigError("unknown strategy kind '" + name +
                    "' (expected fedavg, fedavgm, fedmedian, fedprox, fedopt or fedyogi)");
}

double default_server_lr(StrategyKind kind) {
  return kind == StrategyKind::fedyogi ? 0.01 : 1.0;
}

bool requires_initial_parameters(StrategyKind kind) {
  return kind == StrategyKind::fedavgm || kind == StrategyKind::fedopt || kind == StrategyKind::fedyogi;
}

double StrategyConfig::effective_server_lr() const { return server_lr.value_or(default_server_lr(kind)); }

void StrategyConfig::validate() const {
  if (!(beta >= 0.0 && beta < 1.0)) throw ConfigError("strategy.beta must lie in [0, 1), got " + format_double(beta));
  if (!(effective_server_lr() > 0.0)) throw ConfigError("strategy.server_lr must be positive");
  if (!(prox_mu >= 0.0)) throw ConfigError("strategy.prox_mu must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("strategy.beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("strategy.beta2 must lie in [0, 1)");
  if (!(tau > 0.0)) throw ConfigError("strategy.tau must be positive");
}

ServerState ServerState::initial(ParameterSet global) {
  ServerState s;
  s.momentum = global.zeros_like();
  s.first_moment = global.zeros_like();
  s.second_moment = global.zeros_like();
  s.global = std::move(global);
  return s;
}

ServerState aggregate(const StrategyConfig& config, const ServerState& state, std::span<const ClientUpdate> updates) {
  if (updates.empty()) throw std::invalid_argument("aggregate: no client updates");
  config.validate();

  std::vector<const ClientUpdate*> ordered;
  for (const auto& u : updates) {
    if (u.sample_count == 0) throw std::invalid_argument("aggregate: client sample_count must be positive");
    require_compatible(state.global, u.params);
    ordered.push_back(&u);
  }
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const ClientUpdate* a, const ClientUpdate* b) { return a->client_id < b->client_id; });
  std::vector<ParameterSet> params;
  std::vector<double> weights;
  for (const auto* u : ordered) {
    params.push_back(u->params);
    weights.push_back(static_cast<double>(u->sample_count));
  }

  ServerState next = state;
  ++next.round;
  const double lr = config.effective_server_lr();
  switch (config.kind) {
    case StrategyKind::fedavg:
    case StrategyKind::fedprox:
      next.global = weighted_mean(params, weights);
      break;

    case StrategyKind::fedmedian:
      next.global = coordinate_median(params);
      break;

    case StrategyKind::fedavgm: {
      // v' = beta v + (w - avg); w' = w - lr v', evaluated as
      // avg + (1 - lr)(w - avg) - lr beta v so that beta = 0, lr = 1 is FedAvg exactly.
      const auto avg = weighted_mean(params, weights);
      const auto step = axpy(state.global, avg, 1.0, -1.0);
      require_compatible(state.global, state.momentum);
      next.momentum = axpy(state.momentum, step, config.beta, 1.0);
      next.global = avg;
      add_scaled(next.global, step, 1.0 - lr);
      add_scaled(next.global, state.momentum, -lr * config.beta);
      break;
    }

    case StrategyKind::fedopt: {
      const auto delta = mean_delta(state.global, params);
      next.global = state.global;
      add_scaled(next.global, delta, lr);
      break;
    }

    case StrategyKind::fedyogi: {
      require_compatible(state.global, state.first_moment);
      require_compatible(state.global, state.second_moment);
      const auto delta = mean_delta(state.global, params);
      for (std::size_t l = 0; l < next.global.num_layers(); ++l) {
        auto w = next.global.tensor(l).values();
        auto m = next.first_moment.tensor(l).values();
        auto v = next.second_moment.tensor(l).values();
        auto d = delta.tensor(l).values();
        for (std::size_t i = 0; i < w.size(); ++i) {
          const double d2 = d[i] * d[i];
          m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * d[i];
          v[i] = v[i] - (1.0 - config.beta2) * d2 * sign(v[i] - d2);
          w[i] += lr * m[i] / (std::sqrt(v[i]) + config.tau);
        }
      }
      break;
    }
  }
  if (!next.global.all_finite()) throw std::runtime_error("aggregate: non-finite global parameters");
  return next;
}

ParameterSet pretrain_initial(const ModelSpec& spec, const LabeledDataset& validation, const TrainConfig& config) {
  if (validation.empty()) throw std::invalid_argument("pretrain_initial: empty validation set");
  return train_local(init_params(spec, config.seed), validation, config);
}

}  // namespace fedmp
