#include "fedmp/privacy.hpp"

#include <algorithm>
#include <random>
#include <vector>

#include "fedmp/format.hpp"
#include "fedmp/seed.hpp"

namespace fedmp {

namespace {

template <typename Distance>
double max_pairwise(std::span<const ParameterSet> sets, Distance&& distance) {
  if (sets.size() < 2) throw std::invalid_argument("pairwise distance needs at least two parameter sets");
  require_compatible(sets);
  double best = 0.0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    for (std::size_t j = i + 1; j < sets.size(); ++j) best = std::max(best, distance(sets[i], sets[j]));
  }
  return best;
}

}  // namespace

std::string to_string(PrivacyMode mode) {
  switch (mode) {
    case PrivacyMode::none: return "none";
    case PrivacyMode::global_dp: return "global_dp";
    case PrivacyMode::metric: return "metric";
  }
  return "unknown";
}

PrivacyMode parse_privacy_mode(const std::string& name) {
  for (auto mode : kAllPrivacyModes) {
    if (to_string(mode) == name) return mode;
  }
  throw ConfigError("unknown privacy mode '" + name + "' (expected none, global_dp or metric)");
}

void PrivacyConfig::validate() const {
  if (!(noise_multiplier >= 0.0)) throw ConfigError("privacy.noise_multiplier must be non-negative");
  if (!(clipping_norm > 0.0)) throw ConfigError("privacy.clipping_norm must be positive");
  if (sampled_clients == 0) throw ConfigError("privacy.sampled_clients must be positive");
}

ParameterSet clip_update(const ParameterSet& global, const ParameterSet& client, double clipping_norm) {
  if (!(clipping_norm > 0.0)) throw std::invalid_argument("clipping norm must be positive");
  auto delta = axpy(client, global, 1.0, -1.0);
  const double norm = l2_norm(delta);
  if (norm <= clipping_norm) return client;
  // Rounding in global + scale * delta can leave the re-measured delta a few
  // ulps above the bound; shrink until it holds so clipping is idempotent.
  double scale = clipping_norm / norm;
  for (double shrink = 0x1p-52;; shrink *= 2.0) {
    auto clipped = global;
    add_scaled(clipped, delta, scale);
    if (l2_norm(axpy(clipped, global, 1.0, -1.0)) <= clipping_norm) return clipped;
    scale *= 1.0 - std::min(shrink, 1.0);
  }
}

double compute_ctilde(std::span<const ParameterSet> sets) {
  return max_pairwise(sets, [](const ParameterSet& a, const ParameterSet& b) {
    return l2_norm(axpy(a, b, 1.0, -1.0));
  });
}

double compute_distance(std::span<const ParameterSet> sets) {
  return max_pairwise(sets, [](const ParameterSet& a, const ParameterSet& b) {
    return frobenius_per_layer_mean_distance(a, b);
  });
}

double noise_stddev(const PrivacyConfig& config, double distance) {
  const double base = config.noise_multiplier * config.clipping_norm / static_cast<double>(config.sampled_clients);
  switch (config.mode) {
    case PrivacyMode::none: return 0.0;
    case PrivacyMode::global_dp: return base;
    case PrivacyMode::metric:
      if (!(distance > 0.0)) {
        throw std::invalid_argument("metric privacy needs a positive distance, got " + format_double(distance));
      }
      return base / distance;
  }
  return 0.0;
}

ParameterSet add_gaussian_noise(const ParameterSet& params, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("noise sigma must be non-negative");
  if (sigma == 0.0) return params;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  auto out = params;
  for (std::size_t l = 0; l < out.num_layers(); ++l) {
    for (auto& v : out.tensor(l).values()) v += noise(rng);
  }
  return out;
}

std::uint64_t noise_round_seed(std::uint64_t noise_seed, std::size_t round) {
  return derive_seed(noise_seed, "noise", {round});
}

PrivatizedRound privatize_round(const PrivacyConfig& config, const StrategyConfig& strategy,
                                const ServerState& state, std::span<const ClientUpdate> updates,
                                const PrivacyHooks& hooks) {
  config.validate();
  if (updates.empty()) throw std::invalid_argument("privatize_round: no client updates");
  RoundPrivacyRecord record;
  record.round = state.round + 1;

  if (record.round == 1 && updates.size() >= 2) {
    std::vector<ParameterSet> raw;
    for (const auto& u : updates) raw.push_back(u.params);
    record.ctilde = compute_ctilde(raw);
  }

  if (config.mode == PrivacyMode::none) {
    return {aggregate(strategy, state, updates), record};
  }

  std::vector<ClientUpdate> clipped(updates.begin(), updates.end());
  for (auto& u : clipped) u.params = clip_update(state.global, u.params, config.clipping_norm);

  if (config.mode == PrivacyMode::metric) {
    if (hooks.distance_override) {
      record.distance = *hooks.distance_override;
    } else if (clipped.size() >= 2) {
      std::vector<ParameterSet> sets;
      for (const auto& u : clipped) sets.push_back(u.params);
      record.distance = compute_distance(sets);
    } else {
      record.distance = 0.0;
    }
  }

  auto next = aggregate(strategy, state, clipped);
  if (config.mode == PrivacyMode::metric && !(record.distance > 0.0)) {
    record.sigma = 0.0;
    record.warning = true;
  } else {
    record.sigma = noise_stddev(config, record.distance);
  }
  next.global = add_gaussian_noise(next.global, record.sigma, noise_round_seed(config.noise_seed, record.round));
  return {std::move(next), record};
}

}  // namespace fedmp
