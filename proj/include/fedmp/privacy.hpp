#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "fedmp/params.hpp"
#include "fedmp/strategies.hpp"

namespace fedmp {

enum class PrivacyMode { none, global_dp, metric };

inline constexpr PrivacyMode kAllPrivacyModes[] = {PrivacyMode::none, PrivacyMode::global_dp, PrivacyMode::metric};

std::string to_string(PrivacyMode mode);
PrivacyMode parse_privacy_mode(const std::string& name);

struct PrivacyConfig {
  PrivacyMode mode = PrivacyMode::none;
  double noise_multiplier = 0.01;
  double clipping_norm = 5.0;
  std::size_t sampled_clients = 1;
  std::uint64_t noise_seed = 0;

  void validate() const;
};

/// Per-round diagnostics of the privacy wrapper.
struct RoundPrivacyRecord {
  std::size_t round = 0;
  double distance = 1.0;  // d^(n) in metric mode, 1 otherwise
  double sigma = 0.0;
  std::optional<double> ctilde;  // first round only
  bool warning = false;          // metric mode with zero distance

  friend bool operator==(const RoundPrivacyRecord&, const RoundPrivacyRecord&) = default;
};

/// global + delta, with delta = client - global rescaled to l2 norm
/// clipping_norm when it is longer. Returns client unchanged otherwise.
ParameterSet clip_update(const ParameterSet& global, const ParameterSet& client, double clipping_norm);

/// Largest pairwise l2 distance between the sets (the clipping-norm heuristic).
double compute_ctilde(std::span<const ParameterSet> sets);

/// Largest pairwise per-layer-mean Frobenius distance.
double compute_distance(std::span<const ParameterSet> sets);

/// none: 0; global_dp: n_eps * C / n_c; metric: n_eps * C / (n_c * distance).
double noise_stddev(const PrivacyConfig& config, double distance = 1.0);

/// Adds independent N(0, sigma^2) draws to every coordinate. sigma == 0
/// returns the input untouched.
ParameterSet add_gaussian_noise(const ParameterSet& params, double sigma, std::uint64_t seed);

/// Seed of the server noise stream for one round.
std::uint64_t noise_round_seed(std::uint64_t noise_seed, std::size_t round);

struct PrivatizedRound {
  ServerState state;
  RoundPrivacyRecord record;
};

struct PrivacyHooks {
  /// Replaces the measured distance (metric mode only).
  std::optional<double> distance_override;
};

/// One server round under the privacy wrapper:
///   1. clip every client update to clipping_norm around state.global,
///   2. in metric mode, measure the distance on the clipped parameters,
///   3. run the strategy,
///   4. add Gaussian noise to the new global parameters.
/// Mode none skips 1, 2 and 4. The round number used for the record and the
/// noise stream is state.round + 1.
PrivatizedRound privatize_round(const PrivacyConfig& config, const StrategyConfig& strategy,
                                const ServerState& state, std::span<const ClientUpdate> updates,
                                const PrivacyHooks& hooks = {});

}  // namespace fedmp
