#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedmp/data.hpp"
#include "fedmp/model.hpp"
#include "fedmp/params.hpp"

namespace fedmp {

enum class StrategyKind { fedavg, fedavgm, fedmedian, fedprox, fedopt, fedyogi };

inline constexpr StrategyKind kAllStrategies[] = {StrategyKind::fedavg,  StrategyKind::fedavgm,
                                                  StrategyKind::fedmedian, StrategyKind::fedprox,
                                                  StrategyKind::fedopt,  StrategyKind::fedyogi};

std::string to_string(StrategyKind kind);
/// Throws ConfigError on an unknown name.
StrategyKind parse_strategy_kind(const std::string& name);

struct ClientUpdate {
  std::size_t client_id = 0;
  std::size_t sample_count = 1;
  ParameterSet params;
  double train_loss = 0.0;
};

struct StrategyConfig {
  StrategyKind kind = StrategyKind::fedavg;
  double beta = 0.9;                    // FedAvgM momentum
  std::optional<double> server_lr;      // unset: default_server_lr(kind)
  double prox_mu = 0.1;                 // FedProx, applied by clients
  double beta1 = 0.9;                   // FedYogi
  double beta2 = 0.99;
  double tau = 1e-3;

  double effective_server_lr() const;
  void validate() const;
};

double default_server_lr(StrategyKind kind);

/// Strategies that start from parameters pretrained on the server's
/// validation split rather than a raw initialization.
bool requires_initial_parameters(StrategyKind kind);

struct ServerState {
  std::size_t round = 0;
  ParameterSet global;
  ParameterSet momentum;       // FedAvgM
  ParameterSet first_moment;   // FedYogi
  ParameterSet second_moment;  // FedYogi

  /// Round 0 state with zeroed optimizer buffers.
  static ServerState initial(ParameterSet global);

  friend bool operator==(const ServerState&, const ServerState&) = default;
};

/// One server aggregation step. Updates are consumed in ascending client_id
/// order regardless of the order given. The returned state carries the new
/// global parameters and round + 1.
ServerState aggregate(const StrategyConfig& config, const ServerState& state,
                      std::span<const ClientUpdate> updates);

/// init_params(spec, config.seed) followed by train_local on the validation split.
ParameterSet pretrain_initial(const ModelSpec& spec, const LabeledDataset& validation, const TrainConfig& config);

}  // namespace fedmp
