#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fedmp/data.hpp"
#include "fedmp/model.hpp"
#include "fedmp/privacy.hpp"
#include "fedmp/strategies.hpp"

namespace fedmp {

enum class Scenario { homogeneous, by_plan, cia };

std::string to_string(Scenario scenario);
Scenario parse_scenario(const std::string& name);

enum class SourceKind { synth, csv };

/// Where the training pool (split among clients) and the server pool
/// (validation + held-out test) come from.
struct DataConfig {
  SourceKind source = SourceKind::synth;
  std::string train_csv;
  std::string test_csv;
  bool csv_header = false;

  std::size_t synth_classes = 4;
  std::size_t synth_dim = 16;
  std::size_t synth_per_class = 1000;         // client pool, per class
  std::size_t synth_server_per_class = 250;   // server pool, per class
  double synth_spread = 1.0;
};

struct ExperimentConfig {
  ModelSpec model;  // input_dim and num_classes are taken from the data
  StrategyConfig strategy;
  PrivacyConfig privacy;  // sampled_clients == 0 means every client
  TrainConfig train;
  std::size_t rounds = 20;

  DataConfig data;
  Scenario scenario = Scenario::homogeneous;
  std::size_t num_clients = 4;
  PartitionPlan plan;
  double client_test_fraction = 0.2;
  double server_validation_fraction = 0.5;

  double shadow_fraction = 0.1;
  std::size_t attacker = 0;
  std::size_t target = 2;

  std::uint64_t seed = 0;
  // Pins the initial model independently of `seed`.
  std::optional<std::uint64_t> init_seed;
  // Unset: pretrain exactly when the strategy requires initial parameters.
  std::optional<bool> pretrain;

  void validate() const;
  bool pretrains() const { return pretrain.value_or(requires_initial_parameters(strategy.kind)); }
};

struct SourceData {
  LabeledDataset pool;
  LabeledDataset server;
};

struct ClientData {
  LabeledDataset train;
  LabeledDataset test;
};

struct FederatedData {
  PartitionPlan plan;  // per-client class counts before the train/test split
  std::vector<ClientData> clients;
  LabeledDataset server_validation;
  LabeledDataset server_test;
};

SourceData load_source(const DataConfig& config, std::uint64_t seed);

/// Partitions the pool per scenario, splits every client into train/test
/// and the server pool into validation/test. Seeds derive from `seed`.
FederatedData prepare_federated_data(const ExperimentConfig& config, const SourceData& source);

struct ClientRoundMetrics {
  double accuracy = 0.0;
  double loss = 0.0;
  std::size_t test_size = 0;
};

struct RoundRecord {
  std::size_t round = 0;
  double aggregated_accuracy = 0.0;  // weighted by client test-set size
  double aggregated_loss = 0.0;
  std::vector<ClientRoundMetrics> clients;
  RoundPrivacyRecord privacy;
};

struct ExperimentResult {
  std::vector<RoundRecord> rounds;
  ParameterSet initial_global;
  ParameterSet final_global;
  EvalReport final_test;
};

struct RunOptions {
  std::size_t threads = 1;
  PrivacyHooks hooks;
};

/// Thrown for any failure inside the round loop; the message names the round.
class RoundError : public std::runtime_error {
 public:
  RoundError(std::size_t round, const std::string& what);
  std::size_t round() const noexcept { return round_; }

 private:
  std::size_t round_;
};

/// Broadcast, local training, privatized aggregation and client-test
/// evaluation for config.rounds rounds, then evaluation of the final model on
/// the server test split. Client c in round r trains with seed
/// derive_seed(seed, "client", {c, r}); server noise uses
/// derive_seed(seed, "noise", {r}). Results do not depend on options.threads.
ExperimentResult run_experiment(const ExperimentConfig& config, const FederatedData& data,
                                const RunOptions& options = {});

ParameterSet initial_global(const ExperimentConfig& config, const FederatedData& data);

struct LastKSummary {
  double mean = 0.0;
  double stddev = 0.0;  // population
};

LastKSummary summarize_last_k(const std::vector<RoundRecord>& records, std::size_t k = 5);

struct MultiRunReport {
  std::vector<std::uint64_t> seeds;
  std::vector<double> final_accuracies;
  double mean = 0.0;
  double stddev = 0.0;  // population
};

/// run_experiment under num_seeds seeds derived from config.seed, on fixed data.
MultiRunReport multi_run(const ExperimentConfig& config, const FederatedData& data, std::size_t num_seeds = 5,
                         const RunOptions& options = {});

/// (target - aggregated) / target * 100.
double cia_relative_difference(double aggregated_loss, double target_loss);

struct CiaReport {
  PrivacyMode mode = PrivacyMode::none;
  double aggregated_test_loss = 0.0;
  double target_shadow_loss = 0.0;
  double relative_difference_pct = 0.0;
  double server_test_loss = 0.0;  // global model after the single round
  std::size_t shadow_size = 0;
};

/// One-round client inference attack measurement for each privacy mode.
std::vector<CiaReport> run_cia(const ExperimentConfig& config, const FederatedData& data,
                               const std::vector<PrivacyMode>& modes, const RunOptions& options = {});

}  // namespace fedmp
