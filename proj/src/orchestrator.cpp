#include "fedmp/orchestrator.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

#include "fedmp/format.hpp"
#include "fedmp/seed.hpp"

namespace fedmp {

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index writes
// only its own output slot, so the result is independent of scheduling. The
// exception of the lowest failing index is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

PrivacyConfig resolved_privacy(const ExperimentConfig& config, std::size_t num_clients) {
  PrivacyConfig p = config.privacy;
  if (p.sampled_clients == 0) p.sampled_clients = num_clients;
  p.noise_seed = config.seed;
  return p;
}

ModelSpec resolved_model(const ExperimentConfig& config, const FederatedData& data) {
  ModelSpec spec = config.model;
  const auto& probe = data.clients.front().train;
  spec.input_dim = probe.dim();
  spec.num_classes = std::max<std::size_t>(2, probe.num_classes());
  return spec;
}

}  // namespace

std::string to_string(Scenario scenario) {
  switch (scenario) {
    case Scenario::homogeneous: return "homogeneous";
    case Scenario::by_plan: return "by_plan";
    case Scenario::cia: return "cia";
  }
  return "unknown";
}

Scenario parse_scenario(const std::string& name) {
  for (auto s : {Scenario::homogeneous, Scenario::by_plan, Scenario::cia}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown scenario '" + name + "' (expected homogeneous, by_plan or cia)");
}

void ExperimentConfig::validate() const {
  strategy.validate();
  if (!(privacy.noise_multiplier >= 0.0)) throw ConfigError("privacy.noise_multiplier must be non-negative");
  if (!(privacy.clipping_norm > 0.0)) throw ConfigError("privacy.clipping_norm must be positive");
  for (auto h : model.hidden_dims) {
    if (h == 0) throw ConfigError("model.hidden widths must be positive");
  }
  if (rounds == 0) throw ConfigError("run.rounds must be at least 1");
  if (train.batch_size == 0) throw ConfigError("run.batch_size must be positive");
  if (!(train.learning_rate >= 0.0)) throw ConfigError("run.learning_rate must be non-negative");
  if (!(client_test_fraction > 0.0 && client_test_fraction < 1.0)) {
    throw ConfigError("data.test_fraction must lie in (0, 1)");
  }
  if (!(server_validation_fraction > 0.0 && server_validation_fraction < 1.0)) {
    throw ConfigError("data.validation_fraction must lie in (0, 1)");
  }
  if (!(shadow_fraction > 0.0 && shadow_fraction <= 1.0)) throw ConfigError("cia.shadow_fraction must lie in (0, 1]");
  switch (scenario) {
    case Scenario::homogeneous:
      if (num_clients == 0) throw ConfigError("data.num_clients must be positive");
      break;
    case Scenario::by_plan:
      if (plan.num_clients() == 0) throw ConfigError("scenario by_plan needs data.plan");
      break;
    case Scenario::cia:
      if (plan.num_clients() != 3) throw ConfigError("scenario cia needs a data.plan with exactly 3 clients");
      if (attacker >= 3 || target >= 3 || attacker == target) {
        throw ConfigError("cia.attacker and cia.target must be distinct clients in 1..3");
      }
      break;
  }
}

RoundError::RoundError(std::size_t round, const std::string& what)
    : std::runtime_error("round " + std::to_string(round) + ": " + what), round_(round) {}

SourceData load_source(const DataConfig& config, std::uint64_t seed) {
  if (config.source == SourceKind::csv) {
    if (config.train_csv.empty() || config.test_csv.empty()) {
      throw ConfigError("csv source needs data.train_csv and data.test_csv");
    }
    auto pool = load_csv(config.train_csv, config.csv_header);
    auto server = load_csv(config.test_csv, config.csv_header);
    if (pool.dim() != server.dim()) throw ConfigError("train and test csv feature widths differ");
    const auto k = std::max(pool.num_classes(), server.num_classes());
    auto widen = [k](const LabeledDataset& d) {
      return LabeledDataset(d.dim(), k, d.features(), d.labels());
    };
    return {widen(pool), widen(server)};
  }
  if (config.synth_classes < 2 || config.synth_dim == 0 || config.synth_per_class == 0 ||
      config.synth_server_per_class == 0 || !(config.synth_spread >= 0.0)) {
    throw ConfigError("synthetic source needs classes >= 2 and positive dim/per_class/server_per_class");
  }
  const auto all = synth_blobs(config.synth_classes, config.synth_dim,
                               config.synth_per_class + config.synth_server_per_class, config.synth_spread,
                               derive_seed(seed, "synth"));
  // Rows cycle through the labels, so a prefix holds exactly per_class rows of each class.
  const std::size_t cut = config.synth_classes * config.synth_per_class;
  std::vector<std::size_t> head(cut), tail(all.size() - cut);
  for (std::size_t i = 0; i < cut; ++i) head[i] = i;
  for (std::size_t i = cut; i < all.size(); ++i) tail[i - cut] = i;
  return {all.select(head), all.select(tail)};
}

FederatedData prepare_federated_data(const ExperimentConfig& config, const SourceData& source) {
  config.validate();
  FederatedData out;
  const auto data_seed = derive_seed(config.seed, "data");
  std::vector<LabeledDataset> parts;
  if (config.scenario == Scenario::homogeneous) {
    out.plan = homogeneous_plan(source.pool.class_counts(), config.num_clients);
    parts = partition_homogeneous(source.pool, config.num_clients, data_seed);
  } else {
    out.plan = config.plan;
    parts = partition_by_plan(source.pool, config.plan, data_seed);
  }
  for (std::size_t c = 0; c < parts.size(); ++c) {
    if (parts[c].size() < 2) {
      throw ConfigError("client " + std::to_string(c + 1) + " receives " + std::to_string(parts[c].size()) +
                        " samples; every client needs at least 2");
    }
    auto split = stratified_split(parts[c], config.client_test_fraction, derive_seed(config.seed, "split", {c}));
    if (split.train.empty() || split.test.empty()) {
      throw ConfigError("client " + std::to_string(c + 1) + " has an empty train or test split");
    }
    out.clients.push_back({std::move(split.train), std::move(split.test)});
  }
  auto server = stratified_split(source.server, 1.0 - config.server_validation_fraction,
                                 derive_seed(config.seed, "server"));
  out.server_validation = std::move(server.train);
  out.server_test = std::move(server.test);
  if (out.server_test.empty()) throw ConfigError("server test split is empty");
  return out;
}

ParameterSet initial_global(const ExperimentConfig& config, const FederatedData& data) {
  const auto spec = resolved_model(config, data);
  const auto seed = derive_seed(config.init_seed.value_or(config.seed), "init");
  if (!config.pretrains()) return init_params(spec, seed);
  if (data.server_validation.empty()) throw ConfigError("pretraining needs a non-empty server validation split");
  TrainConfig train = config.train;
  train.proximal_mu = 0.0;
  train.seed = seed;
  return pretrain_initial(spec, data.server_validation, train);
}

ExperimentResult run_experiment(const ExperimentConfig& config, const FederatedData& data,
                                const RunOptions& options) {
  config.validate();
  if (data.clients.empty()) throw std::invalid_argument("run_experiment: no clients");
  const std::size_t n = data.clients.size();
  const auto privacy = resolved_privacy(config, n);

  ExperimentResult result;
  result.initial_global = initial_global(config, data);
  auto state = ServerState::initial(result.initial_global);

  for (std::size_t r = 1; r <= config.rounds; ++r) {
    try {
      std::vector<ClientUpdate> updates(n);
      parallel_for(n, options.threads, [&](std::size_t c) {
        TrainConfig train = config.train;
        train.seed = derive_seed(config.seed, "client", {c, r});
        train.proximal_mu = config.strategy.kind == StrategyKind::fedprox ? config.strategy.prox_mu : 0.0;
        const auto& local = data.clients[c].train;
        auto& u = updates[c];
        u.client_id = c;
        u.sample_count = local.size();
        u.params = train_local(state.global, local, train);
        u.train_loss = evaluate(u.params, local).loss;
      });

      auto round = privatize_round(privacy, config.strategy, state, updates, options.hooks);
      state = std::move(round.state);

      RoundRecord record;
      record.round = r;
      record.privacy = round.record;
      record.clients.resize(n);
      parallel_for(n, options.threads, [&](std::size_t c) {
        const auto report = evaluate(state.global, data.clients[c].test);
        record.clients[c] = {report.accuracy, report.loss, report.sample_count};
      });
      double total = 0.0;
      for (const auto& m : record.clients) {
        const double w = static_cast<double>(m.test_size);
        record.aggregated_accuracy += w * m.accuracy;
        record.aggregated_loss += w * m.loss;
        total += w;
      }
      record.aggregated_accuracy /= total;
      record.aggregated_loss /= total;
      result.rounds.push_back(std::move(record));
    } catch (const RoundError&) {
      throw;
    } catch (const std::exception& e) {
      throw RoundError(r, e.what());
    }
  }
  result.final_global = state.global;
  result.final_test = evaluate(state.global, data.server_test);
  return result;
}

LastKSummary summarize_last_k(const std::vector<RoundRecord>& records, std::size_t k) {
  if (k == 0) throw std::invalid_argument("summarize_last_k: k must be positive");
  if (records.size() < k) {
    throw std::invalid_argument("summarize_last_k: " + std::to_string(records.size()) + " rounds, need " +
                                std::to_string(k));
  }
  LastKSummary s;
  const auto first = records.end() - static_cast<std::ptrdiff_t>(k);
  for (auto it = first; it != records.end(); ++it) s.mean += it->aggregated_accuracy;
  s.mean /= static_cast<double>(k);
  double sq = 0.0;
  for (auto it = first; it != records.end(); ++it) {
    const double d = it->aggregated_accuracy - s.mean;
    sq += d * d;
  }
  s.stddev = std::sqrt(sq / static_cast<double>(k));
  return s;
}

MultiRunReport multi_run(const ExperimentConfig& config, const FederatedData& data, std::size_t num_seeds,
                         const RunOptions& options) {
  if (num_seeds < 2) throw std::invalid_argument("multi_run needs at least 2 seeds");
  MultiRunReport report;
  for (std::size_t k = 0; k < num_seeds; ++k) {
    ExperimentConfig run = config;
    run.seed = derive_seed(config.seed, "run", {k});
    const auto result = run_experiment(run, data, options);
    report.seeds.push_back(run.seed);
    report.final_accuracies.push_back(result.final_test.accuracy);
  }
  for (double a : report.final_accuracies) report.mean += a;
  report.mean /= static_cast<double>(num_seeds);
  double sq = 0.0;
  for (double a : report.final_accuracies) sq += (a - report.mean) * (a - report.mean);
  report.stddev = std::sqrt(sq / static_cast<double>(num_seeds));
  return report;
}

double cia_relative_difference(double aggregated_loss, double target_loss) {
  if (!(target_loss > 0.0)) throw std::invalid_argument("target loss must be positive");
  return (target_loss - aggregated_loss) / target_loss * 100.0;
}

std::vector<CiaReport> run_cia(const ExperimentConfig& config, const FederatedData& data,
                               const std::vector<PrivacyMode>& modes, const RunOptions& options) {
  if (config.scenario != Scenario::cia) throw ConfigError("run_cia requires scenario cia");
  config.validate();
  if (data.clients.size() != 3) throw ConfigError("client inference attack needs exactly 3 clients");
  const auto shadow = shadow_sample(data.clients.at(config.target).train, config.shadow_fraction,
                                    derive_seed(config.seed, "shadow"));
  if (shadow.empty()) throw std::runtime_error("target client shadow set is empty");

  std::vector<CiaReport> reports;
  for (auto mode : modes) {
    ExperimentConfig run = config;
    run.rounds = 1;
    run.privacy.mode = mode;
    const auto result = run_experiment(run, data, options);
    CiaReport r;
    r.mode = mode;
    r.aggregated_test_loss = result.rounds.front().aggregated_loss;
    r.target_shadow_loss = evaluate(result.final_global, shadow).loss;
    r.relative_difference_pct = cia_relative_difference(r.aggregated_test_loss, r.target_shadow_loss);
    r.server_test_loss = result.final_test.loss;
    r.shadow_size = shadow.size();
    reports.push_back(r);
  }
  return reports;
}

}  // namespace fedmp
