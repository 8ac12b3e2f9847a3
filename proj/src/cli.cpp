#include "fedmp/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include "fedmp/config.hpp"
#include "fedmp/format.hpp"
#include "fedmp/orchestrator.hpp"

namespace fedmp::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

struct Manifest {
  std::string command;
  std::string config_path;
  std::string out_dir;
  std::string data_dir;
  std::optional<std::uint64_t> seed;
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  bool force = false;
  std::vector<std::string> overrides;
  std::vector<std::string> inputs;
};

CliSettings load_settings(const Manifest& m) {
  ConfigValues values = m.config_path.empty() ? ConfigValues{} : ConfigValues::load(m.config_path);
  for (const auto& o : m.overrides) values.apply_override(o);
  if (m.seed) values.set("run.seed", std::to_string(*m.seed));
  return build_settings(values);
}

void prepare_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

void refuse_overwrite(const fs::path& path, bool force) {
  if (!force && fs::exists(path)) {
    throw ConfigError("'" + path.string() + "' already exists; pass --force to overwrite");
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string client_file(std::size_t client, const char* role) {
  return "client_" + std::to_string(client + 1) + "_" + role + ".bin";
}

std::string plan_table(const PartitionPlan& plan, char sep, bool pad) {
  std::ostringstream out;
  const std::size_t classes = plan.counts.empty() ? 0 : plan.counts.front().size();
  auto cell = [&](const std::string& s, bool first) {
    if (!first) out << sep;
    if (pad) out << std::setw(first ? 8 : 9) << s;
    else out << s;
  };
  cell("client", true);
  cell("total", false);
  for (std::size_t k = 0; k < classes; ++k) cell("class_" + std::to_string(k), false);
  out << '\n';
  for (std::size_t c = 0; c < plan.num_clients(); ++c) {
    cell(std::to_string(c + 1), true);
    cell(std::to_string(plan.client_total(c)), false);
    for (auto v : plan.counts[c]) cell(std::to_string(v), false);
    out << '\n';
  }
  return out.str();
}

FederatedData load_partitions(const std::string& dir) {
  FederatedData data;
  if (!fs::exists(fs::path(dir) / client_file(0, "train"))) {
    throw IoError("no partitions in '" + dir + "'; run the partition command first");
  }
  for (std::size_t c = 0; fs::exists(fs::path(dir) / client_file(c, "train")); ++c) {
    data.clients.push_back({load_dataset((fs::path(dir) / client_file(c, "train")).string()),
                            load_dataset((fs::path(dir) / client_file(c, "test")).string())});
  }
  data.server_validation = load_dataset((fs::path(dir) / "server_validation.bin").string());
  data.server_test = load_dataset((fs::path(dir) / "server_test.bin").string());
  return data;
}

int cmd_partition(const Manifest& m, std::ostream& out) {
  const auto settings = load_settings(m);
  const auto& config = settings.experiment;
  const fs::path dir = m.out_dir;
  refuse_overwrite(dir / "partition.csv", m.force);

  const auto source = load_source(config.data, config.seed);
  const auto data = prepare_federated_data(config, source);
  prepare_out_dir(m.out_dir);
  for (std::size_t c = 0; c < data.clients.size(); ++c) {
    save_dataset((dir / client_file(c, "train")).string(), data.clients[c].train);
    save_dataset((dir / client_file(c, "test")).string(), data.clients[c].test);
  }
  if (!data.server_validation.empty()) save_dataset((dir / "server_validation.bin").string(), data.server_validation);
  save_dataset((dir / "server_test.bin").string(), data.server_test);
  write_text(dir / "partition.csv", plan_table(data.plan, ',', false));

  out << plan_table(data.plan, ' ', true);
  out << "server: " << data.server_validation.size() << " validation, " << data.server_test.size() << " test\n";
  return kExitOk;
}

Json eval_json(const EvalReport& r) {
  Json j;
  j["accuracy"] = r.accuracy;
  j["loss"] = r.loss;
  j["macro_f1"] = r.macro_f1;
  j["macro_precision"] = r.macro_precision;
  j["auc_micro_ovr"] = r.auc_micro_ovr;
  j["sample_count"] = r.sample_count;
  return j;
}

std::string rounds_csv(const std::vector<RoundRecord>& rounds, std::size_t num_clients) {
  std::string csv = "round,agg_acc,agg_loss";
  for (std::size_t c = 1; c <= num_clients; ++c) {
    csv += ",client_" + std::to_string(c) + "_acc,client_" + std::to_string(c) + "_loss";
  }
  csv += ",d_metric,sigma,warning\n";
  for (const auto& r : rounds) {
    csv += std::to_string(r.round) + "," + format_double(r.aggregated_accuracy) + "," +
           format_double(r.aggregated_loss);
    for (const auto& c : r.clients) csv += "," + format_double(c.accuracy) + "," + format_double(c.loss);
    csv += "," + format_double(r.privacy.distance) + "," + format_double(r.privacy.sigma) + "," +
           (r.privacy.warning ? "1" : "0") + "\n";
  }
  return csv;
}

int cmd_run(const Manifest& m, std::ostream& out) {
  const auto settings = load_settings(m);
  const auto& config = settings.experiment;
  const fs::path dir = m.out_dir;
  refuse_overwrite(dir / "rounds.csv", m.force);
  refuse_overwrite(dir / "summary.json", m.force);

  const auto data = load_partitions(m.data_dir.empty() ? m.out_dir : m.data_dir);
  const auto result = run_experiment(config, data, {m.threads, {}});
  const auto k = std::min(settings.last_k, result.rounds.size());
  const auto last = summarize_last_k(result.rounds, k);

  Json summary;
  summary["strategy"] = to_string(config.strategy.kind);
  summary["privacy_mode"] = to_string(config.privacy.mode);
  summary["seed"] = config.seed;
  summary["rounds"] = config.rounds;
  summary["num_clients"] = data.clients.size();
  summary["final_test"] = eval_json(result.final_test);
  summary["last_k"] = Json{{"k", k}, {"mean", last.mean}, {"std", last.stddev}};
  const auto& first = result.rounds.front().privacy;
  summary["ctilde_round1"] = first.ctilde ? Json(*first.ctilde) : Json(nullptr);
  summary["privacy"] = Json{{"noise_multiplier", config.privacy.noise_multiplier},
                            {"clipping_norm", config.privacy.clipping_norm},
                            {"sampled_clients", config.privacy.sampled_clients ? config.privacy.sampled_clients
                                                                                : data.clients.size()}};

  prepare_out_dir(m.out_dir);
  write_text(dir / "rounds.csv", rounds_csv(result.rounds, data.clients.size()));
  write_text(dir / "summary.json", summary.dump(2) + "\n");

  out << to_string(config.strategy.kind) << " / " << to_string(config.privacy.mode) << ": last-" << k
      << " accuracy " << std::fixed << std::setprecision(4) << last.mean << " +/- " << last.stddev
      << ", final test accuracy " << result.final_test.accuracy << '\n';
  return kExitOk;
}

int cmd_cia(const Manifest& m, std::ostream& out) {
  const auto settings = load_settings(m);
  const auto& config = settings.experiment;
  const fs::path dir = m.out_dir;
  refuse_overwrite(dir / "cia_report.json", m.force);

  const auto data = load_partitions(m.data_dir.empty() ? m.out_dir : m.data_dir);
  const auto reports = run_cia(config, data, settings.cia_modes, {m.threads, {}});

  Json doc;
  doc["strategy"] = to_string(config.strategy.kind);
  doc["seed"] = config.seed;
  doc["attacker"] = config.attacker + 1;
  doc["target"] = config.target + 1;
  doc["shadow_size"] = reports.empty() ? 0 : reports.front().shadow_size;
  Json modes = Json::array();
  out << std::left << std::setw(10) << "mode" << std::right << std::setw(12) << "aggregated" << std::setw(12)
      << "target" << std::setw(12) << "diff_%" << std::setw(12) << "test_loss" << '\n';
  for (const auto& r : reports) {
    modes.push_back(Json{{"mode", to_string(r.mode)},
                         {"aggregated_loss", r.aggregated_test_loss},
                         {"target_loss", r.target_shadow_loss},
                         {"difference_pct", r.relative_difference_pct},
                         {"test_loss", r.server_test_loss}});
    out << std::left << std::setw(10) << to_string(r.mode) << std::right << std::fixed << std::setprecision(3)
        << std::setw(12) << r.aggregated_test_loss << std::setw(12) << r.target_shadow_loss << std::setw(12)
        << r.relative_difference_pct << std::setw(12) << r.server_test_loss << '\n';
  }
  doc["modes"] = std::move(modes);

  prepare_out_dir(m.out_dir);
  write_text(dir / "cia_report.json", doc.dump(2) + "\n");
  return kExitOk;
}

struct ReportRow {
  std::size_t strategy_rank = 0;
  std::size_t mode_rank = 0;
  Json summary;
  std::string canonical;
};

std::size_t rank_of(const std::string& name, bool strategy) {
  std::size_t i = 0;
  if (strategy) {
    for (auto k : kAllStrategies) {
      if (to_string(k) == name) return i;
      ++i;
    }
  } else {
    for (auto k : kAllPrivacyModes) {
      if (to_string(k) == name) return i;
      ++i;
    }
  }
  return i;
}

int cmd_report(const Manifest& m, std::ostream& out) {
  std::vector<fs::path> files;
  auto inputs = m.inputs;
  if (inputs.empty()) inputs.push_back(m.out_dir);
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      for (const auto& entry : fs::recursive_directory_iterator(in)) {
        if (entry.is_regular_file() && entry.path().filename() == "summary.json") files.push_back(entry.path());
      }
    } else if (fs::is_regular_file(in)) {
      files.emplace_back(in);
    } else {
      throw IoError("report input '" + in + "' does not exist");
    }
  }
  if (files.empty()) throw IoError("no summary.json files found");

  std::vector<ReportRow> rows;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw IoError("cannot read '" + f.string() + "'");
    Json j;
    try {
      j = Json::parse(in);
      for (const char* key : {"strategy", "privacy_mode", "final_test", "last_k"}) {
        if (!j.contains(key)) throw IoError(std::string("missing field '") + key + "'");
      }
      for (const char* key : {"accuracy", "macro_f1", "macro_precision", "auc_micro_ovr"}) {
        if (!j["final_test"].contains(key)) throw IoError(std::string("missing field 'final_test.") + key + "'");
      }
      for (const char* key : {"mean", "std"}) {
        if (!j["last_k"].contains(key)) throw IoError(std::string("missing field 'last_k.") + key + "'");
      }
      rows.push_back({rank_of(j["strategy"].get<std::string>(), true),
                      rank_of(j["privacy_mode"].get<std::string>(), false), j, j.dump()});
    } catch (const Json::exception& e) {
      throw IoError("corrupt summary '" + f.string() + "': " + e.what());
    } catch (const IoError& e) {
      throw IoError("corrupt summary '" + f.string() + "': " + e.what());
    }
  }
  std::sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
    return std::tie(a.strategy_rank, a.mode_rank, a.canonical) < std::tie(b.strategy_rank, b.mode_rank, b.canonical);
  });

  std::string csv = "strategy,privacy_mode,last_k_mean,last_k_std,final_accuracy,final_macro_f1,"
                    "final_macro_precision,final_auc\n";
  out << std::left << std::setw(11) << "strategy" << std::setw(11) << "mode" << std::right << std::setw(18)
      << "last-k acc" << std::setw(10) << "test acc" << std::setw(8) << "F1" << std::setw(11) << "precision"
      << std::setw(8) << "AUC" << '\n';
  for (const auto& row : rows) {
    const auto& j = row.summary;
    const auto& t = j["final_test"];
    const auto& l = j["last_k"];
    csv += j["strategy"].get<std::string>() + "," + j["privacy_mode"].get<std::string>() + "," + l["mean"].dump() +
           "," + l["std"].dump() + "," + t["accuracy"].dump() + "," + t["macro_f1"].dump() + "," +
           t["macro_precision"].dump() + "," + t["auc_micro_ovr"].dump() + "\n";
    std::ostringstream acc;
    acc << std::fixed << std::setprecision(3) << l["mean"].get<double>() << " +/- " << l["std"].get<double>();
    out << std::left << std::setw(11) << j["strategy"].get<std::string>() << std::setw(11)
        << j["privacy_mode"].get<std::string>() << std::right << std::setw(18) << acc.str() << std::fixed
        << std::setprecision(3) << std::setw(10) << t["accuracy"].get<double>() << std::setw(8)
        << t["macro_f1"].get<double>() << std::setw(11) << t["macro_precision"].get<double>() << std::setw(8)
        << t["auc_micro_ovr"].get<double>() << '\n';
  }
  prepare_out_dir(m.out_dir);
  write_text(fs::path(m.out_dir) / "report.csv", csv);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Federated learning simulator with global and metric differential privacy", "fedmp"};
  app.require_subcommand(1);
  Manifest m;

  const std::string precedence =
      "Settings come from built-in defaults, then --config, then each --set table.key=value, "
      "then --seed (which sets run.seed).";
  app.footer(precedence);

  auto common = [&](CLI::App* sub, bool needs_data) {
    sub->add_option("--config", m.config_path, "Experiment config file")->check(CLI::ExistingFile);
    sub->add_option("--out", m.out_dir, "Output directory")->required();
    sub->add_option("--seed", m.seed, "Experiment seed (overrides run.seed)");
    sub->add_option("--threads", m.threads, "Client-training parallelism; never changes results")
        ->check(CLI::PositiveNumber);
    sub->add_flag("--force", m.force, "Overwrite existing outputs");
    sub->add_option("--set", m.overrides, "Override a config value: table.key=value (repeatable)");
    if (needs_data) sub->add_option("--data", m.data_dir, "Partition directory (default: --out)");
  };
  auto* partition = app.add_subcommand("partition", "Split the data among clients and the server");
  common(partition, false);
  auto* run_cmd = app.add_subcommand("run", "Run a federated experiment on existing partitions");
  common(run_cmd, true);
  auto* cia = app.add_subcommand("cia", "Measure the one-round client inference attack per privacy mode");
  common(cia, true);
  auto* report = app.add_subcommand("report", "Tabulate summary.json files from earlier runs");
  report->add_option("--out", m.out_dir, "Directory receiving report.csv")->required();
  report->add_option("inputs", m.inputs, "summary.json files or directories to scan (default: --out)");

  std::ostringstream cli_out, cli_err;
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, cli_out, cli_err);
    out << cli_out.str();
    err << cli_err.str();
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (partition->parsed()) return cmd_partition(m, out);
    if (run_cmd->parsed()) return cmd_run(m, out);
    if (cia->parsed()) return cmd_cia(m, out);
    return cmd_report(m, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace fedmp::cli
