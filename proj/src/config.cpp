#include "fedmp/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "fedmp/format.hpp"

namespace fedmp {

namespace {

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> parts;
  while (true) {
    const auto pos = text.find(sep);
    parts.emplace_back(trim(text.substr(0, pos)));
    if (pos == std::string_view::npos) break;
    text.remove_prefix(pos + 1);
  }
  return parts;
}

class Reader {
 public:
  explicit Reader(const ConfigValues& values) : values_(values) {}

  std::string raw(const std::string& key) {
    used_.insert(key);
    if (auto v = values_.get(key)) return *v;
    for (const auto& [k, d] : config_defaults()) {
      if (k == key) return d;
    }
    throw std::logic_error("no default for config key " + key);
  }

  bool present(const std::string& key) {
    used_.insert(key);
    return values_.get(key).has_value() && !values_.get(key)->empty();
  }

  double real(const std::string& key) {
    const auto text = raw(key);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v)) {
      throw ConfigError(key + ": expected a number, got '" + text + "'");
    }
    return v;
  }

  std::uint64_t integer(const std::string& key) {
    const auto text = raw(key);
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
      throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
    }
    return v;
  }

  bool boolean(const std::string& key) {
    const auto text = raw(key);
    if (text == "true") return true;
    if (text == "false") return false;
    throw ConfigError(key + ": expected true or false, got '" + text + "'");
  }

  void reject_unknown() const {
    for (const auto& [key, value] : values_.values()) {
      if (!used_.count(key)) throw ConfigError("unknown config key '" + key + "'");
    }
  }

 private:
  const ConfigValues& values_;
  std::set<std::string> used_;
};

}  // namespace

ConfigValues ConfigValues::parse(const std::string& text, const std::string& origin) {
  ConfigValues out;
  std::istringstream in(text);
  std::string line;
  std::string table;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto where = origin + ":" + std::to_string(line_no);
    std::string_view body = line;
    bool quoted = false;
    for (std::size_t i = 0; i < body.size(); ++i) {
      if (body[i] == '"') quoted = !quoted;
      if (body[i] == '#' && !quoted) {
        body = body.substr(0, i);
        break;
      }
    }
    body = trim(body);
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') throw ConfigError(where + ": malformed table header");
      table = std::string(trim(body.substr(1, body.size() - 2)));
      if (table.empty()) throw ConfigError(where + ": empty table name");
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
    const auto key = std::string(trim(body.substr(0, eq)));
    auto value = std::string(trim(body.substr(eq + 1)));
    if (key.empty()) throw ConfigError(where + ": missing key");
    if (table.empty()) throw ConfigError(where + ": key '" + key + "' outside a table");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    out.values_[table + "." + key] = value;
  }
  return out;
}

ConfigValues ConfigValues::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str(), path);
}

void ConfigValues::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  const auto key = std::string(trim(std::string_view(assignment).substr(0, eq)));
  if (key.find('.') == std::string::npos) throw ConfigError("override key '" + key + "' must be table.key");
  values_[key] = std::string(trim(std::string_view(assignment).substr(eq + 1)));
}

std::optional<std::string> ConfigValues::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

const std::vector<std::pair<std::string, std::string>>& config_defaults() {
  static const std::vector<std::pair<std::string, std::string>> defaults = {
      {"model.hidden", "32"},
      {"data.source", "synth"},
      {"data.train_csv", ""},
      {"data.test_csv", ""},
      {"data.csv_header", "false"},
      {"data.classes", "4"},
      {"data.dim", "16"},
      {"data.per_class", "1000"},
      {"data.server_per_class", "250"},
      {"data.spread", "1.0"},
      {"data.scenario", "homogeneous"},
      {"data.num_clients", "4"},
      {"data.plan", ""},
      {"data.test_fraction", "0.2"},
      {"data.validation_fraction", "0.5"},
      {"strategy.kind", "fedavg"},
      {"strategy.beta", "0.9"},
      {"strategy.server_lr", ""},
      {"strategy.prox_mu", "0.1"},
      {"strategy.beta1", "0.9"},
      {"strategy.beta2", "0.99"},
      {"strategy.tau", "0.001"},
      {"privacy.mode", "none"},
      {"privacy.modes", "none,global_dp,metric"},
      {"privacy.noise_multiplier", "0.01"},
      {"privacy.clipping_norm", "5"},
      {"privacy.sampled_clients", "0"},
      {"run.rounds", "20"},
      {"run.epochs", "5"},
      {"run.batch_size", "32"},
      {"run.learning_rate", "0.001"},
      {"run.optimizer", "adam"},
      {"run.seed", "0"},
      {"run.init_seed", ""},
      {"run.pretrain", "auto"},
      {"run.last_k", "5"},
      {"cia.shadow_fraction", "0.1"},
      {"cia.attacker", "1"},
      {"cia.target", "3"},
  };
  return defaults;
}

PartitionPlan parse_plan(const std::string& text) {
  PartitionPlan plan;
  if (trim(text).empty()) return plan;
  for (const auto& row : split(text, ';')) {
    if (row.empty()) continue;
    std::vector<std::size_t> counts;
    for (const auto& cell : split(row, ',')) {
      std::size_t v = 0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size()) {
        throw ConfigError("data.plan: '" + cell + "' is not a non-negative integer");
      }
      counts.push_back(v);
    }
    if (!plan.counts.empty() && counts.size() != plan.counts.front().size()) {
      throw ConfigError("data.plan: rows have different class counts");
    }
    plan.counts.push_back(std::move(counts));
  }
  return plan;
}

std::string format_plan(const PartitionPlan& plan) {
  std::string out;
  for (std::size_t c = 0; c < plan.counts.size(); ++c) {
    if (c) out += "; ";
    for (std::size_t k = 0; k < plan.counts[c].size(); ++k) {
      if (k) out += ",";
      out += std::to_string(plan.counts[c][k]);
    }
  }
  return out;
}

CliSettings build_settings(const ConfigValues& values) {
  Reader r(values);
  CliSettings s;
  auto& e = s.experiment;

  for (const auto& width : split(r.raw("model.hidden"), ',')) {
    if (width.empty()) continue;
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(width.data(), width.data() + width.size(), v);
    if (ec != std::errc{} || ptr != width.data() + width.size() || v == 0) {
      throw ConfigError("model.hidden: '" + width + "' is not a positive integer");
    }
    e.model.hidden_dims.push_back(v);
  }

  const auto source = r.raw("data.source");
  if (source == "synth") e.data.source = SourceKind::synth;
  else if (source == "csv") e.data.source = SourceKind::csv;
  else throw ConfigError("data.source: expected synth or csv, got '" + source + "'");
  e.data.train_csv = r.raw("data.train_csv");
  e.data.test_csv = r.raw("data.test_csv");
  e.data.csv_header = r.boolean("data.csv_header");
  e.data.synth_classes = r.integer("data.classes");
  e.data.synth_dim = r.integer("data.dim");
  e.data.synth_per_class = r.integer("data.per_class");
  e.data.synth_server_per_class = r.integer("data.server_per_class");
  e.data.synth_spread = r.real("data.spread");
  e.scenario = parse_scenario(r.raw("data.scenario"));
  e.num_clients = r.integer("data.num_clients");
  e.plan = parse_plan(r.raw("data.plan"));
  e.client_test_fraction = r.real("data.test_fraction");
  e.server_validation_fraction = r.real("data.validation_fraction");

  e.strategy.kind = parse_strategy_kind(r.raw("strategy.kind"));
  e.strategy.beta = r.real("strategy.beta");
  if (r.present("strategy.server_lr")) e.strategy.server_lr = r.real("strategy.server_lr");
  e.strategy.prox_mu = r.real("strategy.prox_mu");
  e.strategy.beta1 = r.real("strategy.beta1");
  e.strategy.beta2 = r.real("strategy.beta2");
  e.strategy.tau = r.real("strategy.tau");

  e.privacy.mode = parse_privacy_mode(r.raw("privacy.mode"));
  for (const auto& m : split(r.raw("privacy.modes"), ',')) {
    if (!m.empty()) s.cia_modes.push_back(parse_privacy_mode(m));
  }
  if (s.cia_modes.empty()) throw ConfigError("privacy.modes must list at least one mode");
  e.privacy.noise_multiplier = r.real("privacy.noise_multiplier");
  e.privacy.clipping_norm = r.real("privacy.clipping_norm");
  e.privacy.sampled_clients = r.integer("privacy.sampled_clients");

  e.rounds = r.integer("run.rounds");
  e.train.epochs = r.integer("run.epochs");
  e.train.batch_size = r.integer("run.batch_size");
  e.train.learning_rate = r.real("run.learning_rate");
  const auto optimizer = r.raw("run.optimizer");
  if (optimizer == "adam") e.train.optimizer = OptimizerKind::adam;
  else if (optimizer == "sgd") e.train.optimizer = OptimizerKind::sgd;
  else throw ConfigError("run.optimizer: expected adam or sgd, got '" + optimizer + "'");
  e.seed = r.integer("run.seed");
  if (r.present("run.init_seed")) e.init_seed = r.integer("run.init_seed");
  const auto pretrain = r.raw("run.pretrain");
  if (pretrain == "true") e.pretrain = true;
  else if (pretrain == "false") e.pretrain = false;
  else if (pretrain != "auto") throw ConfigError("run.pretrain: expected auto, true or false");
  s.last_k = r.integer("run.last_k");
  if (s.last_k == 0) throw ConfigError("run.last_k must be positive");

  e.shadow_fraction = r.real("cia.shadow_fraction");
  const auto attacker = r.integer("cia.attacker");
  const auto target = r.integer("cia.target");
  if (attacker == 0 || target == 0) throw ConfigError("cia.attacker and cia.target are 1-based client numbers");
  e.attacker = attacker - 1;
  e.target = target - 1;

  r.reject_unknown();
  e.validate();
  return s;
}

}  // namespace fedmp
