#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedmp/orchestrator.hpp"

namespace fedmp {

/// Flat `[table]` / `key = value` text config. Keys are stored as
/// "table.key"; `#` starts a comment; values may be double-quoted.
class ConfigValues {
 public:
  static ConfigValues parse(const std::string& text, const std::string& origin = "<config>");
  static ConfigValues load(const std::string& path);

  /// `table.key=value`; replaces any value from the file.
  void apply_override(const std::string& assignment);
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::optional<std::string> get(const std::string& key) const;
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Every recognised key with its default, in documentation order.
const std::vector<std::pair<std::string, std::string>>& config_defaults();

struct CliSettings {
  ExperimentConfig experiment;
  std::vector<PrivacyMode> cia_modes;
  std::size_t last_k = 5;
};

/// Throws ConfigError on unknown keys or malformed values.
CliSettings build_settings(const ConfigValues& values);

PartitionPlan parse_plan(const std::string& text);
std::string format_plan(const PartitionPlan& plan);

}  // namespace fedmp
