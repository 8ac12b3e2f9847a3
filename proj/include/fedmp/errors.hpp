#pragma once

#include <stdexcept>
#include <string>

namespace fedmp {

// Two operands (or a sequence of operands) do not share names/order/shapes.
class ShapeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bad user-facing configuration. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A partition plan asks for more samples of a class than the source holds.
class InfeasiblePlan : public ConfigError {
 public:
  InfeasiblePlan(std::string message, std::size_t client, std::size_t label)
      : ConfigError(std::move(message)), client_(client), label_(label) {}

  std::size_t client() const noexcept { return client_; }
  std::size_t label() const noexcept { return label_; }

 private:
  std::size_t client_;
  std::size_t label_;
};

// Parse failures and file-system problems. Exit code 1.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fedmp
