#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ultrasnn {

/// Coarse failure class; the CLI maps each to a distinct exit code.
enum class ErrorCategory { Config, Io, Numeric };

std::string_view to_string(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

// Numeric family.
struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error(ErrorCategory::Numeric, what) {}
};
/// A parameter outside its mathematical domain (non-positive temperature, gain * x > 1, ...).
struct DomainError : Error {
  explicit DomainError(const std::string& what) : Error(ErrorCategory::Numeric, what) {}
};
/// Non-finite or otherwise unusable input data.
struct InputError : Error {
  explicit InputError(const std::string& what) : Error(ErrorCategory::Numeric, what) {}
};

// Config family.
struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::Config, what) {}
};
/// API misuse: backward on a non-scalar root, hard spikes while recording a tape, ...
struct ContractError : Error {
  explicit ContractError(const std::string& what) : Error(ErrorCategory::Config, what) {}
};

// IO family.
struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorCategory::Io, what) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error(ErrorCategory::Io, what) {}
};

}  // namespace ultrasnn
