#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace histflow {

enum class ErrorKind {
  invalid_point,
  domain,
  capacity,
  config_violation,
  invalid_config,
  history_incomplete,
  coupling_violation,
  io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_point: return "invalid_point";
    case ErrorKind::domain: return "domain";
    case ErrorKind::capacity: return "capacity";
    case ErrorKind::config_violation: return "config_violation";
    case ErrorKind::invalid_config: return "invalid_config";
    case ErrorKind::history_incomplete: return "history_incomplete";
    case ErrorKind::coupling_violation: return "coupling_violation";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

/// Single exception type for the library. `field` names the offending
/// configuration entry when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::string field = {})
      : std::runtime_error(message), kind_(kind), field_(std::move(field)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorKind kind_;
  std::string field_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message,
                              std::string field = {}) {
  throw Error(kind, message, std::move(field));
}

}  // namespace histflow
