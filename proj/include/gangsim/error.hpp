#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gangsim {

enum class ErrorCode {
  InsufficientCapacity,
  NodeUnschedulable,
  GpuClassMismatch,
  UnderflowRelease,
  UnknownNode,
  ParseError,
  ValidationError,
  UnknownConfiguration,
  InvalidConfig,
  ValueTooLarge,
  UnknownLease,
  IllegalTransition,
  UnknownComponent,
  ConfigError,
  InvariantViolation,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InsufficientCapacity: return "InsufficientCapacity";
    case ErrorCode::NodeUnschedulable: return "NodeUnschedulable";
    case ErrorCode::GpuClassMismatch: return "GpuClassMismatch";
    case ErrorCode::UnderflowRelease: return "UnderflowRelease";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::UnknownConfiguration: return "UnknownConfiguration";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ValueTooLarge: return "ValueTooLarge";
    case ErrorCode::UnknownLease: return "UnknownLease";
    case ErrorCode::IllegalTransition: return "IllegalTransition";
    case ErrorCode::UnknownComponent: return "UnknownComponent";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

// All library failures are reported through this type. The code is stable and
// machine-readable; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::size_t> line = std::nullopt)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        message_(message),
        line_(line) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }

  // 1-based input line for parse and validation errors, when known.
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  ErrorCode code_;
  std::string message_;
  std::optional<std::size_t> line_;
};

}  // namespace gangsim
