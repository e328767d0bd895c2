#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vflock {

/// Failure categories. The numeric values double as CLI exit codes.
enum class ErrorKind : int {
  Config = 1,
  Io = 2,
  DataFormat = 3,
  Divergence = 4,
  InfeasibleSpawn = 5,
  InvalidArgument = 6,
  DegenerateGeometry = 7,
  UndefinedMetric = 8,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Data-format failures carry a finer subkind so callers can tell a
/// truncated file from a wrong magic or an unsupported version.
enum class FormatIssue { BadMagic, Version, Truncated, Shape };

class FormatError : public Error {
 public:
  FormatError(FormatIssue issue, const std::string& what)
      : Error(ErrorKind::DataFormat, what), issue_(issue) {}
  FormatIssue issue() const noexcept { return issue_; }

 private:
  FormatIssue issue_;
};

}  // namespace vflock
