#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace plgmi {

// Failure categories surfaced by the CLI as distinct exit codes.
enum class ErrorKind {
  kInvalidArgument,
  kData,
  kDependency,
  kNumerical,
  kIo,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace plgmi
