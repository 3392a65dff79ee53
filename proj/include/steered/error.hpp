#pragma once

#include <stdexcept>
#include <string>

namespace steered {

/// Error categories. They map one-to-one onto C API status codes and,
/// coarsely, onto CLI exit codes (see exit_code()).
enum class ErrorKind {
  usage,         // bad arguments or configuration
  data,          // malformed or inconsistent input data
  io,            // file could not be read or written
  out_of_range,  // token id outside the vocabulary
  incompatible,  // providers do not share a vocabulary
  transport,     // network failure or timeout
  protocol,      // remote peer answered with something invalid
  internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

const char* to_string(ErrorKind kind) noexcept;

/// 0 success, 1 usage, 2 data, 3 transport.
int exit_code(ErrorKind kind) noexcept;

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace steered
