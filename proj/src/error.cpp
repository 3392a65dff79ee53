#include "steered/error.hpp"

namespace steered {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::data: return "data";
    case ErrorKind::io: return "io";
    case ErrorKind::out_of_range: return "out_of_range";
    case ErrorKind::incompatible: return "incompatible";
    case ErrorKind::transport: return "transport";
    case ErrorKind::protocol: return "protocol";
    case ErrorKind::internal: return "internal";
  }
  return "internal";
}

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::usage: return 1;
    case ErrorKind::transport:
    case ErrorKind::protocol: return 3;
    default: return 2;
  }
}

}  // namespace steered
