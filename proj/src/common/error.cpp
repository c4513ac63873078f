#include "common/error.hpp"

namespace b4g {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::parse: return "parse error";
    case ErrorKind::alignment: return "alignment error";
    case ErrorKind::format: return "format error";
    case ErrorKind::value: return "value error";
    case ErrorKind::config: return "configuration error";
    case ErrorKind::environment: return "environment error";
    case ErrorKind::shape: return "shape error";
    case ErrorKind::index: return "index error";
    case ErrorKind::truncation: return "truncation error";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::io: return "I/O error";
    case ErrorKind::internal: return "internal error";
  }
  return "unknown error";
}

}  // namespace b4g
