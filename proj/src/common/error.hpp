#pragma once

#include <stdexcept>
#include <string>

namespace b4g {

// Mirrors b4g_status in the C API; keep the two in sync.
enum class ErrorKind {
  parse = 1,
  alignment,
  format,
  value,
  config,
  environment,
  shape,
  index,
  truncation,
  divergence,
  io,
  internal,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace b4g
