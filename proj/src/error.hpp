#pragma once

#include <stdexcept>
#include <string>

namespace vflow {

enum class ErrorKind {
  argument,
  shape,
  decode,
  io,
  config,
  infeasible,
  numeric,
};

// Every failure raised by the core carries a kind so the C boundary can map
// it onto a status code without string matching.
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

}  // namespace vflow
