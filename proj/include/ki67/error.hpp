#pragma once

#include <stdexcept>
#include <string>

namespace ki67 {

// Maps one-to-one onto the CLI exit codes (see docs/formats.md).
enum class ErrorKind {
  Usage = 1,
  Input = 2,
  Model = 3,
  Processing = 4,
};

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

}  // namespace ki67
