#pragma once

#include <stdexcept>
#include <string>

namespace wbk {

// Broad failure classes; the CLI maps them onto process exit codes.
enum class ErrorKind {
  Usage,    // bad arguments or configuration
  Data,     // unreadable/malformed input, empty masks, I/O failures
  Numeric,  // NaN/Inf during training, failed gradient checks
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

}  // namespace wbk
