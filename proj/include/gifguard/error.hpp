#pragma once

#include <stdexcept>
#include <string>

namespace gifguard {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed GIF data. `block()` names the structure that failed to parse.
class ParseError : public Error {
 public:
  ParseError(std::string block, const std::string& what)
      : Error(block + ": " + what), block_(std::move(block)) {}

  const std::string& block() const noexcept { return block_; }

 private:
  std::string block_;
};

}  // namespace gifguard
