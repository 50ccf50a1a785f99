#pragma once

#include <stdexcept>
#include <string>

namespace cis {

// All recoverable failures surface as cis::Error. The message starts with the
// subsystem name so CLI callers can emit one machine-parsable line.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

}  // namespace cis
