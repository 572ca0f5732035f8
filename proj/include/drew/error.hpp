#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace drew {

enum class Errc {
  invalid_argument,
  dimension_mismatch,
  duplicate_id,
  format,
  checksum,
  io,
  not_found,
};

std::string_view to_string(Errc code) noexcept;

/// Library-wide exception. The code lets callers (the CLI in particular)
/// separate precondition violations from bad input data.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(Errc::invalid_argument, message);
}

}  // namespace drew
