#include "drew/error.hpp"

namespace drew {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::dimension_mismatch: return "dimension_mismatch";
    case Errc::duplicate_id: return "duplicate_id";
    case Errc::format: return "format";
    case Errc::checksum: return "checksum";
    case Errc::io: return "io";
    case Errc::not_found: return "not_found";
  }
  return "unknown";
}

}  // namespace drew
