#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ddcml {

enum class Errc {
  // volume / file formats
  bad_magic,
  truncated,
  corrupt,
  dimension_mismatch,
  non_finite,
  io,
  // manifests and configuration
  malformed_row,
  unknown_label,
  duplicate_entry,
  invalid_argument,
  // tensors and models
  shape_mismatch,
  index_out_of_range,
  spec_mismatch,
  // data-dependent failures
  empty_input,
  too_few_samples,
  degenerate,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::bad_magic: return "bad magic";
    case Errc::truncated: return "truncated payload";
    case Errc::corrupt: return "corrupt file";
    case Errc::dimension_mismatch: return "dimension mismatch";
    case Errc::non_finite: return "non-finite value";
    case Errc::io: return "i/o error";
    case Errc::malformed_row: return "malformed row";
    case Errc::unknown_label: return "unknown class label";
    case Errc::duplicate_entry: return "duplicate entry";
    case Errc::invalid_argument: return "invalid argument";
    case Errc::shape_mismatch: return "shape mismatch";
    case Errc::index_out_of_range: return "index out of range";
    case Errc::spec_mismatch: return "spec mismatch";
    case Errc::empty_input: return "empty input";
    case Errc::too_few_samples: return "too few samples";
    case Errc::degenerate: return "degenerate input";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI's exit-code mapping) can tell them apart.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace ddcml
