#pragma once

#include <stdexcept>
#include <string>

namespace mohn {

enum class ErrorKind {
  zero_norm,
  dimension_mismatch,
  empty_input,
  non_finite,
  invalid_spec,
  stale_cache,
  invalid_capacity,
  batch_too_large,
  indivisible_capacity,
  not_normalized,
  invalid_subset_size,
  invalid_shape,
  missing_file,
  truncated_record,
  label_out_of_range,
  invalid_image,
  empty_batch,
  shape_mismatch,
  config_invalid,
  io_failure,
  version_mismatch,
  corrupt_checkpoint,
  k_too_large,
  empty_index,
};

const char* to_string(ErrorKind kind);

// Carries the failure category so callers (and the CLI exit-code mapping)
// can react without parsing the message text.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace mohn
