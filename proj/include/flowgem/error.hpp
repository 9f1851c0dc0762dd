#pragma once

#include <stdexcept>
#include <string>

namespace flowgem {

// Categories map one-to-one onto the CLI exit codes (3 data, 4 numerical).
enum class DataErrc {
  io,
  ragged_row,
  unparseable_cell,
  fully_missing_column,
  too_few_observed,
  zero_variance,
  dimension_mismatch,
  invalid_argument,
  masked_read,
};

class DataError : public std::runtime_error {
 public:
  DataError(DataErrc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  DataErrc code() const noexcept { return code_; }

 private:
  DataErrc code_;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace flowgem
