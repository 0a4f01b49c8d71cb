#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace proulearn {

// File could not be opened, read, or written.
class io_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// What a format_error is complaining about.
enum class format_fault {
  malformed_header,
  dimension_mismatch,
  non_finite_value,
  bad_value,
  truncated,
};

// File content violates the declared format. row()/col() give the offending
// cell when one exists, npos otherwise.
class format_error : public std::runtime_error {
public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  format_error(format_fault fault, const std::string& msg,
               std::size_t row = npos, std::size_t col = npos)
      : std::runtime_error(msg), fault_(fault), row_(row), col_(col) {}

  format_fault fault() const noexcept { return fault_; }
  std::size_t row() const noexcept { return row_; }
  std::size_t col() const noexcept { return col_; }

private:
  format_fault fault_;
  std::size_t row_;
  std::size_t col_;
};

// Training produced a non-finite loss or gradient.
class divergence_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// A class received no probability mass when forming centroids.
class degenerate_class_error : public std::runtime_error {
public:
  degenerate_class_error(const std::string& msg, std::size_t class_index)
      : std::runtime_error(msg), class_index_(class_index) {}

  std::size_t class_index() const noexcept { return class_index_; }

private:
  std::size_t class_index_;
};

}  // namespace proulearn
