#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace proulearn {

// Dense row-major matrix of feature vectors, one sample per row.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), values(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

  std::span<double> row(std::size_t r) {
    return {values.data() + r * cols, cols};
  }
  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * cols, cols};
  }

  // Throws std::invalid_argument on shape/size mismatch or non-finite
  // entries (message names the first offending row and column).
  void validate() const;
};

// Integer class labels in [0, num_classes).
struct LabelVector {
  std::vector<std::uint32_t> labels;
  std::uint32_t num_classes = 0;

  std::size_t size() const { return labels.size(); }

  void validate() const;
};

// Row-stochastic matrix, one probability vector per row.
struct ProbMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  ProbMatrix() = default;
  ProbMatrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), values(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * cols, cols};
  }
  std::span<double> row(std::size_t r) {
    return {values.data() + r * cols, cols};
  }

  // Entries in [0, 1], each row summing to 1 within 1e-6.
  void validate() const;
};

// Copies the given rows into a new matrix, in the given order.
FeatureMatrix gather_rows(const FeatureMatrix& m, std::span<const std::size_t> idx);

}  // namespace proulearn
