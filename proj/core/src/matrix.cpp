#include "proulearn/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace proulearn {

void FeatureMatrix::validate() const {
  if (rows < 1) throw std::invalid_argument("feature matrix needs at least one row");
  if (cols < 2) throw std::invalid_argument("feature matrix needs at least two columns");
  if (values.size() != rows * cols)
    throw std::invalid_argument("feature matrix storage size does not match shape");
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (!std::isfinite(at(r, c)))
        throw std::invalid_argument("non-finite value at row " + std::to_string(r) +
                                    ", col " + std::to_string(c));
    }
  }
}

void LabelVector::validate() const {
  if (num_classes < 1) throw std::invalid_argument("label vector needs num_classes >= 1");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes)
      throw std::invalid_argument("label " + std::to_string(labels[i]) + " at index " +
                                  std::to_string(i) + " exceeds num_classes");
  }
}

void ProbMatrix::validate() const {
  if (values.size() != rows * cols)
    throw std::invalid_argument("probability matrix storage size does not match shape");
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double p = at(r, c);
      if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("probability out of [0,1] at row " + std::to_string(r) +
                                    ", col " + std::to_string(c));
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6)
      throw std::invalid_argument("probability row " + std::to_string(r) +
                                  " sums to " + std::to_string(sum));
  }
}

FeatureMatrix gather_rows(const FeatureMatrix& m, std::span<const std::size_t> idx) {
  FeatureMatrix out(idx.size(), m.cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto src = m.row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace proulearn
