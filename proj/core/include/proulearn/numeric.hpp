#pragma once

#include <span>
#include <vector>

#include "proulearn/matrix.hpp"

namespace proulearn {

// Guard added inside every logarithm of a probability.
inline constexpr double kLogEps = 1e-8;

// Guard for norm products in correlation denominators.
inline constexpr double kDenomEps = 1e-12;

// Numerically stable softmax (max subtraction).
std::vector<double> softmax(std::span<const double> logits);

// Row-wise softmax of a logits matrix.
ProbMatrix softmax_rows(const FeatureMatrix& logits);

// Maps v affinely onto [0, 1]; an all-equal vector maps to all 0.5 so that
// downstream score products stay finite and neutral.
std::vector<double> min_max_normalize(std::span<const double> v);

// Shannon entropy -sum p log(p + eps), natural log.
double entropy(std::span<const double> p);

}  // namespace proulearn
