#include "proulearn/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace proulearn {

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax of empty vector");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

ProbMatrix softmax_rows(const FeatureMatrix& logits) {
  ProbMatrix out(logits.rows, logits.cols);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const auto row = softmax(logits.row(r));
    std::copy(row.begin(), row.end(), out.row(r).begin());
  }
  return out;
}

std::vector<double> min_max_normalize(std::span<const double> v) {
  if (v.empty()) return {};
  const auto [mn_it, mx_it] = std::minmax_element(v.begin(), v.end());
  const double mn = *mn_it, mx = *mx_it;
  std::vector<double> out(v.size());
  if (mn == mx) {
    std::fill(out.begin(), out.end(), 0.5);
    return out;
  }
  const double range = mx - mn;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mn) / range;
  return out;
}

double entropy(std::span<const double> p) {
  double e = 0.0;
  for (const double v : p) e -= v * std::log(v + kLogEps);
  return e;
}

}  // namespace proulearn
