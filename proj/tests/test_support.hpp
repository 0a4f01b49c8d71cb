#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "proulearn/matrix.hpp"
#include "proulearn/numeric.hpp"
#include "proulearn/random.hpp"

// Helpers shared by the test binaries.
namespace testutil {

inline proulearn::FeatureMatrix random_matrix(std::size_t rows, std::size_t cols,
                                              proulearn::RandomSource& rng,
                                              double lo = -1.0, double hi = 1.0) {
  proulearn::FeatureMatrix m(rows, cols);
  for (double& v : m.values) v = rng.next_uniform(lo, hi);
  return m;
}

// Entries exactly representable as f32, so binary files reproduce them.
inline proulearn::FeatureMatrix random_matrix_f32(std::size_t rows, std::size_t cols,
                                                  proulearn::RandomSource& rng) {
  proulearn::FeatureMatrix m(rows, cols);
  for (double& v : m.values)
    v = static_cast<double>(static_cast<float>(rng.next_uniform(-8.0, 8.0)));
  return m;
}

// Row-stochastic matrix via softmax of moderate random logits.
inline proulearn::ProbMatrix random_probs(std::size_t rows, std::size_t cols,
                                          proulearn::RandomSource& rng,
                                          double logit_range = 4.0) {
  proulearn::ProbMatrix p(rows, cols);
  std::vector<double> logits(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (double& v : logits) v = rng.next_uniform(-logit_range, logit_range);
    const auto sm = proulearn::softmax(logits);
    std::copy(sm.begin(), sm.end(), p.row(r).begin());
  }
  return p;
}

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (const double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sample_stddev(std::span<const double> v) {
  const double m = mean(v);
  double s = 0.0;
  for (const double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Fractional ranks with tie averaging.
inline std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double shared = 0.5 * static_cast<double>(i + j);
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = shared;
    i = j + 1;
  }
  return r;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  const double ma = mean(a), mb = mean(b);
  double dot = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    dot += da * db;
    va += da * da;
    vb += db * db;
  }
  const double denom = std::sqrt(va) * std::sqrt(vb);
  return denom > 0.0 ? dot / denom : 0.0;
}

inline double spearman(std::span<const double> a, std::span<const double> b) {
  const auto ra = ranks(a), rb = ranks(b);
  return pearson(ra, rb);
}

}  // namespace testutil
