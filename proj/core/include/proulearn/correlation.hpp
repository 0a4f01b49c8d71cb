#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "proulearn/matrix.hpp"

namespace proulearn {

// K nearest neighbors per sample, most similar first. k may be 0 (no
// edges), which disables neighbor entropy and selection exclusion.
struct NeighborGraph {
  std::size_t num_samples = 0;
  std::size_t k = 0;
  std::vector<std::uint32_t> neighbors;  // num_samples * k
  std::vector<double> corr_values;       // parallel to neighbors

  static NeighborGraph empty(std::size_t n) {
    NeighborGraph g;
    g.num_samples = n;
    return g;
  }

  std::span<const std::uint32_t> row(std::size_t i) const {
    return {neighbors.data() + i * k, k};
  }
  std::span<const double> corr_row(std::size_t i) const {
    return {corr_values.data() + i * k, k};
  }
};

// Per-sample neighborhood uncertainty.
struct EntropyScores {
  std::vector<double> raw;
  std::vector<double> normalized;
};

// Pearson-style similarity of two equal-length vectors, centered per vector,
// in [-1, 1]. Zero-variance input yields 0 by the denominator guard.
double correlation_index(std::span<const double> a, std::span<const double> b);

// Alternative pairwise measures for the ablation flag; correlation is the
// pipeline default.
enum class SimilarityMetric { correlation, cosine, euclidean };

// Higher is closer under every metric (euclidean returns the negated
// distance).
double similarity(SimilarityMetric metric, std::span<const double> a,
                  std::span<const double> b);

// Exhaustive K-nearest-neighbor search under correlation_index. Ties break
// on the smaller index; self is excluded. Requires 1 <= k <= rows - 1.
NeighborGraph knn_by_correlation(const FeatureMatrix& features, std::size_t k);

// Same search under an arbitrary metric.
NeighborGraph knn_by_similarity(const FeatureMatrix& features, std::size_t k,
                                SimilarityMetric metric);

// Entropy of the mean probability vector over each sample's neighborhood,
// logs guarded by kLogEps. k == 0 yields all-zero raw scores.
EntropyScores neighbor_entropy(const NeighborGraph& graph, const ProbMatrix& probs);

}  // namespace proulearn
