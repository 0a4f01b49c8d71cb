#include "proulearn/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "proulearn/numeric.hpp"

namespace proulearn {

namespace {

double clamp_ratio(double num, double sa, double sb) {
  const double denom = std::sqrt(sa) * std::sqrt(sb);
  if (denom < kDenomEps) return 0.0;
  return std::clamp(num / denom, -1.0, 1.0);
}

double vector_mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double correlation_index(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("correlation_index: need equal lengths >= 2");
  const double ma = vector_mean(a);
  const double mb = vector_mean(b);
  double num = 0.0, sa = 0.0, sb = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double da = a[d] - ma;
    const double db = b[d] - mb;
    num += da * db;
    sa += da * da;
    sb += db * db;
  }
  return clamp_ratio(num, sa, sb);
}

double similarity(SimilarityMetric metric, std::span<const double> a,
                  std::span<const double> b) {
  switch (metric) {
    case SimilarityMetric::correlation:
      return correlation_index(a, b);
    case SimilarityMetric::cosine: {
      if (a.size() != b.size()) throw std::invalid_argument("cosine: length mismatch");
      double num = 0.0, sa = 0.0, sb = 0.0;
      for (std::size_t d = 0; d < a.size(); ++d) {
        num += a[d] * b[d];
        sa += a[d] * a[d];
        sb += b[d] * b[d];
      }
      return clamp_ratio(num, sa, sb);
    }
    case SimilarityMetric::euclidean: {
      if (a.size() != b.size()) throw std::invalid_argument("euclidean: length mismatch");
      double sq = 0.0;
      for (std::size_t d = 0; d < a.size(); ++d) {
        const double diff = a[d] - b[d];
        sq += diff * diff;
      }
      return -std::sqrt(sq);
    }
  }
  throw std::invalid_argument("unknown similarity metric");
}

NeighborGraph knn_by_similarity(const FeatureMatrix& features, std::size_t k,
                                SimilarityMetric metric) {
  const std::size_t n = features.rows;
  if (k < 1 || k > n - 1) throw std::invalid_argument("knn: k out of [1, n-1]");

  // Centered rows and squared norms reproduce correlation_index bit-exactly
  // while skipping the per-pair mean recomputation.
  FeatureMatrix centered;
  std::vector<double> sq_norm;
  if (metric == SimilarityMetric::correlation) {
    centered = FeatureMatrix(n, features.cols);
    sq_norm.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = features.row(i);
      const double m = vector_mean(row);
      double s = 0.0;
      for (std::size_t d = 0; d < features.cols; ++d) {
        const double c = row[d] - m;
        centered.at(i, d) = c;
        s += c * c;
      }
      sq_norm[i] = s;
    }
  }

  NeighborGraph graph;
  graph.num_samples = n;
  graph.k = k;
  graph.neighbors.resize(n * k);
  graph.corr_values.resize(n * k);

  std::vector<std::pair<double, std::uint32_t>> candidates(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double value;
      if (metric == SimilarityMetric::correlation) {
        double num = 0.0;
        const auto ri = centered.row(i);
        const auto rj = centered.row(j);
        for (std::size_t d = 0; d < features.cols; ++d) num += ri[d] * rj[d];
        value = clamp_ratio(num, sq_norm[i], sq_norm[j]);
      } else {
        value = similarity(metric, features.row(i), features.row(j));
      }
      candidates[c++] = {value, static_cast<std::uint32_t>(j)};
    }
    std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end(),
                      [](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first > b.first;
                        return a.second < b.second;
                      });
    for (std::size_t r = 0; r < k; ++r) {
      graph.neighbors[i * k + r] = candidates[r].second;
      graph.corr_values[i * k + r] = candidates[r].first;
    }
  }
  return graph;
}

NeighborGraph knn_by_correlation(const FeatureMatrix& features, std::size_t k) {
  return knn_by_similarity(features, k, SimilarityMetric::correlation);
}

EntropyScores neighbor_entropy(const NeighborGraph& graph, const ProbMatrix& probs) {
  if (probs.rows != graph.num_samples)
    throw std::invalid_argument("neighbor_entropy: probs rows do not match graph");
  EntropyScores scores;
  scores.raw.assign(graph.num_samples, 0.0);
  if (graph.k > 0) {
    std::vector<double> mean_probs(probs.cols);
    for (std::size_t i = 0; i < graph.num_samples; ++i) {
      std::fill(mean_probs.begin(), mean_probs.end(), 0.0);
      for (const std::uint32_t j : graph.row(i)) {
        const auto p = probs.row(j);
        for (std::size_t c = 0; c < probs.cols; ++c) mean_probs[c] += p[c];
      }
      for (double& v : mean_probs) v /= static_cast<double>(graph.k);
      scores.raw[i] = entropy(mean_probs);
    }
  }
  scores.normalized = min_max_normalize(scores.raw);
  return scores;
}

}  // namespace proulearn
