#include "proulearn/pseudolabel.hpp"

#include <stdexcept>
#include <string>

#include "proulearn/errors.hpp"
#include "proulearn/numeric.hpp"

namespace proulearn {

FeatureMatrix compute_centroids(const FeatureMatrix& embeddings, const ProbMatrix& probs) {
  if (probs.rows != embeddings.rows)
    throw std::invalid_argument("compute_centroids: rows disagree");
  const std::size_t m = probs.cols, d = embeddings.cols;
  FeatureMatrix centroids(m, d);
  for (std::size_t c = 0; c < m; ++c) {
    double mass = 0.0;
    for (std::size_t i = 0; i < probs.rows; ++i) {
      const double p = probs.at(i, c);
      mass += p;
      const auto f = embeddings.row(i);
      for (std::size_t k = 0; k < d; ++k) centroids.at(c, k) += p * f[k];
    }
    if (mass < kDenomEps)
      throw degenerate_class_error(
          "class " + std::to_string(c) + " received no probability mass", c);
    for (std::size_t k = 0; k < d; ++k) centroids.at(c, k) /= mass;
  }
  return centroids;
}

PseudoLabelSet assign_pseudo_labels(const FeatureMatrix& embeddings,
                                    const FeatureMatrix& centroids,
                                    const HomogeneityScores& h,
                                    std::span<const std::size_t> unlabeled_indices,
                                    SimilarityMetric metric) {
  if (centroids.cols != embeddings.cols)
    throw std::invalid_argument("assign_pseudo_labels: embedding dims disagree");
  if (h.raw.size() != embeddings.rows)
    throw std::invalid_argument("assign_pseudo_labels: homogeneity size mismatch");
  const std::size_t m = centroids.rows;

  PseudoLabelSet set;
  set.sample_indices.assign(unlabeled_indices.begin(), unlabeled_indices.end());
  set.labels.reserve(unlabeled_indices.size());
  set.scores.reserve(unlabeled_indices.size());
  for (const std::size_t i : unlabeled_indices) {
    const auto f = embeddings.row(i);
    std::uint32_t best_class = 0;
    double best_z = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      const double z = similarity(metric, f, centroids.row(c)) * h.raw[i];
      if (c == 0 || z > best_z) {
        best_z = z;
        best_class = static_cast<std::uint32_t>(c);
      }
    }
    if (best_z == 0.0) ++set.zero_confidence;
    set.labels.push_back(best_class);
    set.scores.push_back(best_z);
  }
  set.z_norm = min_max_normalize(set.scores);
  return set;
}

}  // namespace proulearn
