#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "proulearn/correlation.hpp"
#include "proulearn/hpe.hpp"
#include "proulearn/matrix.hpp"

namespace proulearn {

// Probability-weighted class centroids over the full target set:
// o_c = sum_i p_ic * f_i / sum_i p_ic. Throws degenerate_class_error when a
// class's mass falls below kDenomEps.
FeatureMatrix compute_centroids(const FeatureMatrix& embeddings, const ProbMatrix& probs);

// Pseudo-labels for the unlabeled samples only; actively labeled samples
// never appear here.
struct PseudoLabelSet {
  std::vector<std::size_t> sample_indices;  // the unlabeled indices, as given
  std::vector<std::uint32_t> labels;
  std::vector<double> scores;   // winning similarity * raw homogeneity
  std::vector<double> z_norm;   // min-max normalized scores
  std::size_t zero_confidence = 0;  // samples whose every score was 0
};

// Label = argmax over classes of similarity(embedding, centroid) * h_raw
// (ties to the lowest class). h multiplies every class equally, so it only
// shapes the confidence scores, never the argmax. The metric parameter
// exists for the measurement-strategy ablation; correlation is the default.
PseudoLabelSet assign_pseudo_labels(const FeatureMatrix& embeddings,
                                    const FeatureMatrix& centroids,
                                    const HomogeneityScores& h,
                                    std::span<const std::size_t> unlabeled_indices,
                                    SimilarityMetric metric = SimilarityMetric::correlation);

}  // namespace proulearn
