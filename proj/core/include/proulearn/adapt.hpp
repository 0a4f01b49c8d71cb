#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "proulearn/correlation.hpp"
#include "proulearn/matrix.hpp"
#include "proulearn/net.hpp"
#include "proulearn/pseudolabel.hpp"
#include "proulearn/selection.hpp"

namespace proulearn {

// Stream tag for the homogeneity ensemble. Shared with the standalone
// selection command so both derive identical forests from one master seed.
inline constexpr std::uint64_t kHpeSeedStream = 0x6870652d74726565ULL;

struct AdaptConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double budget_fraction = 0.05;
  std::size_t trees = 200;           // HPE ensemble size
  std::size_t k_neighbors = 8;       // 0 disables entropy and exclusion
  std::size_t subsample_size = 256;  // clamped to n at run time
  std::uint64_t seed = 0;
  // Tuned for the small feature-space networks this library trains; the
  // bottleneck always runs at ten times this rate.
  double lr_backbone = 1e-4;
  bool shuffle = true;  // deterministic per-epoch shuffling
  LossMask mask;
  bool freeze_classifier = false;
  // Recompute homogeneity scores from current embeddings at refinement;
  // default keeps the one-shot scores from the source model.
  bool refresh_hpe = false;
  // Keep every pseudo-label round in the report (see pseudo_rounds).
  bool record_pseudo = false;
  SimilarityMetric metric = SimilarityMetric::correlation;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  LossTerms loss;         // batch-size-weighted means over the epoch
  double pseudo_accuracy = 0.0;  // current pseudo-labels vs oracle
  double target_accuracy = 0.0;  // argmax predictions vs oracle
  // Class-compactness diagnostic: rbf discrepancy between each predicted
  // class's embeddings and centroids recomputed from the epoch-end state,
  // taken before any refinement, so the curve is a pure function of the
  // model.
  double mmd = 0.0;
};

struct RefinementRecord {
  std::size_t epoch = 0;
  double pseudo_accuracy = 0.0;
  std::size_t relabeled = 0;  // pseudo-labels that changed
};

struct AdaptReport {
  ActiveSet active;
  double initial_pseudo_accuracy = 0.0;
  std::size_t zero_confidence = 0;  // flagged assignments at the last pass
  std::vector<EpochRecord> epochs;
  std::vector<RefinementRecord> refinements;
  // Only when record_pseudo: the initial assignment, then one set per
  // refinement, aligned with the refinements vector.
  std::vector<PseudoLabelSet> pseudo_rounds;
  double final_target_accuracy = 0.0;
  double final_mmd = 0.0;
};

struct AdaptResult {
  NetModel model;
  AdaptReport report;
};

// Per-sample training weights over the full target set.
struct BatchWeights {
  std::vector<double> w;
};

// Actively labeled samples weigh 1 + U (in [1, 2]); pseudo-labeled samples
// weigh their normalized confidence floored at 1e-3, so every active sample
// outweighs every pseudo-labeled one. z_norm holds one entry per inactive
// sample, in ascending sample order; active_mask.size() must equal the
// score count and the two partitions must cover it exactly.
BatchWeights compute_batch_weights(const std::vector<std::uint8_t>& active_mask,
                                   const SelectionScores& u_scores,
                                   const std::vector<double>& z_norm);

// Full adaptation loop: embeddings from the source model, homogeneity
// scores, neighbor graph and entropy, one-shot active selection, centroids
// and pseudo-labels, then the weighted three-loss training epochs with
// refinement every max(1, epochs/10) epochs. oracle_labels simulates the
// annotator: training sees only the actively selected entries, the report's
// accuracy metrics read the rest. preselected substitutes an externally
// chosen active set (benchmark baselines); everything downstream is shared.
AdaptResult adapt_target(const NetModel& source_model, const FeatureMatrix& target,
                         const LabelVector& oracle_labels, const AdaptConfig& cfg,
                         const ActiveSet* preselected = nullptr);

// Fraction of argmax-logit predictions equal to labels (ties to the lowest
// class index).
double evaluate(const NetModel& model, const FeatureMatrix& features,
                const LabelVector& labels);

}  // namespace proulearn
