#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "proulearn/adapt.hpp"
#include "proulearn/matrix.hpp"
#include "proulearn/net.hpp"
#include "proulearn/synth.hpp"

namespace proulearn {

enum class SelectionStrategy { hpe, entropy, kmeans, random_pick };

const char* strategy_name(SelectionStrategy s);
bool parse_strategy(const std::string& name, SelectionStrategy& out);

// Baseline pickers standing against the homogeneity-entropy selection:
// random = uniform without replacement; entropy = top-budget by own
// prediction entropy; kmeans = Lloyd's in embedding space, one pick nearest
// each center. All return ceil(budget * n) indices with oracle labels.
ActiveSet baseline_select(SelectionStrategy strategy, const FeatureMatrix& embeddings,
                          const ProbMatrix& probs, double budget_fraction,
                          const LabelVector& oracle, std::uint64_t seed);

enum class MmdKernel { linear, rbf };

// Compactness diagnostic: per class, squared distance between the class's
// embedding mean and its centroid, averaged over classes (linear kernel).
// The rbf variant uses a median-heuristic bandwidth for curve-shape
// comparison. Throws on an empty class unless skip_empty is set (training
// curves tolerate transiently empty classes).
double mmd_to_centroids(const FeatureMatrix& embeddings,
                        std::span<const std::uint32_t> labels,
                        const FeatureMatrix& centroids,
                        MmdKernel kernel = MmdKernel::linear,
                        bool skip_empty = false);

struct StrategyStats {
  SelectionStrategy strategy = SelectionStrategy::hpe;
  std::vector<double> accuracies;  // one per seed, paired across strategies
  double mean = 0.0;
  double stddev = 0.0;
};

struct BenchReport {
  std::vector<StrategyStats> strategies;
  // Per-seed MMD curves from the hpe strategy, with and without the
  // centroid-alignment loss (paired runs).
  std::vector<std::vector<double>> mmd_with_cc;
  std::vector<std::vector<double>> mmd_without_cc;
  std::vector<double> final_acc_with_cc;
  std::vector<double> final_acc_without_cc;
  double source_accuracy_mean = 0.0;  // source model on source test split
  double gap_accuracy_mean = 0.0;     // source model on target before adapting
  bool domain_gap_detected = false;
  std::vector<std::uint64_t> seeds;
};

struct BenchOptions {
  std::vector<SelectionStrategy> strategies = {
      SelectionStrategy::random_pick, SelectionStrategy::entropy,
      SelectionStrategy::kmeans, SelectionStrategy::hpe};
  std::size_t num_seeds = 10;
  bool cc_ablation = true;  // add the paired without-cc run
  PretrainConfig pretrain;
  AdaptConfig adapt;
  std::size_t jobs = 1;
};

// Paired comparison: per seed, one generated domain pair and one pretrained
// source model shared by every strategy run (only the selection step
// differs) plus the cc-ablated run. Requires num_seeds >= 3. Results are
// independent of the jobs count.
BenchReport run_benchmark(const SynthSpec& spec, const BenchOptions& options);

}  // namespace proulearn
