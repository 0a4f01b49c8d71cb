#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "proulearn/correlation.hpp"
#include "proulearn/hpe.hpp"

namespace proulearn {

// Per-sample utility U: product of the normalized homogeneity and
// normalized neighbor entropy, in [0, 1].
struct SelectionScores {
  std::vector<double> u;
};

struct ActiveSet {
  std::vector<std::size_t> indices;   // unique, ascending
  std::vector<std::uint32_t> labels;  // oracle labels, parallel to indices
  double budget_fraction = 0.0;
  // Set when neighbor exclusion exhausted the pool before the budget.
  std::string warning;
};

SelectionScores selection_scores(const HomogeneityScores& h, const EntropyScores& e);

// ceil(budget_fraction * n), floored at one sample; the shared budget rule
// for every selection strategy. budget_fraction must be in (0, 1].
std::size_t budget_count(double budget_fraction, std::size_t n);

// Greedy pick of ceil(budget_fraction * n) samples by descending score,
// ties on the smaller index. Picking a sample knocks out its K neighbors
// for the rest of the round; exclusion is one-directional. The oracle is
// the ground-truth label vector standing in for the annotator.
ActiveSet select_active(const SelectionScores& scores, const NeighborGraph& graph,
                        double budget_fraction, const LabelVector& oracle);

}  // namespace proulearn
