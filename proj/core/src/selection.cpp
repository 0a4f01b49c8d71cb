#include "proulearn/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace proulearn {

SelectionScores selection_scores(const HomogeneityScores& h, const EntropyScores& e) {
  if (h.normalized.size() != e.normalized.size())
    throw std::invalid_argument("selection_scores: length mismatch");
  SelectionScores s;
  s.u.resize(h.normalized.size());
  for (std::size_t i = 0; i < s.u.size(); ++i)
    s.u[i] = h.normalized[i] * e.normalized[i];
  return s;
}

std::size_t budget_count(double budget_fraction, std::size_t n) {
  if (n == 0) throw std::invalid_argument("budget_count: empty sample set");
  if (!(budget_fraction > 0.0 && budget_fraction <= 1.0))
    throw std::invalid_argument("budget_count: budget_fraction out of (0, 1]");
  // ceil with a nudge: B*n can land just above an integer in floating
  // arithmetic (0.1 * 10 -> 1.0000000000000002).
  return std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(budget_fraction * static_cast<double>(n) - 1e-9)));
}

ActiveSet select_active(const SelectionScores& scores, const NeighborGraph& graph,
                        double budget_fraction, const LabelVector& oracle) {
  const std::size_t n = scores.u.size();
  if (n == 0) throw std::invalid_argument("select_active: empty score vector");
  if (graph.k > 0 && graph.num_samples != n)
    throw std::invalid_argument("select_active: graph size mismatch");
  if (oracle.labels.size() != n)
    throw std::invalid_argument("select_active: oracle labels size mismatch");

  const std::size_t budget = budget_count(budget_fraction, n);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores.u[a] != scores.u[b]) return scores.u[a] > scores.u[b];
    return a < b;
  });

  std::vector<char> excluded(n, 0);
  ActiveSet set;
  set.budget_fraction = budget_fraction;
  for (const std::size_t i : order) {
    if (set.indices.size() == budget) break;
    if (excluded[i]) continue;
    set.indices.push_back(i);
    excluded[i] = 1;
    if (graph.k > 0)
      for (const std::uint32_t j : graph.row(i)) excluded[j] = 1;
  }
  if (set.indices.size() < budget)
    set.warning = "neighbor exclusion exhausted candidates: selected " +
                  std::to_string(set.indices.size()) + " of " + std::to_string(budget);

  std::sort(set.indices.begin(), set.indices.end());
  set.labels.reserve(set.indices.size());
  for (const std::size_t i : set.indices) set.labels.push_back(oracle.labels[i]);
  return set;
}

}  // namespace proulearn
