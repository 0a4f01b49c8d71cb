#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "proulearn/correlation.hpp"
#include "proulearn/numeric.hpp"
#include "proulearn/random.hpp"
#include "proulearn/selection.hpp"
#include "test_support.hpp"

using namespace proulearn;

namespace {

HomogeneityScores make_h(std::vector<double> raw) {
  HomogeneityScores h;
  h.normalized = min_max_normalize(raw);
  h.raw = std::move(raw);
  return h;
}

EntropyScores make_e(std::vector<double> raw) {
  EntropyScores e;
  e.normalized = min_max_normalize(raw);
  e.raw = std::move(raw);
  return e;
}

LabelVector arbitrary_oracle(std::size_t n, RandomSource& rng, std::uint32_t classes = 4) {
  LabelVector v;
  v.num_classes = classes;
  v.labels.resize(n);
  for (auto& l : v.labels) l = static_cast<std::uint32_t>(rng.next_below(classes));
  return v;
}

// Reference selection: repeated argmax over the surviving pool instead of
// the library's one-shot sort, with the same smaller-index tie rule and
// one-directional neighbor knockout.
ActiveSet brute_select(const SelectionScores& scores, const NeighborGraph& graph,
                       double budget_fraction, const LabelVector& oracle) {
  const std::size_t n = scores.u.size();
  const std::size_t budget = budget_count(budget_fraction, n);
  std::vector<char> gone(n, 0);
  std::vector<std::size_t> picks;
  while (picks.size() < budget) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (gone[i]) continue;
      if (best == n || scores.u[i] > scores.u[best]) best = i;
    }
    if (best == n) break;
    picks.push_back(best);
    gone[best] = 1;
    if (graph.k > 0)
      for (const std::uint32_t j : graph.row(best)) gone[j] = 1;
  }
  ActiveSet set;
  set.budget_fraction = budget_fraction;
  std::sort(picks.begin(), picks.end());
  set.indices = picks;
  for (const std::size_t i : picks) set.labels.push_back(oracle.labels[i]);
  if (picks.size() < budget) set.warning = "exhausted";
  return set;
}

}  // namespace

TEST_CASE("selection scores multiply the normalized components") {
  const SelectionScores s =
      selection_scores(make_h({0.0, 1.0}), make_e({1.0, 0.0}));
  // Normalized components are [0,1] and [1,0]: either zero annihilates.
  CHECK(s.u[0] == 0.0);
  CHECK(s.u[1] == 0.0);

  HomogeneityScores h;
  h.raw = {0.0, 0.0};
  h.normalized = {1.0, 0.5};
  EntropyScores e;
  e.raw = {0.0, 0.0};
  e.normalized = {0.5, 1.0};
  const SelectionScores p = selection_scores(h, e);
  CHECK(p.u[0] == 0.5);
  CHECK(p.u[1] == 0.5);
}

TEST_CASE("all-equal homogeneity degrades to half the entropy score") {
  const auto h = make_h({3.0, 3.0, 3.0, 3.0});
  const auto e = make_e({0.1, 0.7, 0.4, 0.9});
  const SelectionScores s = selection_scores(h, e);
  for (std::size_t i = 0; i < 4; ++i) CHECK(s.u[i] == 0.5 * e.normalized[i]);
}

TEST_CASE("selection scores stay in the unit interval") {
  RandomSource rng(201, 0);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 2 + rng.next_below(30);
    std::vector<double> hr(n), er(n);
    for (double& v : hr) v = rng.next_uniform(0.0, 12.0);
    for (double& v : er) v = rng.next_uniform(0.0, 2.0);
    const SelectionScores s = selection_scores(make_h(hr), make_e(er));
    for (const double u : s.u) {
      CHECK(u >= 0.0);
      CHECK(u <= 1.0);
    }
  }
}

TEST_CASE("selection scores reject mismatched lengths") {
  CHECK_THROWS_AS(selection_scores(make_h({1.0, 2.0}), make_e({1.0, 2.0, 3.0})),
                  std::invalid_argument);
}

TEST_CASE("budget count hand cases") {
  CHECK(budget_count(0.05, 795) == 40);
  CHECK(budget_count(1.0, 123) == 123);
  CHECK(budget_count(0.0001, 10) == 1);
  CHECK(budget_count(0.1, 10) == 1);
  CHECK(budget_count(0.5, 7) == 4);
  CHECK_THROWS_AS(budget_count(0.0, 10), std::invalid_argument);
  CHECK_THROWS_AS(budget_count(1.5, 10), std::invalid_argument);
  CHECK_THROWS_AS(budget_count(-0.1, 10), std::invalid_argument);
  CHECK_THROWS_AS(budget_count(0.5, 0), std::invalid_argument);
}

TEST_CASE("select active matches the reference on small inputs") {
  RandomSource rng(202, 0);
  for (int rep = 0; rep < 150; ++rep) {
    const std::size_t n = 2 + rng.next_below(63);
    const FeatureMatrix x = testutil::random_matrix(n, 4, rng);
    const std::size_t k = rng.next_below(std::min<std::size_t>(n, 9));
    const NeighborGraph graph =
        k == 0 ? NeighborGraph::empty(n) : knn_by_correlation(x, k);
    SelectionScores scores;
    scores.u.resize(n);
    for (double& u : scores.u) u = rng.next_uniform(0.0, 1.0);
    const double budget = rng.next_uniform(0.02, 1.0);
    const LabelVector oracle = arbitrary_oracle(n, rng);

    const ActiveSet got = select_active(scores, graph, budget, oracle);
    const ActiveSet want = brute_select(scores, graph, budget, oracle);
    CHECK(got.indices == want.indices);
    CHECK(got.labels == want.labels);
    CHECK(got.warning.empty() == want.warning.empty());
  }
}

TEST_CASE("select active hand trace with one exclusion") {
  SelectionScores scores;
  scores.u = {0.9, 0.8, 0.1};
  NeighborGraph g;
  g.num_samples = 3;
  g.k = 1;
  g.neighbors = {1, 0, 0};
  g.corr_values = {0.9, 0.9, 0.5};
  LabelVector oracle;
  oracle.num_classes = 3;
  oracle.labels = {2, 1, 0};
  // Budget ceil(2/3 * 3) = 2: picking 0 knocks out 1, leaving 2.
  const ActiveSet set = select_active(scores, g, 2.0 / 3.0, oracle);
  CHECK(set.indices == std::vector<std::size_t>{0, 2});
  CHECK(set.labels == std::vector<std::uint32_t>{2, 0});
  CHECK(set.warning.empty());
}

TEST_CASE("exhausting the pool stops early with a warning") {
  SelectionScores scores;
  scores.u = {0.4, 0.9, 0.3, 0.2};
  NeighborGraph g;
  g.num_samples = 4;
  g.k = 3;
  g.neighbors = {1, 2, 3, 0, 2, 3, 0, 1, 3, 0, 1, 2};
  g.corr_values = std::vector<double>(12, 0.5);
  LabelVector oracle;
  oracle.num_classes = 2;
  oracle.labels = {0, 1, 0, 1};
  const ActiveSet set = select_active(scores, g, 1.0, oracle);
  CHECK(set.indices == std::vector<std::size_t>{1});
  CHECK_FALSE(set.warning.empty());
}

TEST_CASE("the top scorer is always selected") {
  RandomSource rng(203, 0);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 3 + rng.next_below(30);
    SelectionScores scores;
    scores.u.resize(n);
    for (double& u : scores.u) u = rng.next_uniform(0.0, 1.0);
    const std::size_t top =
        std::max_element(scores.u.begin(), scores.u.end()) - scores.u.begin();
    const FeatureMatrix x = testutil::random_matrix(n, 3, rng);
    const NeighborGraph g = knn_by_correlation(x, 2);
    const LabelVector oracle = arbitrary_oracle(n, rng);
    const ActiveSet set = select_active(scores, g, 0.3, oracle);
    CHECK(std::find(set.indices.begin(), set.indices.end(), top) != set.indices.end());
  }
}

TEST_CASE("selection respects the budget ceiling") {
  RandomSource rng(204, 0);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = 2 + rng.next_below(30);
    SelectionScores scores;
    scores.u.resize(n);
    for (double& u : scores.u) u = rng.next_uniform(0.0, 1.0);
    const std::size_t k = rng.next_below(std::min<std::size_t>(n, 5));
    const FeatureMatrix x = testutil::random_matrix(n, 3, rng);
    const NeighborGraph g = k == 0 ? NeighborGraph::empty(n) : knn_by_correlation(x, k);
    const double budget = rng.next_uniform(0.01, 1.0);
    const ActiveSet set = select_active(scores, g, budget, arbitrary_oracle(n, rng));
    const std::size_t ceiling = budget_count(budget, n);
    CHECK(set.indices.size() <= ceiling);
    CHECK(set.indices.size() >= 1);
    CHECK(std::is_sorted(set.indices.begin(), set.indices.end()));
    CHECK(std::adjacent_find(set.indices.begin(), set.indices.end()) == set.indices.end());
    CHECK((set.indices.size() == ceiling) == set.warning.empty());
  }
}

TEST_CASE("selection is invariant to positive affine rescaling of scores") {
  RandomSource rng(205, 0);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 4 + rng.next_below(24);
    SelectionScores scores;
    scores.u.resize(n);
    for (double& u : scores.u) u = rng.next_uniform(0.0, 1.0);
    SelectionScores rescaled;
    rescaled.u.resize(n);
    for (std::size_t i = 0; i < n; ++i) rescaled.u[i] = 0.3 * scores.u[i] + 0.2;
    const FeatureMatrix x = testutil::random_matrix(n, 3, rng);
    const NeighborGraph g = knn_by_correlation(x, 2);
    const LabelVector oracle = arbitrary_oracle(n, rng);
    const ActiveSet a = select_active(scores, g, 0.4, oracle);
    const ActiveSet b = select_active(rescaled, g, 0.4, oracle);
    CHECK(a.indices == b.indices);
  }
}

TEST_CASE("score ties resolve to the lowest index") {
  SelectionScores scores;
  scores.u = {0.7, 0.7, 0.7, 0.7};
  LabelVector oracle;
  oracle.num_classes = 2;
  oracle.labels = {1, 0, 1, 0};
  const ActiveSet set = select_active(scores, NeighborGraph::empty(4), 0.5, oracle);
  CHECK(set.indices == std::vector<std::size_t>{0, 1});
}

TEST_CASE("active labels copy the oracle") {
  RandomSource rng(206, 0);
  const std::size_t n = 20;
  SelectionScores scores;
  scores.u.resize(n);
  for (double& u : scores.u) u = rng.next_uniform(0.0, 1.0);
  const LabelVector oracle = arbitrary_oracle(n, rng, 5);
  const ActiveSet set = select_active(scores, NeighborGraph::empty(n), 0.25, oracle);
  REQUIRE(set.labels.size() == set.indices.size());
  for (std::size_t j = 0; j < set.indices.size(); ++j)
    CHECK(set.labels[j] == oracle.labels[set.indices[j]]);
}

TEST_CASE("select active validates its inputs") {
  SelectionScores scores;
  scores.u = {0.5, 0.5};
  LabelVector oracle;
  oracle.num_classes = 2;
  oracle.labels = {0, 1};
  CHECK_THROWS_AS(select_active(SelectionScores{}, NeighborGraph::empty(0), 0.5, oracle),
                  std::invalid_argument);
  NeighborGraph mismatched;
  mismatched.num_samples = 3;
  mismatched.k = 1;
  mismatched.neighbors = {1, 2, 0};
  mismatched.corr_values = {0.5, 0.5, 0.5};
  CHECK_THROWS_AS(select_active(scores, mismatched, 0.5, oracle), std::invalid_argument);
  // An edgeless graph carries no index information, so its sample count is
  // deliberately not checked.
  CHECK_NOTHROW(select_active(scores, NeighborGraph::empty(3), 0.5, oracle));
  LabelVector short_oracle;
  short_oracle.num_classes = 2;
  short_oracle.labels = {0};
  CHECK_THROWS_AS(select_active(scores, NeighborGraph::empty(2), 0.5, short_oracle),
                  std::invalid_argument);
}
