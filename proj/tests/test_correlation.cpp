#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "proulearn/correlation.hpp"
#include "proulearn/numeric.hpp"
#include "proulearn/random.hpp"
#include "test_support.hpp"

using namespace proulearn;

namespace {

// Reference Pearson written independently of the library: two-pass means,
// clamped like the production contract.
double pearson_ref(std::span<const double> a, std::span<const double> b) {
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(a.size());
  mb /= static_cast<double>(b.size());
  double dot = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  const double denom = std::sqrt(va) * std::sqrt(vb);
  if (denom < kDenomEps) return 0.0;
  return std::clamp(dot / denom, -1.0, 1.0);
}

// Exhaustive knn reference: full similarity row, sort by similarity
// descending then index ascending, keep k.
NeighborGraph brute_knn(const FeatureMatrix& x, std::size_t k, SimilarityMetric metric) {
  NeighborGraph g;
  g.num_samples = x.rows;
  g.k = k;
  g.neighbors.resize(x.rows * k);
  g.corr_values.resize(x.rows * k);
  for (std::size_t i = 0; i < x.rows; ++i) {
    std::vector<std::pair<double, std::size_t>> cand;
    for (std::size_t j = 0; j < x.rows; ++j) {
      if (j == i) continue;
      const double s = metric == SimilarityMetric::correlation
                           ? pearson_ref(x.row(i), x.row(j))
                           : similarity(metric, x.row(i), x.row(j));
      cand.emplace_back(s, j);
    }
    std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::size_t r = 0; r < k; ++r) {
      g.neighbors[i * k + r] = static_cast<std::uint32_t>(cand[r].second);
      g.corr_values[i * k + r] = cand[r].first;
    }
  }
  return g;
}

}  // namespace

TEST_CASE("correlation hand cases") {
  const std::vector<double> a = {1.0, 2.0, 3.0};
  CHECK(correlation_index(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  const std::vector<double> x = {1.0, 2.0, 3.0, 4.0};
  const std::vector<double> y = {2.0, 4.0, 6.0, 8.0};
  CHECK(correlation_index(x, y) == doctest::Approx(1.0).epsilon(1e-12));

  const std::vector<double> p = {1.0, 2.0, 3.0};
  const std::vector<double> q = {3.0, 1.0, 2.0};
  CHECK(correlation_index(p, q) == doctest::Approx(-0.5).epsilon(1e-12));

  const std::vector<double> flat = {5.0, 5.0, 5.0};
  CHECK(correlation_index(flat, a) == 0.0);
  CHECK(correlation_index(a, flat) == 0.0);

  CHECK_THROWS_AS(correlation_index(std::vector<double>{1.0}, std::vector<double>{2.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(correlation_index(a, x), std::invalid_argument);
}

TEST_CASE("correlation stays clamped and matches the reference") {
  RandomSource rng(101, 0);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t len = 2 + rng.next_below(30);
    std::vector<double> a(len), b(len);
    for (double& v : a) v = rng.next_uniform(-10.0, 10.0);
    for (double& v : b) v = rng.next_uniform(-10.0, 10.0);
    const double c = correlation_index(a, b);
    CHECK(c >= -1.0);
    CHECK(c <= 1.0);
    CHECK(c == doctest::Approx(pearson_ref(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("correlation is exactly symmetric") {
  RandomSource rng(102, 0);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t len = 2 + rng.next_below(30);
    std::vector<double> a(len), b(len);
    for (double& v : a) v = rng.next_uniform(-5.0, 5.0);
    for (double& v : b) v = rng.next_uniform(-5.0, 5.0);
    CHECK(correlation_index(a, b) == correlation_index(b, a));
  }
}

TEST_CASE("correlation is invariant to positive affine maps and flips sign on negative") {
  RandomSource rng(103, 0);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t len = 3 + rng.next_below(20);
    std::vector<double> a(len), b(len);
    for (double& v : a) v = rng.next_uniform(-5.0, 5.0);
    for (double& v : b) v = rng.next_uniform(-5.0, 5.0);
    const double alpha = rng.next_uniform(0.1, 10.0);
    const double beta = rng.next_uniform(-5.0, 5.0);
    std::vector<double> scaled = a;
    for (double& v : scaled) v = alpha * v + beta;
    const double base = correlation_index(a, b);
    CHECK(correlation_index(scaled, b) == doctest::Approx(base).epsilon(1e-9));
    for (double& v : scaled) v = -v;
    CHECK(correlation_index(scaled, b) == doctest::Approx(-base).epsilon(1e-9));
  }
}

TEST_CASE("similarity metrics") {
  const std::vector<double> a = {1.0, 0.0, 2.0};
  const std::vector<double> b = {2.0, 0.0, 4.0};
  CHECK(similarity(SimilarityMetric::cosine, a, b) == doctest::Approx(1.0).epsilon(1e-12));
  const std::vector<double> c = {0.0, 3.0, 2.0};
  // Negated distance so that higher always means closer.
  const double expect = -std::sqrt(1.0 + 9.0 + 0.0);
  CHECK(similarity(SimilarityMetric::euclidean, a, c) ==
        doctest::Approx(expect).epsilon(1e-12));
  CHECK(similarity(SimilarityMetric::correlation, a, b) == correlation_index(a, b));
}

TEST_CASE("knn matches the exhaustive reference on small inputs") {
  RandomSource rng(104, 0);
  for (int rep = 0; rep < 120; ++rep) {
    const std::size_t n = 2 + rng.next_below(63);
    const std::size_t cols = 2 + rng.next_below(6);
    const std::size_t k = 1 + rng.next_below(n - 1);
    const FeatureMatrix x = testutil::random_matrix(n, cols, rng, -3.0, 3.0);
    const NeighborGraph got = knn_by_correlation(x, k);
    const NeighborGraph want = brute_knn(x, k, SimilarityMetric::correlation);
    REQUIRE(got.k == k);
    REQUIRE(got.neighbors.size() == n * k);
    for (std::size_t i = 0; i < n * k; ++i) {
      CHECK(got.neighbors[i] == want.neighbors[i]);
      CHECK(got.corr_values[i] == doctest::Approx(want.corr_values[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("knn by similarity matches the reference under every metric") {
  RandomSource rng(105, 0);
  for (const auto metric : {SimilarityMetric::correlation, SimilarityMetric::cosine,
                            SimilarityMetric::euclidean}) {
    for (int rep = 0; rep < 30; ++rep) {
      const std::size_t n = 3 + rng.next_below(40);
      const std::size_t k = 1 + rng.next_below(n - 1);
      const FeatureMatrix x = testutil::random_matrix(n, 4, rng, -3.0, 3.0);
      const NeighborGraph got = knn_by_similarity(x, k, metric);
      const NeighborGraph want = brute_knn(x, k, metric);
      for (std::size_t i = 0; i < n * k; ++i) {
        CHECK(got.neighbors[i] == want.neighbors[i]);
        CHECK(got.corr_values[i] == doctest::Approx(want.corr_values[i]).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("knn hand case with an anti-correlated row") {
  FeatureMatrix x(3, 3);
  const double rows[3][3] = {{1.0, 2.0, 3.0}, {3.0, 2.0, 1.0}, {1.0, 2.0, 2.5}};
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) x.at(r, c) = rows[r][c];
  const NeighborGraph g = knn_by_correlation(x, 1);
  CHECK(g.neighbors[0] == 2);  // row 1 is perfectly anti-correlated with row 0
  CHECK(g.neighbors[1] == 2);
  CHECK(g.neighbors[2] == 0);
  CHECK(g.corr_values[0] > 0.9);
}

TEST_CASE("knn with k equal to n-1 returns everyone else") {
  RandomSource rng(106, 0);
  const FeatureMatrix x = testutil::random_matrix(9, 4, rng);
  const NeighborGraph g = knn_by_correlation(x, 8);
  for (std::size_t i = 0; i < 9; ++i) {
    std::vector<std::uint32_t> row(g.row(i).begin(), g.row(i).end());
    std::sort(row.begin(), row.end());
    std::vector<std::uint32_t> expect;
    for (std::uint32_t j = 0; j < 9; ++j)
      if (j != i) expect.push_back(j);
    CHECK(row == expect);
  }
}

TEST_CASE("duplicate rows are mutual nearest neighbors") {
  RandomSource rng(107, 0);
  FeatureMatrix x = testutil::random_matrix(6, 5, rng);
  std::copy(x.row(0).begin(), x.row(0).end(), x.row(3).begin());
  const NeighborGraph g = knn_by_correlation(x, 2);
  CHECK(g.neighbors[0 * 2] == 3);
  CHECK(g.neighbors[3 * 2] == 0);
  CHECK(g.corr_values[0 * 2] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("knn structural properties") {
  RandomSource rng(108, 0);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 4 + rng.next_below(28);
    const std::size_t k = 1 + rng.next_below(n - 1);
    const FeatureMatrix x = testutil::random_matrix(n, 3, rng);
    const NeighborGraph g = knn_by_correlation(x, k);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = g.row(i);
      const auto corr = g.corr_row(i);
      for (std::size_t r = 0; r < k; ++r) {
        CHECK(row[r] != i);
        if (r > 0) CHECK(corr[r] <= corr[r - 1]);
      }
    }
  }
}

TEST_CASE("knn rejects out of range k") {
  RandomSource rng(109, 0);
  const FeatureMatrix x = testutil::random_matrix(5, 3, rng);
  CHECK_THROWS_AS(knn_by_correlation(x, 0), std::invalid_argument);
  CHECK_THROWS_AS(knn_by_correlation(x, 5), std::invalid_argument);
  CHECK_NOTHROW(knn_by_correlation(x, 4));
}

TEST_CASE("neighbor entropy hand cases") {
  // Two samples, each the other's only neighbor duplicated to K=2, holding
  // opposite one-hot predictions: the neighborhood mean is uniform.
  ProbMatrix probs(2, 2);
  probs.at(0, 0) = 1.0;
  probs.at(1, 1) = 1.0;
  NeighborGraph g;
  g.num_samples = 2;
  g.k = 2;
  g.neighbors = {0, 1, 0, 1};
  g.corr_values = {1.0, 1.0, 1.0, 1.0};
  const EntropyScores e = neighbor_entropy(g, probs);
  CHECK(e.raw[0] == doctest::Approx(std::log(2.0)).epsilon(1e-6));
  CHECK(e.raw[1] == doctest::Approx(std::log(2.0)).epsilon(1e-6));

  // Agreeing one-hot neighborhoods carry no uncertainty.
  ProbMatrix agree(2, 2);
  agree.at(0, 0) = 1.0;
  agree.at(1, 0) = 1.0;
  const EntropyScores ea = neighbor_entropy(g, agree);
  CHECK(ea.raw[0] == doctest::Approx(0.0).epsilon(1e-7));

  // Uniform predictions over 4 classes hit the ln(4) ceiling.
  ProbMatrix uni(3, 4, 0.25);
  NeighborGraph gu;
  gu.num_samples = 3;
  gu.k = 2;
  gu.neighbors = {1, 2, 0, 2, 0, 1};
  gu.corr_values = {1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  const EntropyScores eu = neighbor_entropy(gu, uni);
  for (const double v : eu.raw) CHECK(v == doctest::Approx(std::log(4.0)).epsilon(1e-6));
}

TEST_CASE("neighbor entropy stays inside the guarded bounds") {
  RandomSource rng(110, 0);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = 3 + rng.next_below(14);
    const std::size_t m = 2 + rng.next_below(5);
    const std::size_t k = 1 + rng.next_below(n - 1);
    const ProbMatrix probs = testutil::random_probs(n, m, rng);
    const FeatureMatrix x = testutil::random_matrix(n, 3, rng);
    const NeighborGraph g = knn_by_correlation(x, k);
    const EntropyScores e = neighbor_entropy(g, probs);
    const double ceiling = std::log(static_cast<double>(m));
    for (const double v : e.raw) {
      CHECK(v >= -static_cast<double>(m) * kLogEps);
      CHECK(v <= ceiling + static_cast<double>(m) * kLogEps);
    }
    for (const double v : e.normalized) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("neighbor entropy is invariant to class permutation") {
  RandomSource rng(111, 0);
  const std::size_t n = 10, m = 4;
  ProbMatrix probs = testutil::random_probs(n, m, rng);
  const FeatureMatrix x = testutil::random_matrix(n, 3, rng);
  const NeighborGraph g = knn_by_correlation(x, 3);
  const EntropyScores base = neighbor_entropy(g, probs);

  std::vector<std::size_t> perm = {2, 0, 3, 1};
  ProbMatrix shuffled(n, m);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) shuffled.at(r, perm[c]) = probs.at(r, c);
  const EntropyScores permuted = neighbor_entropy(g, shuffled);
  for (std::size_t i = 0; i < n; ++i)
    CHECK(permuted.raw[i] == doctest::Approx(base.raw[i]).epsilon(1e-12));
}

TEST_CASE("neighbor entropy with no edges is all zeros") {
  RandomSource rng(112, 0);
  const ProbMatrix probs = testutil::random_probs(6, 3, rng);
  const EntropyScores e = neighbor_entropy(NeighborGraph::empty(6), probs);
  for (const double v : e.raw) CHECK(v == 0.0);
  for (const double v : e.normalized) CHECK(v == 0.5);
}

TEST_CASE("neighbor entropy rejects mismatched probs") {
  RandomSource rng(113, 0);
  const FeatureMatrix x = testutil::random_matrix(6, 3, rng);
  const NeighborGraph g = knn_by_correlation(x, 2);
  const ProbMatrix probs = testutil::random_probs(5, 3, rng);
  CHECK_THROWS_AS(neighbor_entropy(g, probs), std::invalid_argument);
}
