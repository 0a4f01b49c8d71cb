#include "proulearn/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "proulearn/errors.hpp"
#include "proulearn/numeric.hpp"
#include "proulearn/random.hpp"
#include "proulearn/selection.hpp"

namespace proulearn {

namespace {

constexpr std::uint64_t kRandomPickStream = 0x72616e642d70636bULL;
constexpr std::uint64_t kKmeansStream = 0x6b6d65616e730000ULL;
constexpr std::uint64_t kSeedFanout = 0xbe4c5eed00000000ULL;
constexpr std::uint64_t kPretrainTag = 0x7072657472616947ULL;
constexpr std::uint64_t kAdaptTag = 0x6164617074536565ULL;
constexpr std::uint64_t kSelectTag = 0x73656c6563745365ULL;

double sq_distance(std::span<const double> a, std::span<const double> b) {
  double sq = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double diff = a[d] - b[d];
    sq += diff * diff;
  }
  return sq;
}

std::vector<std::size_t> kmeans_pick(const FeatureMatrix& embeddings, std::size_t budget,
                                     std::uint64_t seed) {
  const std::size_t n = embeddings.rows;
  const std::size_t dim = embeddings.cols;
  const std::size_t k = budget;

  RandomSource rng(seed, kKmeansStream);
  const auto init = rng.sample_without_replacement(n, k);
  FeatureMatrix centers(k, dim);
  for (std::size_t c = 0; c < k; ++c) {
    const auto src = embeddings.row(init[c]);
    std::copy(src.begin(), src.end(), centers.row(c).begin());
  }

  std::vector<std::size_t> assignment(n, 0);
  std::vector<double> dist(n, 0.0);
  for (std::size_t iter = 0; iter < 50; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_sq = sq_distance(embeddings.row(i), centers.row(0));
      for (std::size_t c = 1; c < k; ++c) {
        const double sq = sq_distance(embeddings.row(i), centers.row(c));
        if (sq < best_sq) {
          best_sq = sq;
          best = c;
        }
      }
      assignment[i] = best;
      dist[i] = best_sq;
    }
    FeatureMatrix sums(k, dim);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      counts[assignment[i]] += 1;
      const auto src = embeddings.row(i);
      auto dst = sums.row(assignment[i]);
      for (std::size_t d = 0; d < dim; ++d) dst[d] += src[d];
    }
    std::vector<char> repaired(n, 0);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        auto dst = centers.row(c);
        const auto src = sums.row(c);
        for (std::size_t d = 0; d < dim; ++d)
          dst[d] = src[d] / static_cast<double>(counts[c]);
        continue;
      }
      // Empty cluster: reseed from the sample farthest from its own center.
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (repaired[i]) continue;
        if (far == n || dist[i] > dist[far]) far = i;
      }
      if (far == n) continue;
      repaired[far] = 1;
      const auto src = embeddings.row(far);
      std::copy(src.begin(), src.end(), centers.row(c).begin());
    }
  }

  std::vector<std::size_t> picks;
  picks.reserve(k);
  std::vector<char> taken(n, 0);
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t best = n;
    double best_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const double sq = sq_distance(embeddings.row(i), centers.row(c));
      if (best == n || sq < best_sq) {
        best_sq = sq;
        best = i;
      }
    }
    taken[best] = 1;
    picks.push_back(best);
  }
  return picks;
}

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_stddev(std::span<const double> v, double mean) {
  if (v.size() < 2) return 0.0;
  double acc = 0.0;
  for (const double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::vector<double> accuracies;  // parallel to options.strategies
  std::vector<double> mmd_with;
  std::vector<double> mmd_without;
  double final_with = 0.0;
  double final_without = 0.0;
  double source_accuracy = 0.0;
  double gap_accuracy = 0.0;
};

std::vector<double> mmd_curve(const AdaptReport& report) {
  std::vector<double> curve;
  curve.reserve(report.epochs.size());
  for (const auto& e : report.epochs) curve.push_back(e.mmd);
  return curve;
}

}  // namespace

const char* strategy_name(SelectionStrategy s) {
  switch (s) {
    case SelectionStrategy::hpe: return "hpe";
    case SelectionStrategy::entropy: return "entropy";
    case SelectionStrategy::kmeans: return "kmeans";
    case SelectionStrategy::random_pick: return "random";
  }
  return "unknown";
}

bool parse_strategy(const std::string& name, SelectionStrategy& out) {
  if (name == "hpe") out = SelectionStrategy::hpe;
  else if (name == "entropy") out = SelectionStrategy::entropy;
  else if (name == "kmeans") out = SelectionStrategy::kmeans;
  else if (name == "random") out = SelectionStrategy::random_pick;
  else return false;
  return true;
}

ActiveSet baseline_select(SelectionStrategy strategy, const FeatureMatrix& embeddings,
                          const ProbMatrix& probs, double budget_fraction,
                          const LabelVector& oracle, std::uint64_t seed) {
  const std::size_t n = embeddings.rows;
  if (n == 0) throw std::invalid_argument("baseline_select: empty embedding matrix");
  if (probs.rows != n) throw std::invalid_argument("baseline_select: probs row mismatch");
  if (oracle.labels.size() != n)
    throw std::invalid_argument("baseline_select: oracle labels size mismatch");
  if (strategy == SelectionStrategy::hpe)
    throw std::invalid_argument("baseline_select: hpe selection runs inside the pipeline");

  const std::size_t budget = budget_count(budget_fraction, n);
  std::vector<std::size_t> picks;
  switch (strategy) {
    case SelectionStrategy::random_pick: {
      RandomSource rng(seed, kRandomPickStream);
      picks = rng.sample_without_replacement(n, budget);
      break;
    }
    case SelectionStrategy::entropy: {
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::vector<double> scores(n);
      for (std::size_t i = 0; i < n; ++i) scores[i] = entropy(probs.row(i));
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
      });
      picks.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(budget));
      break;
    }
    case SelectionStrategy::kmeans:
      picks = kmeans_pick(embeddings, budget, seed);
      break;
    case SelectionStrategy::hpe:
      break;  // rejected above
  }

  std::sort(picks.begin(), picks.end());
  ActiveSet set;
  set.budget_fraction = budget_fraction;
  set.indices = std::move(picks);
  set.labels.reserve(set.indices.size());
  for (const std::size_t i : set.indices) set.labels.push_back(oracle.labels[i]);
  return set;
}

double mmd_to_centroids(const FeatureMatrix& embeddings,
                        std::span<const std::uint32_t> labels,
                        const FeatureMatrix& centroids, MmdKernel kernel,
                        bool skip_empty) {
  const std::size_t n = embeddings.rows;
  const std::size_t dim = embeddings.cols;
  const std::size_t m = centroids.rows;
  if (labels.size() != n) throw std::invalid_argument("mmd: labels size mismatch");
  if (centroids.cols != dim) throw std::invalid_argument("mmd: centroid dimension mismatch");
  if (m == 0) throw std::invalid_argument("mmd: no centroids");
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i] >= m) throw std::invalid_argument("mmd: label exceeds centroid count");

  std::vector<std::vector<std::size_t>> members(m);
  for (std::size_t i = 0; i < n; ++i) members[labels[i]].push_back(i);

  double bandwidth_sq = 1.0;
  if (kernel == MmdKernel::rbf) {
    // Median heuristic over all pairwise sample distances.
    std::vector<double> dists;
    dists.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        dists.push_back(std::sqrt(sq_distance(embeddings.row(i), embeddings.row(j))));
    if (!dists.empty()) {
      const std::size_t mid = dists.size() / 2;
      std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid),
                       dists.end());
      const double median = dists[mid];
      if (median > 1e-12) bandwidth_sq = median * median;
    }
  }
  const auto rbf = [&](double sq) { return std::exp(-sq / (2.0 * bandwidth_sq)); };

  double acc = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < m; ++c) {
    const auto& idx = members[c];
    if (idx.empty()) {
      if (skip_empty) continue;
      throw degenerate_class_error("mmd: class has no members", c);
    }
    const double inv = 1.0 / static_cast<double>(idx.size());
    if (kernel == MmdKernel::linear) {
      std::vector<double> mean(dim, 0.0);
      for (const std::size_t i : idx) {
        const auto row = embeddings.row(i);
        for (std::size_t d = 0; d < dim; ++d) mean[d] += row[d];
      }
      for (double& v : mean) v *= inv;
      acc += sq_distance(mean, centroids.row(c));
    } else {
      // Biased MMD^2 between the class sample and the centroid singleton.
      double kxx = 0.0;
      for (const std::size_t i : idx)
        for (const std::size_t j : idx)
          kxx += rbf(sq_distance(embeddings.row(i), embeddings.row(j)));
      double kxo = 0.0;
      for (const std::size_t i : idx)
        kxo += rbf(sq_distance(embeddings.row(i), centroids.row(c)));
      acc += kxx * inv * inv - 2.0 * kxo * inv + 1.0;
    }
    counted += 1;
  }
  return counted == 0 ? 0.0 : acc / static_cast<double>(counted);
}

BenchReport run_benchmark(const SynthSpec& spec, const BenchOptions& options) {
  if (options.num_seeds < 3)
    throw std::invalid_argument("run_benchmark: need at least 3 seeds");
  if (options.strategies.empty())
    throw std::invalid_argument("run_benchmark: no strategies given");

  const std::size_t num_seeds = options.num_seeds;
  std::vector<SeedOutcome> outcomes(num_seeds);
  std::vector<std::exception_ptr> errors(num_seeds);

  const auto run_seed = [&](std::size_t i) {
    SeedOutcome out;
    out.seed = derive_seed(spec.seed, kSeedFanout + i);
    SynthSpec s = spec;
    s.seed = out.seed;
    const SynthData data = generate_shifted_domains(s);

    PretrainConfig pc = options.pretrain;
    pc.seed = derive_seed(out.seed, kPretrainTag);
    const NetModel source = pretrain_source(data.source_x, data.source_y, pc);
    out.source_accuracy = evaluate(source, data.source_x, data.source_y);
    out.gap_accuracy = evaluate(source, data.target_x, data.target_y);

    AdaptConfig ac = options.adapt;
    ac.seed = derive_seed(out.seed, kAdaptTag);

    bool need_embeddings = false;
    for (const auto st : options.strategies)
      if (st != SelectionStrategy::hpe) need_embeddings = true;
    ForwardResult fr;
    ProbMatrix probs;
    if (need_embeddings) {
      fr = forward(source, data.target_x);
      probs = softmax_rows(fr.logits);
    }

    bool have_with_cc = false;
    out.accuracies.resize(options.strategies.size(), 0.0);
    for (std::size_t j = 0; j < options.strategies.size(); ++j) {
      const SelectionStrategy st = options.strategies[j];
      AdaptResult res;
      if (st == SelectionStrategy::hpe) {
        res = adapt_target(source, data.target_x, data.target_y, ac);
        out.mmd_with = mmd_curve(res.report);
        out.final_with = res.report.final_target_accuracy;
        have_with_cc = true;
      } else {
        const ActiveSet pre =
            baseline_select(st, fr.embeddings, probs, ac.budget_fraction, data.target_y,
                            derive_seed(out.seed, kSelectTag + j));
        res = adapt_target(source, data.target_x, data.target_y, ac, &pre);
      }
      out.accuracies[j] = res.report.final_target_accuracy;
    }

    if (options.cc_ablation) {
      if (!have_with_cc) {
        const AdaptResult res = adapt_target(source, data.target_x, data.target_y, ac);
        out.mmd_with = mmd_curve(res.report);
        out.final_with = res.report.final_target_accuracy;
      }
      AdaptConfig ablated = ac;  // same seed: paired except for the masked loss
      ablated.mask.cc = false;
      const AdaptResult res = adapt_target(source, data.target_x, data.target_y, ablated);
      out.mmd_without = mmd_curve(res.report);
      out.final_without = res.report.final_target_accuracy;
    }
    outcomes[i] = std::move(out);
  };

  const std::size_t workers = std::max<std::size_t>(
      1, std::min(options.jobs == 0 ? 1 : options.jobs, num_seeds));
  if (workers == 1) {
    for (std::size_t i = 0; i < num_seeds; ++i) run_seed(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= num_seeds) return;
          try {
            run_seed(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  BenchReport report;
  report.strategies.resize(options.strategies.size());
  for (std::size_t j = 0; j < options.strategies.size(); ++j) {
    auto& stats = report.strategies[j];
    stats.strategy = options.strategies[j];
    stats.accuracies.reserve(num_seeds);
    for (const auto& out : outcomes) stats.accuracies.push_back(out.accuracies[j]);
    stats.mean = mean_of(stats.accuracies);
    stats.stddev = sample_stddev(stats.accuracies, stats.mean);
  }
  std::vector<double> src, gap;
  for (const auto& out : outcomes) {
    report.seeds.push_back(out.seed);
    src.push_back(out.source_accuracy);
    gap.push_back(out.gap_accuracy);
    if (options.cc_ablation) {
      report.mmd_with_cc.push_back(out.mmd_with);
      report.mmd_without_cc.push_back(out.mmd_without);
      report.final_acc_with_cc.push_back(out.final_with);
      report.final_acc_without_cc.push_back(out.final_without);
    }
  }
  report.source_accuracy_mean = mean_of(src);
  report.gap_accuracy_mean = mean_of(gap);
  report.domain_gap_detected =
      report.source_accuracy_mean - report.gap_accuracy_mean > 0.02;
  return report;
}

}  // namespace proulearn
