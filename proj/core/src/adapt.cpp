#include "proulearn/adapt.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "proulearn/bench.hpp"
#include "proulearn/errors.hpp"
#include "proulearn/hpe.hpp"
#include "proulearn/numeric.hpp"
#include "proulearn/pseudolabel.hpp"
#include "proulearn/random.hpp"

namespace proulearn {

namespace {

constexpr std::uint64_t kAdaptShuffleStream = 0x61646170742d7368ULL;
constexpr double kWeightFloor = 1e-3;

double label_agreement(std::span<const std::uint32_t> got,
                       std::span<const std::size_t> at,
                       const LabelVector& oracle) {
  if (at.empty()) return 1.0;  // vacuous: nothing is pseudo-labeled
  std::size_t hits = 0;
  for (std::size_t i = 0; i < at.size(); ++i)
    if (got[i] == oracle.labels[at[i]]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(at.size());
}

double accuracy_from_logits(const FeatureMatrix& logits, const LabelVector& labels) {
  std::size_t hits = 0;
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const auto row = logits.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols; ++c)
      if (row[c] > row[best]) best = c;
    if (best == labels.labels[r]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows);
}

}  // namespace

BatchWeights compute_batch_weights(const std::vector<std::uint8_t>& active_mask,
                                   const SelectionScores& u_scores,
                                   const std::vector<double>& z_norm) {
  const std::size_t n = active_mask.size();
  if (u_scores.u.size() != n)
    throw std::invalid_argument("compute_batch_weights: mask and scores disagree");
  std::size_t actives = 0;
  for (const auto a : active_mask) actives += a != 0;
  if (actives + z_norm.size() != n)
    throw std::invalid_argument("compute_batch_weights: partitions must cover every sample");
  BatchWeights out;
  out.w.resize(n);
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i)
    out.w[i] = active_mask[i] ? 1.0 + u_scores.u[i] : std::max(z_norm[j++], kWeightFloor);
  return out;
}

AdaptResult adapt_target(const NetModel& source_model, const FeatureMatrix& target,
                         const LabelVector& oracle_labels, const AdaptConfig& cfg,
                         const ActiveSet* preselected) {
  target.validate();
  oracle_labels.validate();
  const std::size_t n = target.rows;
  if (oracle_labels.labels.size() != n)
    throw std::invalid_argument("adapt_target: oracle labels do not match target rows");
  if (source_model.d_in != target.cols)
    throw std::invalid_argument("adapt_target: model input dim does not match target");
  if (source_model.num_classes != oracle_labels.num_classes)
    throw std::invalid_argument("adapt_target: class counts disagree");
  if (cfg.epochs < 1) throw std::invalid_argument("adapt_target: epochs must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("adapt_target: batch_size >= 1");
  if (cfg.k_neighbors > n - 1)
    throw std::invalid_argument("adapt_target: k_neighbors out of [0, n-1]");

  AdaptResult result;
  result.model = source_model;
  NetModel& model = result.model;
  AdaptReport& report = result.report;

  // Selection phase: everything below runs once, on source-model features.
  ForwardResult initial = forward(model, target);
  ProbMatrix probs = softmax_rows(initial.logits);

  const std::size_t subsample = std::max<std::size_t>(1, std::min(cfg.subsample_size, n));
  HpeEnsemble ensemble =
      build_ensemble(initial.embeddings, cfg.trees, subsample, derive_seed(cfg.seed, kHpeSeedStream));
  HomogeneityScores h = homogeneity_scores(ensemble, initial.embeddings);

  const NeighborGraph graph =
      cfg.k_neighbors == 0 ? NeighborGraph::empty(n)
                           : knn_by_similarity(initial.embeddings, cfg.k_neighbors, cfg.metric);
  const EntropyScores e = neighbor_entropy(graph, probs);
  const SelectionScores u = selection_scores(h, e);

  report.active = preselected
                      ? *preselected
                      : select_active(u, graph, cfg.budget_fraction, oracle_labels);

  std::vector<std::uint8_t> is_active(n, 0);
  for (const std::size_t i : report.active.indices) {
    if (i >= n) throw std::invalid_argument("adapt_target: active index out of range");
    is_active[i] = 1;
  }
  std::vector<std::size_t> unlabeled;
  unlabeled.reserve(n - report.active.indices.size());
  for (std::size_t i = 0; i < n; ++i)
    if (!is_active[i]) unlabeled.push_back(i);

  // Labels seen by training: oracle truth on the active set (immutable from
  // here on), pseudo-labels elsewhere.
  std::vector<std::uint32_t> assigned(n, 0);
  for (std::size_t j = 0; j < report.active.indices.size(); ++j)
    assigned[report.active.indices[j]] = report.active.labels[j];

  FeatureMatrix centroids = compute_centroids(initial.embeddings, probs);
  PseudoLabelSet pseudo =
      assign_pseudo_labels(initial.embeddings, centroids, h, unlabeled, cfg.metric);
  for (std::size_t j = 0; j < unlabeled.size(); ++j) assigned[unlabeled[j]] = pseudo.labels[j];
  std::vector<double> weights = compute_batch_weights(is_active, u, pseudo.z_norm).w;
  report.initial_pseudo_accuracy = label_agreement(pseudo.labels, unlabeled, oracle_labels);
  report.zero_confidence = pseudo.zero_confidence;
  if (cfg.record_pseudo) report.pseudo_rounds.push_back(pseudo);

  OptimState opt = make_optim(model, cfg.lr_backbone);
  opt.freeze_classifier = cfg.freeze_classifier;

  const std::size_t refine_period = std::max<std::size_t>(1, cfg.epochs / 10);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  std::vector<std::uint32_t> batch_labels;
  std::vector<double> batch_weights;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.shuffle) {
      RandomSource rng(derive_seed(cfg.seed, kAdaptShuffleStream), epoch);
      rng.shuffle(order);
    }

    LossTerms sums;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - start);
      const std::span<const std::size_t> idx(order.data() + start, count);
      const FeatureMatrix batch = gather_rows(target, idx);
      batch_labels.resize(count);
      batch_weights.resize(count);
      FeatureMatrix batch_centroids(count, centroids.cols);
      for (std::size_t i = 0; i < count; ++i) {
        batch_labels[i] = assigned[idx[i]];
        batch_weights[i] = weights[idx[i]];
        const auto c = centroids.row(batch_labels[i]);
        std::copy(c.begin(), c.end(), batch_centroids.row(i).begin());
      }
      const BackwardResult back =
          backward(model, batch, batch_labels, batch_weights, batch_centroids, cfg.mask);
      if (!std::isfinite(back.terms.total))
        throw divergence_error("adaptation loss is not finite");
      sgd_step(model, back.grads, opt);
      const double scale = static_cast<double>(count);
      sums.wce += scale * back.terms.wce;
      sums.im += scale * back.terms.im;
      sums.cc += scale * back.terms.cc;
      sums.total += scale * back.terms.total;
    }

    ForwardResult cur = forward(model, target);

    // The epoch record is taken before any refinement below. Its mmd column
    // is the class-compactness diagnostic: rbf discrepancy between each
    // predicted class's embedding distribution and centroids recomputed from
    // the current state, so the curve is a pure function of the model and
    // free of refinement-schedule jumps.
    EpochRecord record;
    record.epoch = epoch;
    const double inv_n = 1.0 / static_cast<double>(n);
    record.loss = {sums.wce * inv_n, sums.im * inv_n, sums.cc * inv_n, sums.total * inv_n};
    record.pseudo_accuracy = label_agreement(pseudo.labels, unlabeled, oracle_labels);
    record.target_accuracy = accuracy_from_logits(cur.logits, oracle_labels);
    {
      const ProbMatrix record_probs = softmax_rows(cur.logits);
      std::vector<std::uint32_t> predicted(n);
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < cur.logits.cols; ++c)
          if (cur.logits.at(i, c) > cur.logits.at(i, best)) best = c;
        predicted[i] = static_cast<std::uint32_t>(best);
      }
      const FeatureMatrix fresh = compute_centroids(cur.embeddings, record_probs);
      record.mmd = mmd_to_centroids(cur.embeddings, predicted, fresh, MmdKernel::rbf,
                                    /*skip_empty=*/true);
    }
    report.epochs.push_back(record);

    if (epoch % refine_period == 0) {
      const ProbMatrix cur_probs = softmax_rows(cur.logits);
      if (cfg.refresh_hpe) {
        HpeEnsemble fresh = build_ensemble(cur.embeddings, cfg.trees, subsample,
                                           derive_seed(cfg.seed, kHpeSeedStream + epoch));
        h = homogeneity_scores(fresh, cur.embeddings);
      }
      centroids = compute_centroids(cur.embeddings, cur_probs);
      PseudoLabelSet refined =
          assign_pseudo_labels(cur.embeddings, centroids, h, unlabeled, cfg.metric);
      std::size_t relabeled = 0;
      for (std::size_t j = 0; j < unlabeled.size(); ++j) {
        if (refined.labels[j] != pseudo.labels[j]) ++relabeled;
        assigned[unlabeled[j]] = refined.labels[j];
      }
      weights = compute_batch_weights(is_active, u, refined.z_norm).w;
      pseudo = std::move(refined);
      report.zero_confidence = pseudo.zero_confidence;
      report.refinements.push_back(
          {epoch, label_agreement(pseudo.labels, unlabeled, oracle_labels), relabeled});
      if (cfg.record_pseudo) report.pseudo_rounds.push_back(pseudo);
      for (std::size_t j = 0; j < report.active.indices.size(); ++j)
        assert(assigned[report.active.indices[j]] == report.active.labels[j]);
    }
  }

  report.final_target_accuracy = report.epochs.back().target_accuracy;
  report.final_mmd = report.epochs.back().mmd;
  return result;
}

double evaluate(const NetModel& model, const FeatureMatrix& features,
                const LabelVector& labels) {
  if (labels.labels.size() != features.rows)
    throw std::invalid_argument("evaluate: labels do not match features");
  const ForwardResult fr = forward(model, features);
  return accuracy_from_logits(fr.logits, labels);
}

}  // namespace proulearn
