#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "proulearn/matrix.hpp"

namespace proulearn {

struct AffineLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;  // out x in, row-major
  std::vector<double> biases;   // out

  AffineLayer() = default;
  AffineLayer(std::size_t in_dim, std::size_t out_dim)
      : in(in_dim), out(out_dim), weights(in_dim * out_dim, 0.0), biases(out_dim, 0.0) {}
};

// Small MLP: tanh backbone layers, a linear bottleneck whose output is the
// embedding, and a linear classifier head. Parameters are doubles in memory
// so finite-difference checks stay clean; checkpoints store f32.
struct NetModel {
  std::vector<AffineLayer> layers;
  std::size_t backbone_count = 0;  // layers before the bottleneck
  std::size_t d_in = 0;
  std::size_t embed_dim = 0;
  std::size_t num_classes = 0;
};

// Xavier-uniform initialization, one RNG stream per layer, zero biases.
NetModel make_net(std::size_t d_in, std::span<const std::size_t> hidden,
                  std::size_t embed_dim, std::size_t num_classes, std::uint64_t seed);

struct ForwardResult {
  FeatureMatrix embeddings;  // n x embed_dim
  FeatureMatrix logits;      // n x num_classes
};

ForwardResult forward(const NetModel& model, const FeatureMatrix& x);

// Mean over the batch of -w * log(softmax_y + eps).
double loss_wce(const FeatureMatrix& logits, std::span<const std::uint32_t> labels,
                std::span<const double> weights);

// Diversity term sum_c mu_c log(mu_c + eps) plus mean per-sample entropy of
// the softmax rows, mu being the batch mean prediction.
double loss_im(const FeatureMatrix& logits);

// Mean of (1 - correlation to the sample's assigned centroid);
// assigned_centroids holds one length-D row per batch sample.
double loss_cc(const FeatureMatrix& embeddings, const FeatureMatrix& assigned_centroids);

// Smoothed cross-entropy for source pretraining; alpha = 0 reduces to
// loss_wce with unit weights.
double loss_ce_smoothed(const FeatureMatrix& logits, std::span<const std::uint32_t> labels,
                        double alpha);

// The adaptation objective is the plain unit-weight sum.
inline double total_loss(double wce, double im, double cc) { return wce + im + cc; }

struct LossTerms {
  double wce = 0.0;
  double im = 0.0;
  double cc = 0.0;
  double total = 0.0;
};

// Which loss terms participate; --ablate-cc clears cc.
struct LossMask {
  bool wce = true;
  bool im = true;
  bool cc = true;
};

struct Gradients {
  std::vector<AffineLayer> layers;  // same shapes as the model
};

struct BackwardResult {
  LossTerms terms;
  Gradients grads;
};

// Analytic gradients of the masked total loss for one batch. Centroids are
// constants here: refinement rebuilds them outside the gradient path.
BackwardResult backward(const NetModel& model, const FeatureMatrix& batch,
                        std::span<const std::uint32_t> labels,
                        std::span<const double> weights,
                        const FeatureMatrix& assigned_centroids,
                        const LossMask& mask = {});

// Smoothed-CE gradients for source pretraining, same plumbing.
BackwardResult pretrain_backward(const NetModel& model, const FeatureMatrix& batch,
                                 std::span<const std::uint32_t> labels, double alpha);

struct OptimState {
  double lr_backbone = 1e-2;
  double lr_bottleneck = 1e-1;  // always 10x backbone
  double lr_classifier = 1e-2;
  double momentum = 0.9;
  bool freeze_classifier = false;
  std::vector<AffineLayer> velocity;  // same shapes as the model, zeroed
};

OptimState make_optim(const NetModel& model, double lr_backbone);

// Classic momentum: v = m*v + g; p -= lr_group * v. Throws divergence_error
// on non-finite gradients.
void sgd_step(NetModel& model, const Gradients& grads, OptimState& opt);

struct PretrainConfig {
  std::vector<std::size_t> hidden = {32};
  std::size_t embed_dim = 16;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double lr = 1e-2;
  double label_smoothing = 0.1;
  std::uint64_t seed = 0;
};

// Supervised source training with label smoothing; deterministic per seed.
NetModel pretrain_source(const FeatureMatrix& features, const LabelVector& labels,
                         const PretrainConfig& cfg);

// Checkpoint files: magic "PULM", u32 version, u32 layer_count, per layer
// (u32 out, u32 in, f32 weights row-major, f32 biases), then u32 d_in,
// u32 embed_dim, u32 num_classes, u32 activation tag (0 = tanh).
void save_model(const NetModel& model, const std::filesystem::path& path);
NetModel load_model(const std::filesystem::path& path);

}  // namespace proulearn
