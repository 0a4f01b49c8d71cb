#include "proulearn/net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "binio.hpp"
#include "proulearn/correlation.hpp"
#include "proulearn/errors.hpp"
#include "proulearn/numeric.hpp"
#include "proulearn/random.hpp"

namespace proulearn {

namespace {

using namespace binio;

constexpr char kModelMagic[4] = {'P', 'U', 'L', 'M'};
constexpr std::uint32_t kModelVersion = 1;
constexpr std::uint32_t kActivationTanh = 0;

constexpr std::uint64_t kInitStream = 0x6e65742d696e6974ULL;
constexpr std::uint64_t kShuffleStream = 0x7368756666ULL;

FeatureMatrix affine_forward(const AffineLayer& layer, const FeatureMatrix& in) {
  FeatureMatrix out(in.rows, layer.out);
  for (std::size_t r = 0; r < in.rows; ++r) {
    const auto x = in.row(r);
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double* w = layer.weights.data() + o * layer.in;
      double acc = layer.biases[o];
      for (std::size_t i = 0; i < layer.in; ++i) acc += w[i] * x[i];
      out.at(r, o) = acc;
    }
  }
  return out;
}

// Activations per layer boundary: acts[0] = input, acts[l+1] = output of
// layer l (post-tanh for backbone layers).
struct ForwardCache {
  std::vector<FeatureMatrix> acts;
};

ForwardCache forward_cached(const NetModel& model, const FeatureMatrix& x) {
  if (x.cols != model.d_in)
    throw std::invalid_argument("forward: input dimension does not match model");
  ForwardCache cache;
  cache.acts.reserve(model.layers.size() + 1);
  cache.acts.push_back(x);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    FeatureMatrix z = affine_forward(model.layers[l], cache.acts.back());
    if (l < model.backbone_count)
      for (double& v : z.values) v = std::tanh(v);
    cache.acts.push_back(std::move(z));
  }
  return cache;
}

Gradients zero_gradients(const NetModel& model) {
  Gradients g;
  g.layers.reserve(model.layers.size());
  for (const auto& layer : model.layers) g.layers.emplace_back(layer.in, layer.out);
  return g;
}

// Backpropagates dlogits (and an extra gradient arriving directly at the
// embeddings, from the centroid-alignment term) through the stack.
Gradients backprop(const NetModel& model, const ForwardCache& cache,
                   const FeatureMatrix& dlogits, const FeatureMatrix& dembed_extra) {
  Gradients grads = zero_gradients(model);
  const std::size_t nb = dlogits.rows;
  const std::size_t last = model.layers.size() - 1;

  // Classifier.
  {
    const AffineLayer& cls = model.layers[last];
    AffineLayer& g = grads.layers[last];
    const FeatureMatrix& emb = cache.acts[last];
    for (std::size_t r = 0; r < nb; ++r) {
      for (std::size_t o = 0; o < cls.out; ++o) {
        const double d = dlogits.at(r, o);
        g.biases[o] += d;
        double* gw = g.weights.data() + o * cls.in;
        const auto e = emb.row(r);
        for (std::size_t i = 0; i < cls.in; ++i) gw[i] += d * e[i];
      }
    }
  }

  // Gradient at the embeddings: classifier backprop plus the direct term.
  FeatureMatrix delta(nb, model.embed_dim);
  {
    const AffineLayer& cls = model.layers[last];
    for (std::size_t r = 0; r < nb; ++r) {
      for (std::size_t i = 0; i < cls.in; ++i) {
        double acc = dembed_extra.rows ? dembed_extra.at(r, i) : 0.0;
        for (std::size_t o = 0; o < cls.out; ++o)
          acc += dlogits.at(r, o) * cls.weights[o * cls.in + i];
        delta.at(r, i) = acc;
      }
    }
  }

  // Bottleneck (linear) and backbone (tanh) layers.
  for (std::size_t l = last; l-- > 0;) {
    const AffineLayer& layer = model.layers[l];
    AffineLayer& g = grads.layers[l];
    const FeatureMatrix& in = cache.acts[l];
    // delta holds dL/d(output of layer l); backbone outputs are tanh(z), so
    // fold in the tanh derivative first. The bottleneck is linear.
    if (l < model.backbone_count) {
      const FeatureMatrix& a = cache.acts[l + 1];
      for (std::size_t idx = 0; idx < delta.values.size(); ++idx)
        delta.values[idx] *= 1.0 - a.values[idx] * a.values[idx];
    }
    for (std::size_t r = 0; r < nb; ++r) {
      const auto x = in.row(r);
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double d = delta.at(r, o);
        g.biases[o] += d;
        double* gw = g.weights.data() + o * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) gw[i] += d * x[i];
      }
    }
    if (l == 0) break;
    FeatureMatrix next(nb, layer.in);
    for (std::size_t r = 0; r < nb; ++r) {
      for (std::size_t i = 0; i < layer.in; ++i) {
        double acc = 0.0;
        for (std::size_t o = 0; o < layer.out; ++o)
          acc += delta.at(r, o) * layer.weights[o * layer.in + i];
        next.at(r, i) = acc;
      }
    }
    delta = std::move(next);
  }
  return grads;
}

// d(loss)/d(logits) from d(loss)/d(probs) through the softmax Jacobian.
void add_softmax_chain(FeatureMatrix& dlogits, const ProbMatrix& probs,
                       const FeatureMatrix& dprobs) {
  for (std::size_t r = 0; r < probs.rows; ++r) {
    double dot = 0.0;
    for (std::size_t c = 0; c < probs.cols; ++c) dot += dprobs.at(r, c) * probs.at(r, c);
    for (std::size_t c = 0; c < probs.cols; ++c)
      dlogits.at(r, c) += probs.at(r, c) * (dprobs.at(r, c) - dot);
  }
}

void check_finite(const Gradients& grads) {
  for (const auto& layer : grads.layers) {
    for (const double v : layer.weights)
      if (!std::isfinite(v)) throw divergence_error("non-finite weight gradient");
    for (const double v : layer.biases)
      if (!std::isfinite(v)) throw divergence_error("non-finite bias gradient");
  }
}

}  // namespace

NetModel make_net(std::size_t d_in, std::span<const std::size_t> hidden,
                  std::size_t embed_dim, std::size_t num_classes, std::uint64_t seed) {
  if (d_in < 1) throw std::invalid_argument("make_net: d_in must be >= 1");
  if (embed_dim < 2) throw std::invalid_argument("make_net: embedding dim must be >= 2");
  if (num_classes < 2) throw std::invalid_argument("make_net: need at least 2 classes");
  if (hidden.empty() || hidden.size() > 2)
    throw std::invalid_argument("make_net: backbone takes one or two hidden layers");
  for (const std::size_t h : hidden)
    if (h < 1) throw std::invalid_argument("make_net: hidden width must be >= 1");

  NetModel model;
  model.d_in = d_in;
  model.embed_dim = embed_dim;
  model.num_classes = num_classes;
  model.backbone_count = hidden.size();

  std::vector<std::size_t> dims;
  dims.push_back(d_in);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(embed_dim);
  dims.push_back(num_classes);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    AffineLayer layer(dims[l], dims[l + 1]);
    RandomSource rng(derive_seed(seed, kInitStream), l);
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
    for (double& w : layer.weights) w = rng.next_uniform(-limit, limit);
    model.layers.push_back(std::move(layer));
  }
  return model;
}

ForwardResult forward(const NetModel& model, const FeatureMatrix& x) {
  ForwardCache cache = forward_cached(model, x);
  ForwardResult result;
  result.logits = std::move(cache.acts.back());
  cache.acts.pop_back();
  result.embeddings = std::move(cache.acts.back());
  return result;
}

double loss_wce(const FeatureMatrix& logits, std::span<const std::uint32_t> labels,
                std::span<const double> weights) {
  if (labels.size() != logits.rows || weights.size() != logits.rows)
    throw std::invalid_argument("loss_wce: batch size mismatch");
  double acc = 0.0;
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const auto p = softmax(logits.row(r));
    acc += weights[r] * std::log(p[labels[r]] + kLogEps);
  }
  return -acc / static_cast<double>(logits.rows);
}

double loss_im(const FeatureMatrix& logits) {
  if (logits.rows < 1) throw std::invalid_argument("loss_im: empty batch");
  const std::size_t nb = logits.rows, m = logits.cols;
  std::vector<double> mu(m, 0.0);
  double mean_entropy = 0.0;
  for (std::size_t r = 0; r < nb; ++r) {
    const auto p = softmax(logits.row(r));
    for (std::size_t c = 0; c < m; ++c) mu[c] += p[c];
    mean_entropy += entropy(p);
  }
  for (double& v : mu) v /= static_cast<double>(nb);
  double diversity = 0.0;
  for (const double v : mu) diversity += v * std::log(v + kLogEps);
  return diversity + mean_entropy / static_cast<double>(nb);
}

double loss_cc(const FeatureMatrix& embeddings, const FeatureMatrix& assigned_centroids) {
  if (embeddings.rows != assigned_centroids.rows ||
      embeddings.cols != assigned_centroids.cols)
    throw std::invalid_argument("loss_cc: shape mismatch");
  double acc = 0.0;
  for (std::size_t r = 0; r < embeddings.rows; ++r)
    acc += 1.0 - correlation_index(embeddings.row(r), assigned_centroids.row(r));
  return acc / static_cast<double>(embeddings.rows);
}

double loss_ce_smoothed(const FeatureMatrix& logits, std::span<const std::uint32_t> labels,
                        double alpha) {
  if (labels.size() != logits.rows)
    throw std::invalid_argument("loss_ce_smoothed: batch size mismatch");
  const std::size_t m = logits.cols;
  double acc = 0.0;
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const auto p = softmax(logits.row(r));
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      const double q = (c == labels[r] ? 1.0 - alpha : 0.0) + alpha / static_cast<double>(m);
      s += q * std::log(p[c] + kLogEps);
    }
    acc += s;
  }
  return -acc / static_cast<double>(logits.rows);
}

BackwardResult backward(const NetModel& model, const FeatureMatrix& batch,
                        std::span<const std::uint32_t> labels,
                        std::span<const double> weights,
                        const FeatureMatrix& assigned_centroids, const LossMask& mask) {
  const std::size_t nb = batch.rows;
  const std::size_t m = model.num_classes;
  ForwardCache cache = forward_cached(model, batch);
  const FeatureMatrix& logits = cache.acts.back();
  const FeatureMatrix& emb = cache.acts[cache.acts.size() - 2];
  const ProbMatrix probs = softmax_rows(logits);

  BackwardResult result;
  if (mask.wce) result.terms.wce = loss_wce(logits, labels, weights);
  if (mask.im) result.terms.im = loss_im(logits);
  if (mask.cc) result.terms.cc = loss_cc(emb, assigned_centroids);
  result.terms.total = total_loss(result.terms.wce, result.terms.im, result.terms.cc);

  FeatureMatrix dlogits(nb, m);
  if (mask.wce) {
    for (std::size_t r = 0; r < nb; ++r) {
      const double py = probs.at(r, labels[r]);
      const double coef =
          weights[r] / static_cast<double>(nb) * py / (py + kLogEps);
      for (std::size_t c = 0; c < m; ++c)
        dlogits.at(r, c) += coef * (probs.at(r, c) - (c == labels[r] ? 1.0 : 0.0));
    }
  }
  if (mask.im) {
    std::vector<double> mu(m, 0.0);
    for (std::size_t r = 0; r < nb; ++r)
      for (std::size_t c = 0; c < m; ++c) mu[c] += probs.at(r, c);
    for (double& v : mu) v /= static_cast<double>(nb);
    FeatureMatrix dprobs(nb, m);
    for (std::size_t r = 0; r < nb; ++r) {
      for (std::size_t c = 0; c < m; ++c) {
        const double p = probs.at(r, c);
        const double d_diversity = std::log(mu[c] + kLogEps) + mu[c] / (mu[c] + kLogEps);
        const double d_entropy = -(std::log(p + kLogEps) + p / (p + kLogEps));
        dprobs.at(r, c) = (d_diversity + d_entropy) / static_cast<double>(nb);
      }
    }
    add_softmax_chain(dlogits, probs, dprobs);
  }

  FeatureMatrix dembed;
  if (mask.cc) {
    const std::size_t d = model.embed_dim;
    dembed = FeatureMatrix(nb, d);
    std::vector<double> dc(d);
    for (std::size_t r = 0; r < nb; ++r) {
      const auto a = emb.row(r);
      const auto b = assigned_centroids.row(r);
      const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(d);
      const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(d);
      double num = 0.0, sa = 0.0, sb = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        num += da * db;
        sa += da * da;
        sb += db * db;
      }
      const double denom = std::sqrt(sa) * std::sqrt(sb);
      if (denom < kDenomEps) continue;  // guard returns constant 0
      const double c_raw = num / denom;
      if (c_raw <= -1.0 || c_raw >= 1.0) continue;  // clamp plateau
      double mean_dc = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        dc[i] = (b[i] - mb) / denom - num * (a[i] - ma) / (sa * denom);
        mean_dc += dc[i];
      }
      mean_dc /= static_cast<double>(d);
      // loss contribution is (1 - C)/nb, so the sign flips.
      const double coef = -1.0 / static_cast<double>(nb);
      for (std::size_t i = 0; i < d; ++i)
        dembed.at(r, i) = coef * (dc[i] - mean_dc);
    }
  }

  result.grads = backprop(model, cache, dlogits, dembed);
  return result;
}

BackwardResult pretrain_backward(const NetModel& model, const FeatureMatrix& batch,
                                 std::span<const std::uint32_t> labels, double alpha) {
  const std::size_t nb = batch.rows;
  const std::size_t m = model.num_classes;
  ForwardCache cache = forward_cached(model, batch);
  const FeatureMatrix& logits = cache.acts.back();
  const ProbMatrix probs = softmax_rows(logits);

  BackwardResult result;
  result.terms.wce = loss_ce_smoothed(logits, labels, alpha);
  result.terms.total = result.terms.wce;

  FeatureMatrix dlogits(nb, m);
  FeatureMatrix dprobs(nb, m);
  for (std::size_t r = 0; r < nb; ++r) {
    for (std::size_t c = 0; c < m; ++c) {
      const double q =
          (c == labels[r] ? 1.0 - alpha : 0.0) + alpha / static_cast<double>(m);
      dprobs.at(r, c) = -q / (probs.at(r, c) + kLogEps) / static_cast<double>(nb);
    }
  }
  add_softmax_chain(dlogits, probs, dprobs);

  result.grads = backprop(model, cache, dlogits, FeatureMatrix());
  return result;
}

OptimState make_optim(const NetModel& model, double lr_backbone) {
  OptimState opt;
  opt.lr_backbone = lr_backbone;
  opt.lr_bottleneck = 10.0 * lr_backbone;
  opt.lr_classifier = lr_backbone;
  opt.velocity.reserve(model.layers.size());
  for (const auto& layer : model.layers) opt.velocity.emplace_back(layer.in, layer.out);
  return opt;
}

void sgd_step(NetModel& model, const Gradients& grads, OptimState& opt) {
  if (grads.layers.size() != model.layers.size() ||
      opt.velocity.size() != model.layers.size())
    throw std::invalid_argument("sgd_step: shape mismatch");
  check_finite(grads);
  const std::size_t last = model.layers.size() - 1;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    if (opt.freeze_classifier && l == last) continue;
    const double lr = l < model.backbone_count ? opt.lr_backbone
                      : l == model.backbone_count ? opt.lr_bottleneck
                                                  : opt.lr_classifier;
    AffineLayer& layer = model.layers[l];
    AffineLayer& vel = opt.velocity[l];
    const AffineLayer& g = grads.layers[l];
    for (std::size_t i = 0; i < layer.weights.size(); ++i) {
      vel.weights[i] = opt.momentum * vel.weights[i] + g.weights[i];
      layer.weights[i] -= lr * vel.weights[i];
    }
    for (std::size_t i = 0; i < layer.biases.size(); ++i) {
      vel.biases[i] = opt.momentum * vel.biases[i] + g.biases[i];
      layer.biases[i] -= lr * vel.biases[i];
    }
  }
}

NetModel pretrain_source(const FeatureMatrix& features, const LabelVector& labels,
                         const PretrainConfig& cfg) {
  features.validate();
  labels.validate();
  if (labels.labels.size() != features.rows)
    throw std::invalid_argument("pretrain_source: labels do not match features");
  if (labels.num_classes < 2)
    throw std::invalid_argument("pretrain_source: need at least 2 classes");
  if (cfg.batch_size < 1) throw std::invalid_argument("pretrain_source: batch_size >= 1");

  NetModel model = make_net(features.cols, cfg.hidden, cfg.embed_dim,
                            labels.num_classes, cfg.seed);
  OptimState opt = make_optim(model, cfg.lr);

  std::vector<std::size_t> order(features.rows);
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::uint32_t> batch_labels;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    RandomSource rng(derive_seed(cfg.seed, kShuffleStream), epoch);
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      const std::span<const std::size_t> idx(order.data() + start, count);
      const FeatureMatrix batch = gather_rows(features, idx);
      batch_labels.resize(count);
      for (std::size_t i = 0; i < count; ++i) batch_labels[i] = labels.labels[idx[i]];
      BackwardResult back =
          pretrain_backward(model, batch, batch_labels, cfg.label_smoothing);
      if (!std::isfinite(back.terms.total))
        throw divergence_error("pretraining loss is not finite");
      sgd_step(model, back.grads, opt);
    }
  }
  return model;
}

void save_model(const NetModel& model, const std::filesystem::path& path) {
  auto out = open_out(path, true);
  write_bytes(out, kModelMagic, 4);
  write_u32(out, kModelVersion);
  write_u32(out, static_cast<std::uint32_t>(model.layers.size()));
  for (const auto& layer : model.layers) {
    write_u32(out, static_cast<std::uint32_t>(layer.out));
    write_u32(out, static_cast<std::uint32_t>(layer.in));
    for (const double w : layer.weights) write_f32(out, static_cast<float>(w));
    for (const double b : layer.biases) write_f32(out, static_cast<float>(b));
  }
  write_u32(out, static_cast<std::uint32_t>(model.d_in));
  write_u32(out, static_cast<std::uint32_t>(model.embed_dim));
  write_u32(out, static_cast<std::uint32_t>(model.num_classes));
  write_u32(out, kActivationTanh);
  if (!out) throw io_error("write failed: " + path.string());
}

NetModel load_model(const std::filesystem::path& path) {
  auto in = open_in(path, true);
  check_magic(in, kModelMagic, "model");
  const std::uint32_t version = read_u32(in, "version");
  if (version != kModelVersion)
    throw format_error(format_fault::malformed_header,
                       "unsupported model file version " + std::to_string(version));
  const std::uint32_t layer_count = read_u32(in, "layer count");
  if (layer_count < 3 || layer_count > 4)
    throw format_error(format_fault::bad_value,
                       "model must have 3 or 4 layers, file declares " +
                           std::to_string(layer_count));
  NetModel model;
  for (std::uint32_t l = 0; l < layer_count; ++l) {
    const std::uint32_t out_dim = read_u32(in, "layer rows");
    const std::uint32_t in_dim = read_u32(in, "layer cols");
    if (out_dim < 1 || in_dim < 1)
      throw format_error(format_fault::bad_value, "empty layer in model file");
    AffineLayer layer(in_dim, out_dim);
    for (double& w : layer.weights) w = static_cast<double>(read_f32(in, "weights"));
    for (double& b : layer.biases) b = static_cast<double>(read_f32(in, "biases"));
    model.layers.push_back(std::move(layer));
  }
  model.backbone_count = layer_count - 2;
  model.d_in = read_u32(in, "d_in");
  model.embed_dim = read_u32(in, "embed_dim");
  model.num_classes = read_u32(in, "num_classes");
  const std::uint32_t activation = read_u32(in, "activation");
  if (activation != kActivationTanh)
    throw format_error(format_fault::bad_value, "unknown activation tag");
  if (model.layers.front().in != model.d_in ||
      model.layers[model.backbone_count].out != model.embed_dim ||
      model.layers.back().out != model.num_classes)
    throw format_error(format_fault::dimension_mismatch,
                       "model trailer disagrees with layer shapes");
  for (std::size_t l = 0; l + 1 < model.layers.size(); ++l)
    if (model.layers[l].out != model.layers[l + 1].in)
      throw format_error(format_fault::dimension_mismatch,
                         "adjacent layer shapes disagree");
  return model;
}

}  // namespace proulearn
