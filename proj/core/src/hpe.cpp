#include "proulearn/hpe.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "binio.hpp"
#include "proulearn/errors.hpp"
#include "proulearn/numeric.hpp"

namespace proulearn {

namespace {

using namespace binio;

constexpr char kEnsembleMagic[4] = {'P', 'U', 'L', 'T'};
constexpr std::uint32_t kEnsembleVersion = 1;

std::unique_ptr<SeparationNode> grow(const FeatureMatrix& features,
                                     std::vector<std::size_t>& subset,
                                     std::uint32_t depth, RandomSource& rng,
                                     std::uint32_t max_depth) {
  auto node = std::make_unique<SeparationNode>();
  node->depth = depth;
  node->size = subset.size();
  if (depth == max_depth || subset.size() == 1) return node;

  const std::size_t m = static_cast<std::size_t>(rng.next_below(features.cols));
  double mn = features.at(subset[0], m), mx = mn;
  for (const std::size_t i : subset) {
    const double v = features.at(i, m);
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  }
  if (mn == mx) return node;

  // Quantized to f32 at construction so a persisted tree replays bit-exactly.
  const float split = static_cast<float>(mn + rng.next_double() * (mx - mn));
  std::vector<std::size_t> left, right;
  for (const std::size_t i : subset) {
    (features.at(i, m) < static_cast<double>(split) ? left : right).push_back(i);
  }
  // Quantization can push the cut onto the subset minimum; keep the node a
  // leaf rather than create an empty child.
  if (left.empty() || right.empty()) return node;

  node->feature = static_cast<std::int32_t>(m);
  node->split = split;
  node->left = grow(features, left, depth + 1, rng, max_depth);
  node->right = grow(features, right, depth + 1, rng, max_depth);
  return node;
}

std::uint32_t depth_for_subsample(std::size_t subsample_size) {
  if (subsample_size <= 2) return 1;
  return static_cast<std::uint32_t>(std::bit_width(subsample_size - 1));
}

void write_node(std::ofstream& out, const SeparationNode& node) {
  const unsigned char tag = node.is_leaf() ? 0 : 1;
  out.write(reinterpret_cast<const char*>(&tag), 1);
  write_u32(out, node.depth);
  write_u32(out, node.is_leaf() ? 0u : static_cast<std::uint32_t>(node.feature));
  std::uint32_t bits;
  std::memcpy(&bits, &node.split, 4);
  write_u32(out, bits);
  write_u64(out, node.size);
  if (!node.is_leaf()) {
    write_node(out, *node.left);
    write_node(out, *node.right);
  }
}

std::unique_ptr<SeparationNode> read_node(std::ifstream& in, std::uint32_t depth_guard) {
  unsigned char tag;
  read_exact(in, &tag, 1, "node tag");
  if (tag > 1)
    throw format_error(format_fault::bad_value, "bad node tag " + std::to_string(tag));
  auto node = std::make_unique<SeparationNode>();
  node->depth = read_u32(in, "node depth");
  if (node->depth > depth_guard)
    throw format_error(format_fault::bad_value, "node depth exceeds declared max_depth");
  const std::uint32_t feature = read_u32(in, "node feature");
  const std::uint32_t bits = read_u32(in, "node split");
  std::memcpy(&node->split, &bits, 4);
  node->size = read_u64(in, "node size");
  if (tag == 1) {
    node->feature = static_cast<std::int32_t>(feature);
    node->left = read_node(in, depth_guard);
    node->right = read_node(in, depth_guard);
  }
  return node;
}

std::size_t max_feature_plus_one(const SeparationNode& node) {
  if (node.is_leaf()) return 0;
  const std::size_t own = static_cast<std::size_t>(node.feature) + 1;
  return std::max({own, max_feature_plus_one(*node.left), max_feature_plus_one(*node.right)});
}

}  // namespace

std::unique_ptr<SeparationNode> build_tree(const FeatureMatrix& features,
                                           std::span<const std::size_t> subset,
                                           RandomSource& rng, std::uint32_t max_depth) {
  if (subset.empty()) throw std::invalid_argument("build_tree: empty subset");
  if (max_depth < 1) throw std::invalid_argument("build_tree: max_depth must be >= 1");
  std::vector<std::size_t> indices(subset.begin(), subset.end());
  return grow(features, indices, 0, rng, max_depth);
}

HpeEnsemble build_ensemble(const FeatureMatrix& features, std::size_t tree_count,
                           std::size_t subsample_size, std::uint64_t seed) {
  if (tree_count < 1) throw std::invalid_argument("build_ensemble: need at least one tree");
  if (subsample_size < 1 || subsample_size > features.rows)
    throw std::invalid_argument("build_ensemble: subsample_size out of [1, rows]");
  HpeEnsemble ensemble;
  ensemble.subsample_size = subsample_size;
  ensemble.max_depth = depth_for_subsample(subsample_size);
  ensemble.seed = seed;
  ensemble.dim = features.cols;
  ensemble.min_dim = features.cols;
  ensemble.trees.reserve(tree_count);
  for (std::size_t i = 0; i < tree_count; ++i) {
    RandomSource rng(seed, i);
    const auto subset = rng.sample_without_replacement(features.rows, subsample_size);
    ensemble.trees.push_back(build_tree(features, subset, rng, ensemble.max_depth));
  }
  return ensemble;
}

std::uint32_t path_length(const SeparationNode& root, std::span<const double> x) {
  const SeparationNode* node = &root;
  std::uint32_t depth = 0;
  while (!node->is_leaf()) {
    node = x[static_cast<std::size_t>(node->feature)] < static_cast<double>(node->split)
               ? node->left.get()
               : node->right.get();
    ++depth;
  }
  return depth;
}

HomogeneityScores homogeneity_scores(const HpeEnsemble& ensemble,
                                     const FeatureMatrix& features) {
  if (ensemble.trees.empty()) throw std::invalid_argument("empty ensemble");
  if (ensemble.dim > 0 ? features.cols != ensemble.dim : features.cols < ensemble.min_dim)
    throw std::invalid_argument("feature dimension does not match ensemble");
  HomogeneityScores scores;
  scores.raw.assign(features.rows, 0.0);
  for (std::size_t r = 0; r < features.rows; ++r) {
    const auto x = features.row(r);
    double sum = 0.0;
    for (const auto& tree : ensemble.trees) sum += path_length(*tree, x);
    scores.raw[r] = sum / static_cast<double>(ensemble.trees.size());
  }
  scores.normalized = min_max_normalize(scores.raw);
  return scores;
}

void save_ensemble(const HpeEnsemble& ensemble, const std::filesystem::path& path) {
  auto out = open_out(path, true);
  write_bytes(out, kEnsembleMagic, 4);
  write_u32(out, kEnsembleVersion);
  write_u64(out, ensemble.trees.size());
  write_u64(out, ensemble.subsample_size);
  write_u32(out, ensemble.max_depth);
  write_u64(out, ensemble.seed);
  for (const auto& tree : ensemble.trees) write_node(out, *tree);
  if (!out) throw io_error("write failed: " + path.string());
}

HpeEnsemble load_ensemble(const std::filesystem::path& path) {
  auto in = open_in(path, true);
  check_magic(in, kEnsembleMagic, "ensemble");
  const std::uint32_t version = read_u32(in, "version");
  if (version != kEnsembleVersion)
    throw format_error(format_fault::malformed_header,
                       "unsupported ensemble file version " + std::to_string(version));
  HpeEnsemble ensemble;
  const std::uint64_t tree_count = read_u64(in, "tree count");
  ensemble.subsample_size = read_u64(in, "subsample size");
  ensemble.max_depth = read_u32(in, "max depth");
  ensemble.seed = read_u64(in, "seed");
  if (tree_count < 1)
    throw format_error(format_fault::bad_value, "ensemble file declares zero trees");
  if (ensemble.max_depth < 1 || ensemble.max_depth > 64)
    throw format_error(format_fault::bad_value, "implausible max_depth");
  ensemble.trees.reserve(tree_count);
  for (std::uint64_t i = 0; i < tree_count; ++i)
    ensemble.trees.push_back(read_node(in, ensemble.max_depth));
  ensemble.dim = 0;
  for (const auto& tree : ensemble.trees)
    ensemble.min_dim = std::max(ensemble.min_dim, max_feature_plus_one(*tree));
  return ensemble;
}

}  // namespace proulearn
