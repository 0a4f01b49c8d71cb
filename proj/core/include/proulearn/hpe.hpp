#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "proulearn/matrix.hpp"
#include "proulearn/random.hpp"

namespace proulearn {

// Node of a random separation tree. Internal nodes route x left when
// x[feature] < split. The split is quantized to f32 at construction so the
// persisted tree replays identically.
struct SeparationNode {
  std::uint32_t depth = 0;
  std::int32_t feature = -1;  // -1 marks a leaf
  float split = 0.0f;
  std::uint64_t size = 0;  // construction subset size at this node
  std::unique_ptr<SeparationNode> left;
  std::unique_ptr<SeparationNode> right;

  bool is_leaf() const { return left == nullptr; }
};

struct HpeEnsemble {
  std::vector<std::unique_ptr<SeparationNode>> trees;
  std::uint64_t subsample_size = 0;
  std::uint32_t max_depth = 0;
  std::uint64_t seed = 0;
  // Feature count at build time; 0 after loading from file, where only
  // min_dim (1 + highest referenced feature) can be recovered.
  std::size_t dim = 0;
  std::size_t min_dim = 0;
};

// Per-sample homogeneity: mean path length over the ensemble (raw) and its
// min-max normalization. Low raw depth means easy to isolate.
struct HomogeneityScores {
  std::vector<double> raw;
  std::vector<double> normalized;
};

// Grows one tree on the given subset. Splits draw a uniform feature then a
// uniform cut inside that feature's subset range; a node becomes a leaf at
// max_depth, on a singleton subset, on a constant chosen feature, or when a
// cut leaves one side empty.
std::unique_ptr<SeparationNode> build_tree(const FeatureMatrix& features,
                                           std::span<const std::size_t> subset,
                                           RandomSource& rng,
                                           std::uint32_t max_depth);

// Grows tree_count trees, each on its own subsample (stream i of seed).
// max_depth = ceil(log2(subsample_size)), at least 1.
HpeEnsemble build_ensemble(const FeatureMatrix& features, std::size_t tree_count,
                           std::size_t subsample_size, std::uint64_t seed);

// Edges traversed from the root to the leaf x falls into.
std::uint32_t path_length(const SeparationNode& root, std::span<const double> x);

HomogeneityScores homogeneity_scores(const HpeEnsemble& ensemble,
                                     const FeatureMatrix& features);

// Ensemble files: magic "PULT", u32 version, u64 tree_count,
// u64 subsample_size, u32 max_depth, u64 seed, then each tree's nodes in
// preorder as (u8 tag, u32 depth, u32 feature, f32 split, u64 size), tag 0
// leaf / 1 internal, leaf feature written as 0.
void save_ensemble(const HpeEnsemble& ensemble, const std::filesystem::path& path);
HpeEnsemble load_ensemble(const std::filesystem::path& path);

}  // namespace proulearn
