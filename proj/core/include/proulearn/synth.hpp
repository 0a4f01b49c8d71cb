#pragma once

#include <cstdint>
#include <vector>

#include "proulearn/matrix.hpp"

namespace proulearn {

// Synthetic domain pair: isotropic Gaussian blobs per class in the source,
// the same blobs pushed through rotate/scale/translate plus fresh noise in
// the target, with optional uniform-box outliers injected into the target.
struct SynthSpec {
  std::size_t num_classes = 5;
  std::size_t d_in = 16;
  std::size_t source_per_class = 200;
  std::size_t target_per_class = 200;
  // Applied in the plane spanned by the first two class directions, so the
  // angle directly controls how far class structure moves.
  double rotation_deg = 30.0;
  // Shift magnitude along the first class direction, pushing every class
  // toward the first class's source region.
  double translation = 2.0;
  // Per-dimension scale on the rotated blobs. Empty means the standard
  // profile: a linear ramp from scale_lo to scale_hi across input
  // dimensions, which warps the constellation instead of moving it rigidly.
  // A non-empty vector must have d_in entries.
  std::vector<double> scale;
  double scale_lo = 0.6;
  double scale_hi = 1.4;
  double noise_sigma = 0.5;
  double outlier_fraction = 0.05;  // of the clean target count, in [0, 0.2]
  std::uint64_t seed = 0;
};

struct SynthData {
  FeatureMatrix source_x;
  LabelVector source_y;
  FeatureMatrix target_x;
  LabelVector target_y;
  // 1 marks an injected outlier; outliers carry the label of the nearest
  // shifted class mean so accuracy stays well-defined.
  std::vector<std::uint32_t> target_outlier_mask;
};

// Deterministic per seed. Class means sit on orthonormal directions scaled
// to keep pairwise separation >= 4 * noise_sigma (well-separated regime).
// Requires num_classes <= d_in.
SynthData generate_shifted_domains(const SynthSpec& spec);

}  // namespace proulearn
