#include "proulearn/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "proulearn/random.hpp"

namespace proulearn {

namespace {

constexpr std::uint64_t kDirectionStream = 0x6469726563740000ULL;
constexpr std::uint64_t kSourceStream = 0x736f757263650000ULL;
constexpr std::uint64_t kTargetStream = 0x7461726765740000ULL;
constexpr std::uint64_t kOutlierStream = 0x6f75746c69657200ULL;
constexpr std::uint64_t kPermuteStream = 0x7065726d75746500ULL;

// Seeded orthonormal class directions via Gram-Schmidt on Gaussian draws.
std::vector<std::vector<double>> orthonormal_directions(std::size_t count, std::size_t dim,
                                                        std::uint64_t seed) {
  RandomSource rng(seed, kDirectionStream);
  std::vector<std::vector<double>> dirs;
  dirs.reserve(count);
  while (dirs.size() < count) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.next_normal();
    for (const auto& u : dirs) {
      double dot = 0.0;
      for (std::size_t d = 0; d < dim; ++d) dot += v[d] * u[d];
      for (std::size_t d = 0; d < dim; ++d) v[d] -= dot * u[d];
    }
    double norm = 0.0;
    for (const double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;  // essentially impossible; redraw
    for (double& x : v) x /= norm;
    dirs.push_back(std::move(v));
  }
  return dirs;
}

}  // namespace

SynthData generate_shifted_domains(const SynthSpec& spec) {
  if (spec.num_classes < 2)
    throw std::invalid_argument("synth: need at least 2 classes");
  if (spec.d_in < 2) throw std::invalid_argument("synth: need d_in >= 2");
  if (spec.num_classes > spec.d_in)
    throw std::invalid_argument("synth: orthonormal means need num_classes <= d_in");
  if (spec.source_per_class < 1 || spec.target_per_class < 1)
    throw std::invalid_argument("synth: need at least one sample per class");
  if (!(spec.outlier_fraction >= 0.0 && spec.outlier_fraction <= 0.2))
    throw std::invalid_argument("synth: outlier_fraction out of [0, 0.2]");
  if (spec.noise_sigma < 0.0) throw std::invalid_argument("synth: negative noise_sigma");
  if (!spec.scale.empty() && spec.scale.size() != spec.d_in)
    throw std::invalid_argument("synth: scale vector must have d_in entries");
  for (const double s : spec.scale)
    if (s <= 0.0) throw std::invalid_argument("synth: scale entries must be positive");
  if (spec.scale_lo <= 0.0 || spec.scale_hi <= 0.0)
    throw std::invalid_argument("synth: scale ramp bounds must be positive");

  const std::size_t m = spec.num_classes;
  const std::size_t dim = spec.d_in;

  // Orthonormal means at radius r are pairwise r*sqrt(2) apart; r keeps the
  // separation at the well-separated floor of 4 sigma.
  const double radius =
      std::max(1.0, 2.0 * std::numbers::sqrt2 * spec.noise_sigma);
  const auto dirs = orthonormal_directions(m, dim, spec.seed);
  std::vector<std::vector<double>> source_means(m, std::vector<double>(dim));
  for (std::size_t c = 0; c < m; ++c)
    for (std::size_t d = 0; d < dim; ++d) source_means[c][d] = radius * dirs[c][d];

  // Target blobs: rotate in the plane spanned by the first two class
  // directions, scale per input dimension, then translate along the first
  // class direction. The rotation and translation stay inside the class
  // subspace so clusters move toward each other's source regions instead of
  // drifting off-manifold; the anisotropic scale warps the constellation
  // instead of moving it rigidly, which is what erodes cluster separation
  // on the target side. The whole affine map applies to the blob, not just
  // its mean, so target noise is scaled per dimension too.
  const double theta = spec.rotation_deg * std::numbers::pi / 180.0;
  const double ct = std::cos(theta), st = std::sin(theta);
  const auto& u0 = dirs[0];
  const auto& u1 = dirs[1];
  std::vector<double> axis_scale = spec.scale;
  if (axis_scale.empty()) {
    axis_scale.resize(dim);
    for (std::size_t d = 0; d < dim; ++d)
      axis_scale[d] = spec.scale_lo + (spec.scale_hi - spec.scale_lo) * static_cast<double>(d) /
                                          static_cast<double>(dim - 1);
  }
  const auto apply_shift = [&](std::vector<double>& mu) {
    double p0 = 0.0, p1 = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      p0 += mu[d] * u0[d];
      p1 += mu[d] * u1[d];
    }
    for (std::size_t d = 0; d < dim; ++d) {
      mu[d] += (ct - 1.0) * (p0 * u0[d] + p1 * u1[d]) + st * (p0 * u1[d] - p1 * u0[d]);
      mu[d] = axis_scale[d] * mu[d] + spec.translation * u0[d];
    }
  };

  // Each class is a two-mode mixture: satellites offset from the class mean
  // toward the next class's direction. The offsets cancel, so class means
  // keep the well-separated floor, while the satellites give classes the
  // multimodal spread that makes the shifted boundary regions contested.
  const double mode_offset = 2.0;
  std::vector<std::array<std::vector<double>, 2>> source_modes(m);
  std::vector<std::array<std::vector<double>, 2>> target_modes(m);
  for (std::size_t c = 0; c < m; ++c) {
    const auto& next = dirs[(c + 1) % m];
    for (int j = 0; j < 2; ++j) {
      std::vector<double> center(dim);
      const double sign = j == 0 ? 1.0 : -1.0;
      for (std::size_t d = 0; d < dim; ++d)
        center[d] = source_means[c][d] + sign * mode_offset * next[d];
      source_modes[c][j] = center;
      apply_shift(center);
      target_modes[c][j] = std::move(center);
    }
  }
  std::vector<std::vector<double>> target_means = source_means;
  for (std::size_t c = 0; c < m; ++c) apply_shift(target_means[c]);

  SynthData data;

  data.source_x = FeatureMatrix(m * spec.source_per_class, dim);
  data.source_y.num_classes = static_cast<std::uint32_t>(m);
  data.source_y.labels.resize(data.source_x.rows);
  {
    RandomSource rng(spec.seed, kSourceStream);
    std::size_t r = 0;
    for (std::size_t c = 0; c < m; ++c) {
      for (std::size_t s = 0; s < spec.source_per_class; ++s, ++r) {
        data.source_y.labels[r] = static_cast<std::uint32_t>(c);
        const auto& center = source_modes[c][s % 2];
        for (std::size_t d = 0; d < dim; ++d)
          data.source_x.at(r, d) = center[d] + spec.noise_sigma * rng.next_normal();
      }
    }
  }

  const std::size_t clean = m * spec.target_per_class;
  const std::size_t outliers =
      static_cast<std::size_t>(std::llround(spec.outlier_fraction * static_cast<double>(clean)));
  data.target_x = FeatureMatrix(clean + outliers, dim);
  data.target_y.num_classes = static_cast<std::uint32_t>(m);
  data.target_y.labels.resize(clean + outliers);
  data.target_outlier_mask.assign(clean + outliers, 0);
  {
    RandomSource rng(spec.seed, kTargetStream);
    std::size_t r = 0;
    for (std::size_t c = 0; c < m; ++c) {
      for (std::size_t s = 0; s < spec.target_per_class; ++s, ++r) {
        data.target_y.labels[r] = static_cast<std::uint32_t>(c);
        const auto& center = target_modes[c][s % 2];
        for (std::size_t d = 0; d < dim; ++d)
          data.target_x.at(r, d) = center[d] + axis_scale[d] * spec.noise_sigma * rng.next_normal();
      }
    }
  }

  if (outliers > 0) {
    // Uniform draws in the clean samples' bounding box expanded 1.5x about
    // its center, labeled by the nearest shifted class mean.
    std::vector<double> lo(dim), hi(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      lo[d] = hi[d] = data.target_x.at(0, d);
      for (std::size_t r = 1; r < clean; ++r) {
        lo[d] = std::min(lo[d], data.target_x.at(r, d));
        hi[d] = std::max(hi[d], data.target_x.at(r, d));
      }
      const double center = 0.5 * (lo[d] + hi[d]);
      const double half = std::max(0.5 * (hi[d] - lo[d]) * 1.5, 1e-9);
      lo[d] = center - half;
      hi[d] = center + half;
    }
    RandomSource rng(spec.seed, kOutlierStream);
    for (std::size_t o = 0; o < outliers; ++o) {
      const std::size_t r = clean + o;
      for (std::size_t d = 0; d < dim; ++d)
        data.target_x.at(r, d) = rng.next_uniform(lo[d], hi[d]);
      std::size_t best = 0;
      double best_sq = 0.0;
      for (std::size_t c = 0; c < m; ++c) {
        double sq = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
          const double diff = data.target_x.at(r, d) - target_means[c][d];
          sq += diff * diff;
        }
        if (c == 0 || sq < best_sq) {
          best_sq = sq;
          best = c;
        }
      }
      data.target_y.labels[r] = static_cast<std::uint32_t>(best);
      data.target_outlier_mask[r] = 1;
    }
  }

  // Deterministic permutation so class blocks and injected outliers are not
  // positionally identifiable downstream.
  {
    std::vector<std::size_t> perm(data.target_x.rows);
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    RandomSource rng(spec.seed, kPermuteStream);
    rng.shuffle(perm);
    FeatureMatrix x(data.target_x.rows, dim);
    LabelVector y;
    y.num_classes = data.target_y.num_classes;
    y.labels.resize(perm.size());
    std::vector<std::uint32_t> mask(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
      const auto src = data.target_x.row(perm[i]);
      std::copy(src.begin(), src.end(), x.row(i).begin());
      y.labels[i] = data.target_y.labels[perm[i]];
      mask[i] = data.target_outlier_mask[perm[i]];
    }
    data.target_x = std::move(x);
    data.target_y = std::move(y);
    data.target_outlier_mask = std::move(mask);
  }

  return data;
}

}  // namespace proulearn
