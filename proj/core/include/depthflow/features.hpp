#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "depthflow/image.hpp"

namespace depthflow {

/// Keypoints plus the dilated 3x3 offset grid {-N,0,N} x {-N,0,N} around each.
struct PatchSet {
  std::vector<std::pair<int, int>> keypoints;
  int radius = 2;  // N

  std::array<std::pair<int, int>, 9> offsets() const {
    const int n = radius;
    return {{{-n, -n}, {0, -n}, {n, -n}, {-n, 0}, {0, 0}, {n, 0}, {-n, n}, {0, n}, {n, n}}};
  }
};

struct KeypointConfig {
  int block_size = 8;          // region size for the adaptive threshold
  double grad_offset = 0.02;   // added to the block median gradient magnitude
  int radius = 2;              // patch offset N
};

/// Block-wise gradient-threshold selection: per block, keep the maximum
/// gradient-magnitude pixel if it exceeds median(block) + grad_offset; rank by
/// magnitude and cap at max_points. Points whose offset footprint leaves the
/// image are discarded. May return an empty set (e.g. constant images).
PatchSet extract_keypoints(const ImagePlane& img, int max_points,
                           const KeypointConfig& config = {});

/// Ternary codes of the 8-neighborhood, in {-1,0,+1} with deadband eps.
/// Border pixels get codes against clamped neighbors and valid=0.
struct CensusMap {
  int width = 0, height = 0;
  double eps = 0.02;
  std::vector<std::int8_t> codes;  // H*W*8
  std::vector<std::uint8_t> valid;

  size_t idx(int x, int y) const { return static_cast<size_t>(y) * width + x; }
  const std::int8_t* at(int x, int y) const { return &codes[idx(x, y) * 8]; }
};

CensusMap census_transform(const ImagePlane& img, double eps);

/// Soft Hamming distance between two 8-long code vectors:
/// sum_j d_j^2 / (d_j^2 + 0.81). Symmetric, bounded by 8.
double census_distance(const std::int8_t* a, const std::int8_t* b);
double census_distance(const double* a, const double* b);  // soft-code variant

inline constexpr double kCensusDistanceScale = 0.81;

/// Smooth ternary comparison used inside differentiable losses; saturates to
/// +-1 away from the deadband and is linear (slope 1/eps) near zero.
inline double soft_census_code(double d, double eps) { return d / std::sqrt(d * d + eps * eps); }
inline double soft_census_code_deriv(double d, double eps) {
  const double s = d * d + eps * eps;
  return eps * eps / (s * std::sqrt(s));
}

/// Neighbor offsets for census codes, fixed scan order (center excluded).
std::array<std::pair<int, int>, 8> census_neighbors();

struct FeatureBankConfig {
  std::vector<int> channels_per_level;  // e.g. {16, 32, 64, 96, 128, 192}
  int start_level = 1;                  // pyramid root resolution = H >> start_level
  int kernel_size = 5;
};

/// Fixed bank of oriented derivative-of-Gaussian and difference-of-Gaussian
/// filters; stands in for a learned feature extractor. Deterministic given
/// (img, config). Throws on unrealizable channel counts.
FeaturePyramid build_feature_pyramid(const ImagePlane& img, const FeatureBankConfig& config);

/// The filter kernels used for one level's channel count; exposed for tests.
std::vector<ImagePlane> feature_filter_bank(int channels, int kernel_size);

}  // namespace depthflow
