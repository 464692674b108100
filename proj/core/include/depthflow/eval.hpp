#pragma once

#include <cstdint>
#include <vector>

#include "depthflow/geometry.hpp"

namespace depthflow {

struct EvalReport {
  double abs_rel = 0;
  double rms = 0;
  double mean_log10 = 0;
  double delta1 = 0, delta2 = 0, delta3 = 0;  // thresholds 1.25, 1.25^2, 1.25^3
  std::size_t n_pixels = 0;
};

/// Scale pred so its median matches gt's over the masked pixels. Lower-median
/// convention on even counts. Throws on an empty mask or zero median.
DepthMap median_scale(const DepthMap& pred, const DepthMap& gt,
                      const std::vector<std::uint8_t>& mask);

/// Abs Rel, RMS, mean log10 error, and delta accuracies over masked pixels
/// with positive pred and gt. Optional depth range crop (<= 0 disables).
EvalReport compute_metrics(const DepthMap& pred, const DepthMap& gt,
                           const std::vector<std::uint8_t>& mask, double min_depth = 0,
                           double max_depth = 0);

}  // namespace depthflow
