#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace depthflow {

struct GradCheckReport {
  std::string term;
  int states = 0;
  double max_rel_err = 0;
  double tolerance = 0;
  bool passed = false;
};

/// Directional finite-difference checks of every loss term's analytic
/// gradient at `states` random states (h = 1e-5, random unit directions).
/// Terms: photometric, smoothness, flow_consistency, feature_synthesis,
/// planar (plane fits frozen at the base state), objective (full chain
/// through depth and pose).
std::vector<GradCheckReport> run_gradient_suite(int width, int height, int states,
                                                std::uint32_t seed, double tolerance = 1e-4);

}  // namespace depthflow
