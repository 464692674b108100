#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "depthflow/losses.hpp"

namespace depthflow {

/// One source view the target is matched against. Poses map target-frame
/// coordinates into this source's frame.
struct SourceView {
  const ImagePlane* image = nullptr;
  const FeaturePyramid* pyramid = nullptr;
  PoseSE3 pose;
  const FlowField* supervision = nullptr;               // f_flow, optional
  const std::vector<std::uint8_t>* valid_mask = nullptr;
};

struct OptimProblem {
  const ImagePlane* target = nullptr;
  const FeaturePyramid* target_pyramid = nullptr;
  const PatchSet* patches = nullptr;
  const std::vector<int>* segments = nullptr;  // optional
  std::vector<SourceView> sources;
  CameraIntrinsics intrinsics;
};

struct OptimConfig {
  int max_iterations = 2000;
  double init_depth = 2.0;          // constant initialization (meters)
  double init_perturbation = 0.0;   // relative, uniform in [-p, p] per pixel
  std::uint32_t seed = 1;
  bool optimize_pose = false;       // else poses stay clamped at their input values
  double step_depth = 0.05;         // max log-depth change per accepted full step
  double step_pose = 0.002;
  double armijo_c = 1e-4;
  double backtrack_factor = 0.5;
  int max_backtracks = 30;
};

/// Optimization variables: log-depth field plus one 6-vector chart
/// (axis-angle, translation) per source.
struct OptimState {
  std::vector<double> log_depth;
  std::vector<Eigen::Matrix<double, 6, 1>> poses;
  int iteration = 0;
};

struct TraceEntry {
  int iteration = 0;
  LossBreakdown breakdown;
  double step = 0;  // accepted line-search scale
};

struct OptimResult {
  DepthMap depth;
  std::vector<PoseSE3> poses;
  std::vector<TraceEntry> trace;
  bool halted_early = false;
  std::string halt_reason;
};

/// Gradient descent with backtracking line search on the total depth
/// objective. Deterministic given config and seed. Halts with a diagnostic
/// when the line search cannot find a decreasing step.
OptimResult optimize(const OptimProblem& problem, const LossConfig& loss_config,
                     const OptimConfig& config);

/// Loss and analytic gradient of the full objective at a given state; the
/// building block of optimize() and of the gradient checks.
struct ObjectiveEval {
  double value = 0;
  LossBreakdown breakdown;
  std::vector<double> grad_log_depth;
  std::vector<Eigen::Matrix<double, 6, 1>> grad_poses;
};
ObjectiveEval evaluate_objective(const OptimProblem& problem, const LossConfig& loss_config,
                                 const OptimState& state, bool with_grad = true);

/// Central differences per coordinate. Test/diagnostic oracle.
std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& fn,
                                const std::vector<double>& state, double h);

}  // namespace depthflow
