#pragma once

#include <cstdint>
#include <vector>

#include "depthflow/features.hpp"
#include "depthflow/geometry.hpp"
#include "depthflow/image.hpp"

namespace depthflow {

struct LossConfig {
  double lambda_sm_flow = 50.0;  // smoothness weight in the flow objective
  double lambda1 = 0.001;        // smoothness weight in the depth objective
  double lambda2 = 0.05;         // planar consistency weight
  double lambda3 = 3.0;          // feature synthesis weight
  double census_eps = 0.02;
  double occ_alpha1 = 0.01;
  double occ_alpha2 = 0.5;
  bool enable_photometric = true;
  bool enable_smoothness = true;
  bool enable_planar = true;
  bool enable_flow_consistency = true;
  bool enable_feature_synthesis = true;

  void validate() const;
};

struct LossBreakdown {
  double patch_photometric = 0;
  double smoothness = 0;
  double planar = 0;
  double flow_consistency = 0;
  double feature_synthesis = 0;
  double total_flow = 0;
  double total_depth = 0;
  std::size_t n_patch = 0, n_smooth = 0, n_planar = 0, n_flow = 0, n_feature = 0;
  bool patch_flagged = false, flow_flagged = false, planar_flagged = false;
};

/// Scalar term with analytic gradient w.r.t. a flow field.
struct FlowGradTerm {
  double value = 0;
  std::size_t count = 0;
  bool flagged = false;
  FlowField grad;
};

/// Scalar term with analytic gradient w.r.t. a depth map.
struct DepthGradTerm {
  double value = 0;
  std::size_t count = 0;
  bool flagged = false;
  std::vector<double> grad;
};

/// Census photometric loss over keypoint patches: the target image is warped
/// by the flow (sampled at p - flow(p)) and its soft ternary census codes are
/// compared against the source's at every patch pixel. Mean over valid patch
/// pixels; empty input gives 0 and a flag.
FlowGradTerm patch_photometric_loss(const ImagePlane& target, const ImagePlane& source,
                                    const FlowField& flow, const PatchSet& patches, double eps,
                                    const std::vector<std::uint8_t>* mask = nullptr,
                                    bool with_grad = true);

/// Edge-aware first-order smoothness: |dx f| exp(-|dx I|) + |dy f| exp(-|dy I|),
/// per flow component, averaged over the positions where the forward
/// difference exists. Subgradient 0 at kinks.
FlowGradTerm smoothness_loss(const FlowField& flow, const ImagePlane& target,
                             bool with_grad = true);

/// Mean per-component L1 between rigid and estimated flow over masked pixels.
FlowGradTerm flow_consistency_loss(const FlowField& rigid, const FlowField& flow,
                                   const std::vector<std::uint8_t>* mask = nullptr,
                                   bool with_grad = true);

/// Per level: warp the target feature map by the level's downsampled rigid
/// flow, L1 against the source features, mean over valid samples; levels sum.
/// Gradient is w.r.t. the full-resolution flow.
FlowGradTerm feature_synthesis_loss(const FeaturePyramid& source_pyramid,
                                    const FeaturePyramid& target_pyramid, const FlowField& flow,
                                    bool with_grad = true);

struct PlaneFit {
  int label = 0;
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double offset = 0;  // normal . X = offset
};

/// PCA plane fits of the backprojected points, one per usable segment.
/// Undersized (< 20 px) or rank-deficient segments are dropped.
std::vector<PlaneFit> fit_segment_planes(const DepthMap& depth, const std::vector<int>& segments,
                                         const CameraIntrinsics& K);

/// Least-squares plane fit per segment (labels > 0), then mean |D - plane
/// depth| over segment pixels. The fit is held fixed for the gradient
/// (alternating scheme); pass `frozen` to evaluate against fits from an
/// earlier state. Degenerate or undersized segments are skipped and flagged.
DepthGradTerm planar_consistency_loss(const DepthMap& depth, const std::vector<int>& segments,
                                      const CameraIntrinsics& K, bool with_grad = true,
                                      const std::vector<PlaneFit>* frozen = nullptr);

/// Forward-backward check: valid iff |f_fw(p) + f_bw(p + f_fw(p))|^2 <
/// a1 (|f_fw|^2 + |f_bw|^2) + a2. Pixels whose backward sample is unavailable
/// are marked invalid.
std::vector<std::uint8_t> occlusion_mask(const FlowField& forward, const FlowField& backward,
                                         double alpha1, double alpha2);

struct FlowLossResult {
  LossBreakdown breakdown;
  FlowField grad;
};

/// L_flow = L_patch + lambda * L_sm.
FlowLossResult total_flow_loss(const ImagePlane& target, const ImagePlane& source,
                               const FlowField& flow, const PatchSet& patches,
                               const LossConfig& config, bool with_grad = true);

struct DepthLossInputs {
  const ImagePlane* target = nullptr;
  const ImagePlane* source = nullptr;
  const FeaturePyramid* target_pyramid = nullptr;
  const FeaturePyramid* source_pyramid = nullptr;
  const FlowField* rigid = nullptr;        // from current depth and pose
  const FlowField* supervision = nullptr;  // f_flow; may be null
  const PatchSet* patches = nullptr;
  const std::vector<int>* segments = nullptr;  // label map, 0 = unsegmented
  const DepthMap* depth = nullptr;
  const CameraIntrinsics* intrinsics = nullptr;
  const std::vector<std::uint8_t>* valid_mask = nullptr;  // occlusion/visibility
};

struct DepthLossResult {
  LossBreakdown breakdown;
  FlowField grad_flow;             // sum of flow-dependent term gradients, weighted
  std::vector<double> grad_depth;  // planar term gradient, weighted
};

/// L_depth = L_ph + l1 L_sm + l2 L_spp + L_rigid + l3 L_feature, with each
/// term optional per config.
DepthLossResult total_depth_loss(const DepthLossInputs& in, const LossConfig& config,
                                 bool with_grad = true);

}  // namespace depthflow
