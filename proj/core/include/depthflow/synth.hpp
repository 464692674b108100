#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "depthflow/geometry.hpp"
#include "depthflow/image.hpp"

namespace depthflow {

enum class AlbedoPattern { Flat, Checker, ValueNoise };

/// Planar rectangle origin + a*edge_u + b*edge_v, (a,b) in [0,1]^2, with a
/// procedural albedo sampled in patch-local coordinates.
struct ScenePatch {
  Eigen::Vector3d origin;
  Eigen::Vector3d edge_u, edge_v;
  AlbedoPattern pattern = AlbedoPattern::Flat;
  double base = 0.5;       // mean albedo
  double amplitude = 0.3;  // texture contrast (ignored for Flat)
  double cell = 0.1;       // pattern cell size in (a,b) units
  int label = 1;           // segment id written to the label map
};

struct SceneSpec {
  CameraIntrinsics intrinsics;
  PoseSE3 pose;  // T_{t->s}: target-frame coordinates into the source frame
  std::vector<ScenePatch> patches;
  double noise_sigma = 0.0;
  std::uint32_t seed = 1;

  void validate() const;
};

struct RenderResult {
  ImagePlane target, source;  // grayscale
  DepthMap depth;             // target-view depth
  FlowField flow_gt;          // closed-form target->source flow (homography route)
  std::vector<std::uint8_t> occluded;  // 1 = hidden in the source view
  std::vector<std::uint8_t> visible;   // 1 = in source bounds and not occluded
  std::vector<int> segments;           // patch label per target pixel, 0 = miss
};

/// Ray-cast the planar scene at both poses. Ground-truth flow comes from the
/// per-plane homography K(R + t n^T / c)K^-1, an independent derivation from
/// rigid_flow. Deterministic given the spec.
RenderResult render(const SceneSpec& spec);

/// Canned two-plane layout used across tests: textured background plane plus
/// a foreground square; flat_fraction of the background stays untextured.
SceneSpec make_two_plane_scene(int width, int height, double flat_fraction = 0.0,
                               std::uint32_t seed = 1);

}  // namespace depthflow
