#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace depthflow {

/// Pinhole intrinsics. Integer pixel coordinates address pixel centers.
struct CameraIntrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const {
    if (fx <= 0 || fy <= 0) throw std::invalid_argument("intrinsics: focal lengths must be positive");
    if (cx < 0 || cx >= width || cy < 0 || cy >= height)
      throw std::invalid_argument("intrinsics: principal point outside image");
  }
};

/// Rigid transform X' = R*X + t. R kept orthonormal (det +1).
struct PoseSE3 {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static PoseSE3 identity() { return {}; }
  static PoseSE3 from_axis_angle(const Eigen::Vector3d& axis_angle, const Eigen::Vector3d& t);

  Eigen::Vector3d axis_angle() const;
  PoseSE3 compose(const PoseSE3& other) const;  // this * other
  PoseSE3 inverse() const;
  Eigen::Vector3d apply(const Eigen::Vector3d& x) const { return rotation * x + translation; }
};

/// Right Jacobian of the SO(3) exponential map at axis_angle.
Eigen::Matrix3d so3_right_jacobian(const Eigen::Vector3d& axis_angle);

struct DepthMap {
  int width = 0, height = 0;
  std::vector<double> values;        // row-major H*W, meters
  std::vector<std::uint8_t> valid;   // same layout

  DepthMap() = default;
  DepthMap(int w, int h, double init = 0.0, bool valid_init = false)
      : width(w), height(h), values(static_cast<size_t>(w) * h, init),
        valid(static_cast<size_t>(w) * h, valid_init ? 1 : 0) {}

  double& at(int x, int y) { return values[static_cast<size_t>(y) * width + x]; }
  double at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
  bool is_valid(int x, int y) const { return valid[static_cast<size_t>(y) * width + x] != 0; }
  void set_valid(int x, int y, bool v) { valid[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }
  size_t size() const { return values.size(); }
};

/// Per-pixel displacement field (pixels), with a validity mask.
struct FlowField {
  int width = 0, height = 0;
  std::vector<double> u, v;
  std::vector<std::uint8_t> valid;

  FlowField() = default;
  FlowField(int w, int h, bool valid_init = true)
      : width(w), height(h), u(static_cast<size_t>(w) * h, 0.0), v(static_cast<size_t>(w) * h, 0.0),
        valid(static_cast<size_t>(w) * h, valid_init ? 1 : 0) {}

  size_t idx(int x, int y) const { return static_cast<size_t>(y) * width + x; }
  bool is_valid(int x, int y) const { return valid[idx(x, y)] != 0; }
  size_t size() const { return u.size(); }
};

/// X = d * K^-1 * [p;1]. Throws on d <= 0.
Eigen::Vector3d backproject(const Eigen::Vector2d& p, double d, const CameraIntrinsics& K);

/// Perspective projection. Throws if X.z <= 0; result may be out of bounds.
Eigen::Vector2d project(const Eigen::Vector3d& X, const CameraIntrinsics& K);

/// f(p) = project(T * backproject(p, D(p))) - p. Pixels with invalid depth or
/// transformed z <= 0 are masked invalid.
FlowField rigid_flow(const DepthMap& D, const PoseSE3& T, const CameraIntrinsics& K);

/// Per-pixel sensitivities of the rigid flow, for chaining loss gradients back
/// to depth and pose. Layout matches the pixel grid; entries for invalid
/// pixels are zero.
struct RigidFlowJacobians {
  FlowField flow;
  std::vector<Eigen::Vector2d> dflow_ddepth;                 // df/dD(p)
  std::vector<Eigen::Matrix<double, 2, 3>> dflow_dtrans;     // df/dt
  std::vector<Eigen::Matrix<double, 2, 3>> dflow_drot;       // df/d(axis-angle)
};

RigidFlowJacobians rigid_flow_jacobians(const DepthMap& D, const Eigen::Vector3d& axis_angle,
                                        const Eigen::Vector3d& translation, const CameraIntrinsics& K);

}  // namespace depthflow
