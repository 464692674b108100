#include "depthflow/geometry.hpp"

#include <cmath>

namespace depthflow {

PoseSE3 PoseSE3::from_axis_angle(const Eigen::Vector3d& axis_angle, const Eigen::Vector3d& t) {
  PoseSE3 pose;
  const double theta = axis_angle.norm();
  if (theta < 1e-14) {
    // second-order expansion keeps det(R)=1 to machine precision near identity
    Eigen::Matrix3d W;
    W << 0, -axis_angle.z(), axis_angle.y(),
         axis_angle.z(), 0, -axis_angle.x(),
         -axis_angle.y(), axis_angle.x(), 0;
    pose.rotation = Eigen::Matrix3d::Identity() + W + 0.5 * W * W;
  } else {
    pose.rotation = Eigen::AngleAxisd(theta, axis_angle / theta).toRotationMatrix();
  }
  pose.translation = t;
  return pose;
}

Eigen::Vector3d PoseSE3::axis_angle() const {
  Eigen::AngleAxisd aa(rotation);
  return aa.angle() * aa.axis();
}

PoseSE3 PoseSE3::compose(const PoseSE3& other) const {
  PoseSE3 out;
  out.rotation = rotation * other.rotation;
  out.translation = rotation * other.translation + translation;
  return out;
}

PoseSE3 PoseSE3::inverse() const {
  PoseSE3 out;
  out.rotation = rotation.transpose();
  out.translation = -out.rotation * translation;
  return out;
}

Eigen::Matrix3d so3_right_jacobian(const Eigen::Vector3d& axis_angle) {
  const double theta = axis_angle.norm();
  Eigen::Matrix3d W;
  W << 0, -axis_angle.z(), axis_angle.y(),
       axis_angle.z(), 0, -axis_angle.x(),
       -axis_angle.y(), axis_angle.x(), 0;
  if (theta < 1e-6) {
    return Eigen::Matrix3d::Identity() - 0.5 * W + (1.0 / 6.0) * W * W;
  }
  const double t2 = theta * theta;
  const double a = (1.0 - std::cos(theta)) / t2;
  const double b = (theta - std::sin(theta)) / (t2 * theta);
  return Eigen::Matrix3d::Identity() - a * W + b * W * W;
}

Eigen::Vector3d backproject(const Eigen::Vector2d& p, double d, const CameraIntrinsics& K) {
  if (d <= 0) throw std::invalid_argument("backproject: depth must be positive");
  return {d * (p.x() - K.cx) / K.fx, d * (p.y() - K.cy) / K.fy, d};
}

Eigen::Vector2d project(const Eigen::Vector3d& X, const CameraIntrinsics& K) {
  if (X.z() <= 0) throw std::invalid_argument("project: point behind camera");
  return {K.fx * X.x() / X.z() + K.cx, K.fy * X.y() / X.z() + K.cy};
}

FlowField rigid_flow(const DepthMap& D, const PoseSE3& T, const CameraIntrinsics& K) {
  if (D.width != K.width || D.height != K.height)
    throw std::invalid_argument("rigid_flow: depth/intrinsics dimension mismatch");
  FlowField f(D.width, D.height, false);
  for (int y = 0; y < D.height; ++y) {
    for (int x = 0; x < D.width; ++x) {
      const size_t i = f.idx(x, y);
      if (!D.is_valid(x, y)) continue;
      const double d = D.at(x, y);
      if (!(d > 0) || !std::isfinite(d)) continue;
      const Eigen::Vector3d X = backproject({double(x), double(y)}, d, K);
      const Eigen::Vector3d Xs = T.apply(X);
      if (Xs.z() <= 0) continue;
      const Eigen::Vector2d ps = project(Xs, K);
      f.u[i] = ps.x() - x;
      f.v[i] = ps.y() - y;
      f.valid[i] = 1;
    }
  }
  return f;
}

RigidFlowJacobians rigid_flow_jacobians(const DepthMap& D, const Eigen::Vector3d& axis_angle,
                                        const Eigen::Vector3d& translation, const CameraIntrinsics& K) {
  const PoseSE3 T = PoseSE3::from_axis_angle(axis_angle, translation);
  const Eigen::Matrix3d Jr = so3_right_jacobian(axis_angle);

  RigidFlowJacobians out;
  out.flow = FlowField(D.width, D.height, false);
  out.dflow_ddepth.assign(D.size(), Eigen::Vector2d::Zero());
  out.dflow_dtrans.assign(D.size(), Eigen::Matrix<double, 2, 3>::Zero());
  out.dflow_drot.assign(D.size(), Eigen::Matrix<double, 2, 3>::Zero());

  for (int y = 0; y < D.height; ++y) {
    for (int x = 0; x < D.width; ++x) {
      const size_t i = out.flow.idx(x, y);
      if (!D.is_valid(x, y)) continue;
      const double d = D.at(x, y);
      if (!(d > 0) || !std::isfinite(d)) continue;
      const Eigen::Vector3d ray((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0);
      const Eigen::Vector3d Xs = T.apply(d * ray);
      if (Xs.z() <= 0) continue;

      out.flow.u[i] = K.fx * Xs.x() / Xs.z() + K.cx - x;
      out.flow.v[i] = K.fy * Xs.y() / Xs.z() + K.cy - y;
      out.flow.valid[i] = 1;

      Eigen::Matrix<double, 2, 3> Jproj;
      const double iz = 1.0 / Xs.z();
      Jproj << K.fx * iz, 0, -K.fx * Xs.x() * iz * iz,
               0, K.fy * iz, -K.fy * Xs.y() * iz * iz;

      out.dflow_ddepth[i] = Jproj * (T.rotation * ray);
      out.dflow_dtrans[i] = Jproj;

      // d(R v)/d(axis_angle) = -R [v]x Jr, v = d * ray
      const Eigen::Vector3d v = d * ray;
      Eigen::Matrix3d vx;
      vx << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
      out.dflow_drot[i] = Jproj * (-T.rotation * vx * Jr);
    }
  }
  return out;
}

}  // namespace depthflow
