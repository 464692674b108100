#include "depthflow/losses.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace depthflow {

void LossConfig::validate() const {
  if (lambda_sm_flow < 0 || lambda1 < 0 || lambda2 < 0 || lambda3 < 0)
    throw std::invalid_argument("LossConfig: weights must be non-negative");
  if (census_eps <= 0) throw std::invalid_argument("LossConfig: census_eps must be positive");
}

namespace {

// L1 subgradient selection; the deadband picks 0 at the kink so that residuals
// at round-off scale do not emit unit-magnitude gradient noise
inline double sgn(double x) { return x > 1e-12 ? 1.0 : (x < -1e-12 ? -1.0 : 0.0); }

// d/dx of x^2/(x^2 + k)
inline double census_dist_deriv(double x) {
  const double s = x * x + kCensusDistanceScale;
  return 2.0 * kCensusDistanceScale * x / (s * s);
}

}  // namespace

FlowGradTerm patch_photometric_loss(const ImagePlane& target, const ImagePlane& source,
                                    const FlowField& flow, const PatchSet& patches, double eps,
                                    const std::vector<std::uint8_t>* mask, bool with_grad) {
  if (flow.width != target.width || flow.height != target.height)
    throw std::invalid_argument("patch_photometric_loss: flow/image dimension mismatch");
  const ImagePlane tgt = to_gray(target);
  const ImagePlane src = to_gray(source);

  FlowGradTerm out;
  out.grad = FlowField(flow.width, flow.height);
  std::fill(out.grad.u.begin(), out.grad.u.end(), 0.0);
  std::fill(out.grad.v.begin(), out.grad.v.end(), 0.0);

  const auto nb = census_neighbors();
  double total = 0;
  std::size_t count = 0;

  for (const auto& [kx, ky] : patches.keypoints) {
    for (const auto& [ox, oy] : patches.offsets()) {
      const int px = kx + ox, py = ky + oy;
      // census neighborhood must be inside the lattice
      if (px < 1 || py < 1 || px + 1 >= flow.width || py + 1 >= flow.height) continue;
      if (mask && !(*mask)[flow.idx(px, py)]) continue;

      // gather warped target samples at the patch pixel and its 8 neighbors
      struct Pos {
        int x, y;
        SampleGrad s;
      };
      Pos pos[9];
      bool ok = true;
      for (int j = 0; j < 9 && ok; ++j) {
        const int rx = j == 0 ? px : px + nb[j - 1].first;
        const int ry = j == 0 ? py : py + nb[j - 1].second;
        const size_t ri = flow.idx(rx, ry);
        if (!flow.valid[ri]) {
          ok = false;
          break;
        }
        pos[j] = {rx, ry, bilinear_sample_grad(tgt, 0, rx - flow.u[ri], ry - flow.v[ri])};
        if (!pos[j].s.valid) ok = false;
      }
      if (!ok) continue;

      const double wc = pos[0].s.value;       // warped center
      const double sc = src.at(px, py);       // source center
      double dL_dW[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
      for (int j = 0; j < 8; ++j) {
        const double dw = pos[j + 1].s.value - wc;
        const double ds = src.at(px + nb[j].first, py + nb[j].second) - sc;
        const double cw = soft_census_code(dw, eps);
        const double cs = soft_census_code(ds, eps);
        const double x = cw - cs;
        total += x * x / (x * x + kCensusDistanceScale);
        if (with_grad) {
          const double dd = census_dist_deriv(x) * soft_census_code_deriv(dw, eps);
          dL_dW[j + 1] += dd;
          dL_dW[0] -= dd;
        }
      }
      if (with_grad) {
        for (int j = 0; j < 9; ++j) {
          // W(r) = tgt(r - f(r)), so dW/df = -grad of the interpolant
          const size_t ri = flow.idx(pos[j].x, pos[j].y);
          out.grad.u[ri] -= dL_dW[j] * pos[j].s.dx;
          out.grad.v[ri] -= dL_dW[j] * pos[j].s.dy;
        }
      }
      ++count;
    }
  }

  if (count == 0) {
    out.flagged = true;
    return out;
  }
  out.value = total / count;
  out.count = count;
  if (with_grad) {
    const double inv = 1.0 / count;
    for (size_t i = 0; i < out.grad.size(); ++i) {
      out.grad.u[i] *= inv;
      out.grad.v[i] *= inv;
    }
  }
  return out;
}

FlowGradTerm smoothness_loss(const FlowField& flow, const ImagePlane& target, bool with_grad) {
  if (flow.width != target.width || flow.height != target.height)
    throw std::invalid_argument("smoothness_loss: flow/image dimension mismatch");
  const Gradients g = image_gradients(target);
  const int w = flow.width, h = flow.height;

  FlowGradTerm out;
  out.grad = FlowField(w, h);
  std::fill(out.grad.u.begin(), out.grad.u.end(), 0.0);
  std::fill(out.grad.v.begin(), out.grad.v.end(), 0.0);

  const double nx = static_cast<double>(h) * (w - 1);
  const double ny = static_cast<double>(h - 1) * w;
  double sx = 0, sy = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double ax = 0, ay = 0;
      for (int c = 0; c < target.channels; ++c) {
        ax += std::abs(g.dx.at(x, y, c));
        ay += std::abs(g.dy.at(x, y, c));
      }
      const double wx = std::exp(-ax / target.channels);
      const double wy = std::exp(-ay / target.channels);
      const size_t i = flow.idx(x, y);
      if (x + 1 < w) {
        const size_t r = flow.idx(x + 1, y);
        const double du = flow.u[r] - flow.u[i];
        const double dv = flow.v[r] - flow.v[i];
        sx += (std::abs(du) + std::abs(dv)) * wx;
        if (with_grad) {
          out.grad.u[r] += sgn(du) * wx / nx;
          out.grad.u[i] -= sgn(du) * wx / nx;
          out.grad.v[r] += sgn(dv) * wx / nx;
          out.grad.v[i] -= sgn(dv) * wx / nx;
        }
      }
      if (y + 1 < h) {
        const size_t b = flow.idx(x, y + 1);
        const double du = flow.u[b] - flow.u[i];
        const double dv = flow.v[b] - flow.v[i];
        sy += (std::abs(du) + std::abs(dv)) * wy;
        if (with_grad) {
          out.grad.u[b] += sgn(du) * wy / ny;
          out.grad.u[i] -= sgn(du) * wy / ny;
          out.grad.v[b] += sgn(dv) * wy / ny;
          out.grad.v[i] -= sgn(dv) * wy / ny;
        }
      }
    }
  out.value = sx / nx + sy / ny;
  out.count = flow.size();
  return out;
}

FlowGradTerm flow_consistency_loss(const FlowField& rigid, const FlowField& flow,
                                   const std::vector<std::uint8_t>* mask, bool with_grad) {
  if (rigid.width != flow.width || rigid.height != flow.height)
    throw std::invalid_argument("flow_consistency_loss: dimension mismatch");
  FlowGradTerm out;
  out.grad = FlowField(rigid.width, rigid.height);
  std::fill(out.grad.u.begin(), out.grad.u.end(), 0.0);
  std::fill(out.grad.v.begin(), out.grad.v.end(), 0.0);

  double total = 0;
  std::size_t count = 0;
  for (size_t i = 0; i < rigid.size(); ++i) {
    if (!rigid.valid[i] || !flow.valid[i]) continue;
    if (mask && !(*mask)[i]) continue;
    const double du = rigid.u[i] - flow.u[i];
    const double dv = rigid.v[i] - flow.v[i];
    total += std::abs(du) + std::abs(dv);
    if (with_grad) {
      out.grad.u[i] = sgn(du);
      out.grad.v[i] = sgn(dv);
    }
    ++count;
  }
  if (count == 0) {
    out.flagged = true;
    return out;
  }
  out.value = total / count;
  out.count = count;
  if (with_grad) {
    const double inv = 1.0 / count;
    for (size_t i = 0; i < out.grad.size(); ++i) {
      out.grad.u[i] *= inv;
      out.grad.v[i] *= inv;
    }
  }
  return out;
}

FlowGradTerm feature_synthesis_loss(const FeaturePyramid& source_pyramid,
                                    const FeaturePyramid& target_pyramid, const FlowField& flow,
                                    bool with_grad) {
  if (source_pyramid.levels.size() != target_pyramid.levels.size() ||
      source_pyramid.start_level != target_pyramid.start_level)
    throw std::invalid_argument("feature_synthesis_loss: pyramid structure mismatch");
  const int n_levels = static_cast<int>(source_pyramid.levels.size());
  const int start = source_pyramid.start_level;
  const auto flows = downsample_flow(flow, start + n_levels);

  FlowGradTerm out;
  out.grad = FlowField(flow.width, flow.height);
  std::fill(out.grad.u.begin(), out.grad.u.end(), 0.0);
  std::fill(out.grad.v.begin(), out.grad.v.end(), 0.0);

  double total = 0;
  std::size_t count = 0;
  // per-level gradients, pushed back through the downsampling chain at the end
  std::vector<FlowField> level_grads;

  for (int l = 0; l < n_levels; ++l) {
    const ImagePlane& fs = source_pyramid.levels[l];
    const ImagePlane& ft = target_pyramid.levels[l];
    const FlowField& fl = flows[start + l];
    if (fs.width != fl.width || fs.height != fl.height || fs.channels != ft.channels ||
        fs.width != ft.width || fs.height != ft.height)
      throw std::invalid_argument("feature_synthesis_loss: level dimension mismatch");

    FlowField lg(fl.width, fl.height);
    std::fill(lg.u.begin(), lg.u.end(), 0.0);
    std::fill(lg.v.begin(), lg.v.end(), 0.0);

    double level_total = 0;
    std::size_t level_count = 0;
    for (int y = 0; y < fl.height; ++y)
      for (int x = 0; x < fl.width; ++x) {
        const size_t i = fl.idx(x, y);
        if (!fl.valid[i]) continue;
        const double qx = x - fl.u[i], qy = y - fl.v[i];
        for (int c = 0; c < fs.channels; ++c) {
          const SampleGrad s = bilinear_sample_grad(ft, c, qx, qy);
          if (!s.valid) break;  // same position for all channels
          const double diff = fs.at(x, y, c) - s.value;
          level_total += std::abs(diff);
          if (with_grad) {
            lg.u[i] += sgn(diff) * s.dx;
            lg.v[i] += sgn(diff) * s.dy;
          }
          ++level_count;
        }
      }
    if (level_count > 0) {
      total += level_total / level_count;
      count += level_count;
      if (with_grad) {
        const double inv = 1.0 / level_count;
        for (size_t i = 0; i < lg.size(); ++i) {
          lg.u[i] *= inv;
          lg.v[i] *= inv;
        }
      }
    }
    level_grads.push_back(std::move(lg));
  }

  if (with_grad) {
    for (int l = 0; l < n_levels; ++l) {
      FlowField g = std::move(level_grads[l]);
      for (int j = start + l; j > 0; --j) {
        FlowField finer(flows[j - 1].width, flows[j - 1].height);
        std::fill(finer.u.begin(), finer.u.end(), 0.0);
        std::fill(finer.v.begin(), finer.v.end(), 0.0);
        downsample_flow_transpose(g, flows[j - 1], finer);
        g = std::move(finer);
      }
      for (size_t i = 0; i < out.grad.size(); ++i) {
        out.grad.u[i] += g.u[i];
        out.grad.v[i] += g.v[i];
      }
    }
  }
  out.value = total;
  out.count = count;
  out.flagged = count == 0;
  return out;
}

std::vector<PlaneFit> fit_segment_planes(const DepthMap& depth, const std::vector<int>& segments,
                                         const CameraIntrinsics& K) {
  std::map<int, std::vector<size_t>> groups;
  for (size_t i = 0; i < segments.size(); ++i)
    if (segments[i] > 0 && depth.valid[i]) groups[segments[i]].push_back(i);

  std::vector<PlaneFit> fits;
  for (const auto& [label, pixels] : groups) {
    if (pixels.size() < 20) continue;
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    std::vector<Eigen::Vector3d> pts;
    pts.reserve(pixels.size());
    for (size_t i : pixels) {
      const int x = static_cast<int>(i % depth.width);
      const int y = static_cast<int>(i / depth.width);
      const Eigen::Vector3d X = backproject({double(x), double(y)}, depth.values[i], K);
      pts.push_back(X);
      centroid += X;
    }
    centroid /= static_cast<double>(pts.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& X : pts) {
      const Eigen::Vector3d d = X - centroid;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    // rank-deficient fit: points close to a line
    if (es.eigenvalues()(1) < 1e-12) continue;
    fits.push_back({label, es.eigenvectors().col(0), es.eigenvectors().col(0).dot(centroid)});
  }
  return fits;
}

DepthGradTerm planar_consistency_loss(const DepthMap& depth, const std::vector<int>& segments,
                                      const CameraIntrinsics& K, bool with_grad,
                                      const std::vector<PlaneFit>* frozen) {
  if (segments.size() != depth.size())
    throw std::invalid_argument("planar_consistency_loss: segment map size mismatch");
  DepthGradTerm out;
  out.grad.assign(depth.size(), 0.0);

  const std::vector<PlaneFit> fits = frozen ? *frozen : fit_segment_planes(depth, segments, K);
  std::map<int, const PlaneFit*> by_label;
  for (const auto& f : fits) by_label[f.label] = &f;

  std::map<int, std::vector<size_t>> groups;
  bool any_skipped = false;
  for (size_t i = 0; i < segments.size(); ++i)
    if (segments[i] > 0 && depth.valid[i]) groups[segments[i]].push_back(i);

  struct Contribution {
    size_t pixel;
    double residual;
  };
  std::vector<Contribution> contribs;

  for (const auto& [label, pixels] : groups) {
    const auto it = by_label.find(label);
    if (it == by_label.end()) {
      any_skipped = true;
      continue;
    }
    const Eigen::Vector3d& normal = it->second->normal;
    const double plane_d = it->second->offset;
    for (size_t i : pixels) {
      const int x = static_cast<int>(i % depth.width);
      const int y = static_cast<int>(i / depth.width);
      const Eigen::Vector3d ray((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0);
      const double denom = normal.dot(ray);
      if (std::abs(denom) < 1e-9) continue;
      const double z_plane = plane_d / denom;
      if (z_plane <= 0) continue;
      contribs.push_back({i, depth.values[i] - z_plane});
    }
  }

  out.flagged = contribs.empty() || any_skipped;
  if (contribs.empty()) return out;

  const double inv = 1.0 / contribs.size();
  double total = 0;
  for (const auto& c : contribs) {
    total += std::abs(c.residual);
    if (with_grad) out.grad[c.pixel] += sgn(c.residual) * inv;
  }
  out.value = total * inv;
  out.count = contribs.size();
  return out;
}

std::vector<std::uint8_t> occlusion_mask(const FlowField& forward, const FlowField& backward,
                                         double alpha1, double alpha2) {
  if (forward.width != backward.width || forward.height != backward.height)
    throw std::invalid_argument("occlusion_mask: dimension mismatch");
  std::vector<std::uint8_t> mask(forward.size(), 0);

  ImagePlane bw(backward.width, backward.height, 2);
  for (int y = 0; y < backward.height; ++y)
    for (int x = 0; x < backward.width; ++x) {
      const size_t i = backward.idx(x, y);
      bw.at(x, y, 0) = backward.u[i];
      bw.at(x, y, 1) = backward.v[i];
    }

  for (int y = 0; y < forward.height; ++y)
    for (int x = 0; x < forward.width; ++x) {
      const size_t i = forward.idx(x, y);
      if (!forward.valid[i]) continue;
      const SampleResult s = bilinear_sample(bw, x + forward.u[i], y + forward.v[i]);
      if (!s.valid) continue;
      const double du = forward.u[i] + s.value[0];
      const double dv = forward.v[i] + s.value[1];
      const double mag_fw = forward.u[i] * forward.u[i] + forward.v[i] * forward.v[i];
      const double mag_bw = s.value[0] * s.value[0] + s.value[1] * s.value[1];
      if (du * du + dv * dv < alpha1 * (mag_fw + mag_bw) + alpha2) mask[i] = 1;
    }
  return mask;
}

FlowLossResult total_flow_loss(const ImagePlane& target, const ImagePlane& source,
                               const FlowField& flow, const PatchSet& patches,
                               const LossConfig& config, bool with_grad) {
  config.validate();
  FlowLossResult out;
  FlowGradTerm patch = patch_photometric_loss(target, source, flow, patches, config.census_eps,
                                              nullptr, with_grad);
  FlowGradTerm sm = smoothness_loss(flow, target, with_grad);

  out.breakdown.patch_photometric = patch.value;
  out.breakdown.smoothness = sm.value;
  out.breakdown.n_patch = patch.count;
  out.breakdown.n_smooth = sm.count;
  out.breakdown.patch_flagged = patch.flagged;
  out.breakdown.total_flow = patch.value + config.lambda_sm_flow * sm.value;

  out.grad = FlowField(flow.width, flow.height);
  std::fill(out.grad.u.begin(), out.grad.u.end(), 0.0);
  std::fill(out.grad.v.begin(), out.grad.v.end(), 0.0);
  if (with_grad) {
    for (size_t i = 0; i < out.grad.size(); ++i) {
      out.grad.u[i] = patch.grad.u[i] + config.lambda_sm_flow * sm.grad.u[i];
      out.grad.v[i] = patch.grad.v[i] + config.lambda_sm_flow * sm.grad.v[i];
    }
  }
  return out;
}

DepthLossResult total_depth_loss(const DepthLossInputs& in, const LossConfig& config,
                                 bool with_grad) {
  config.validate();
  if (!in.rigid) throw std::invalid_argument("total_depth_loss: rigid flow required");
  const FlowField& rigid = *in.rigid;

  DepthLossResult out;
  out.grad_flow = FlowField(rigid.width, rigid.height);
  std::fill(out.grad_flow.u.begin(), out.grad_flow.u.end(), 0.0);
  std::fill(out.grad_flow.v.begin(), out.grad_flow.v.end(), 0.0);
  out.grad_depth.assign(rigid.size(), 0.0);

  auto add_flow_grad = [&](const FlowField& g, double weight) {
    for (size_t i = 0; i < g.size(); ++i) {
      out.grad_flow.u[i] += weight * g.u[i];
      out.grad_flow.v[i] += weight * g.v[i];
    }
  };

  double total = 0;
  if (config.enable_photometric) {
    if (!in.target || !in.source || !in.patches)
      throw std::invalid_argument("total_depth_loss: photometric term needs images and patches");
    FlowGradTerm t = patch_photometric_loss(*in.target, *in.source, rigid, *in.patches,
                                            config.census_eps, in.valid_mask, with_grad);
    out.breakdown.patch_photometric = t.value;
    out.breakdown.n_patch = t.count;
    out.breakdown.patch_flagged = t.flagged;
    total += t.value;
    if (with_grad) add_flow_grad(t.grad, 1.0);
  }
  if (config.enable_smoothness) {
    if (!in.target) throw std::invalid_argument("total_depth_loss: smoothness term needs target");
    FlowGradTerm t = smoothness_loss(rigid, *in.target, with_grad);
    out.breakdown.smoothness = t.value;
    out.breakdown.n_smooth = t.count;
    total += config.lambda1 * t.value;
    if (with_grad) add_flow_grad(t.grad, config.lambda1);
  }
  if (config.enable_planar && in.segments) {
    if (!in.depth || !in.intrinsics)
      throw std::invalid_argument("total_depth_loss: planar term needs depth and intrinsics");
    DepthGradTerm t = planar_consistency_loss(*in.depth, *in.segments, *in.intrinsics, with_grad);
    out.breakdown.planar = t.value;
    out.breakdown.n_planar = t.count;
    out.breakdown.planar_flagged = t.flagged;
    total += config.lambda2 * t.value;
    if (with_grad)
      for (size_t i = 0; i < t.grad.size(); ++i) out.grad_depth[i] += config.lambda2 * t.grad[i];
  }
  if (config.enable_flow_consistency && in.supervision) {
    FlowGradTerm t = flow_consistency_loss(rigid, *in.supervision, in.valid_mask, with_grad);
    out.breakdown.flow_consistency = t.value;
    out.breakdown.n_flow = t.count;
    out.breakdown.flow_flagged = t.flagged;
    total += t.value;
    if (with_grad) add_flow_grad(t.grad, 1.0);
  }
  if (config.enable_feature_synthesis) {
    if (!in.target_pyramid || !in.source_pyramid)
      throw std::invalid_argument("total_depth_loss: feature term needs pyramids");
    FlowGradTerm t = feature_synthesis_loss(*in.source_pyramid, *in.target_pyramid, rigid, with_grad);
    out.breakdown.feature_synthesis = t.value;
    out.breakdown.n_feature = t.count;
    total += config.lambda3 * t.value;
    if (with_grad) add_flow_grad(t.grad, config.lambda3);
  }
  out.breakdown.total_depth = total;
  return out;
}

}  // namespace depthflow
