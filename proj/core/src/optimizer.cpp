#include "depthflow/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace depthflow {

namespace {

DepthMap state_depth(const OptimState& state, int width, int height) {
  DepthMap d(width, height, 0.0, true);
  for (size_t i = 0; i < state.log_depth.size(); ++i) d.values[i] = std::exp(state.log_depth[i]);
  return d;
}

}  // namespace

ObjectiveEval evaluate_objective(const OptimProblem& problem, const LossConfig& loss_config,
                                 const OptimState& state, bool with_grad) {
  const CameraIntrinsics& K = problem.intrinsics;
  const size_t n = static_cast<size_t>(K.width) * K.height;
  if (state.log_depth.size() != n) throw std::invalid_argument("evaluate_objective: state size");
  if (state.poses.size() != problem.sources.size())
    throw std::invalid_argument("evaluate_objective: pose count mismatch");

  const DepthMap depth = state_depth(state, K.width, K.height);

  ObjectiveEval out;
  out.grad_log_depth.assign(n, 0.0);
  out.grad_poses.assign(problem.sources.size(), Eigen::Matrix<double, 6, 1>::Zero());

  // planar term depends on depth only; evaluated once
  if (loss_config.enable_planar && problem.segments) {
    DepthGradTerm spp = planar_consistency_loss(depth, *problem.segments, K, with_grad);
    out.breakdown.planar = spp.value;
    out.breakdown.n_planar = spp.count;
    out.breakdown.planar_flagged = spp.flagged;
    out.value += loss_config.lambda2 * spp.value;
    if (with_grad)
      for (size_t i = 0; i < n; ++i)
        out.grad_log_depth[i] += loss_config.lambda2 * spp.grad[i] * depth.values[i];
  }

  LossConfig per_source = loss_config;
  per_source.enable_planar = false;

  for (size_t k = 0; k < problem.sources.size(); ++k) {
    const SourceView& sv = problem.sources[k];
    const Eigen::Vector3d aa = state.poses[k].head<3>();
    const Eigen::Vector3d t = state.poses[k].tail<3>();
    const RigidFlowJacobians rj = rigid_flow_jacobians(depth, aa, t, K);

    DepthLossInputs in;
    in.target = problem.target;
    in.source = sv.image;
    in.target_pyramid = problem.target_pyramid;
    in.source_pyramid = sv.pyramid;
    in.rigid = &rj.flow;
    in.supervision = sv.supervision;
    in.patches = problem.patches;
    in.depth = &depth;
    in.intrinsics = &K;
    in.valid_mask = sv.valid_mask;

    const DepthLossResult r = total_depth_loss(in, per_source, with_grad);
    out.value += r.breakdown.total_depth;
    out.breakdown.patch_photometric += r.breakdown.patch_photometric;
    out.breakdown.smoothness += r.breakdown.smoothness;
    out.breakdown.flow_consistency += r.breakdown.flow_consistency;
    out.breakdown.feature_synthesis += r.breakdown.feature_synthesis;
    out.breakdown.n_patch += r.breakdown.n_patch;
    out.breakdown.n_smooth += r.breakdown.n_smooth;
    out.breakdown.n_flow += r.breakdown.n_flow;
    out.breakdown.n_feature += r.breakdown.n_feature;
    out.breakdown.patch_flagged |= r.breakdown.patch_flagged;
    out.breakdown.flow_flagged |= r.breakdown.flow_flagged;

    if (with_grad) {
      for (size_t i = 0; i < n; ++i) {
        if (!rj.flow.valid[i]) continue;
        const Eigen::Vector2d gf(r.grad_flow.u[i], r.grad_flow.v[i]);
        out.grad_log_depth[i] += gf.dot(rj.dflow_ddepth[i]) * depth.values[i];
        out.grad_poses[k].head<3>() += rj.dflow_drot[i].transpose() * gf;
        out.grad_poses[k].tail<3>() += rj.dflow_dtrans[i].transpose() * gf;
      }
      for (size_t i = 0; i < n; ++i)
        out.grad_log_depth[i] += r.grad_depth[i] * depth.values[i];
    }
  }
  out.breakdown.total_depth = out.value;
  return out;
}

OptimResult optimize(const OptimProblem& problem, const LossConfig& loss_config,
                     const OptimConfig& config) {
  if (!problem.target || problem.sources.empty())
    throw std::invalid_argument("optimize: need a target and at least one source");
  if (!(config.init_depth > 0)) throw std::invalid_argument("optimize: init_depth must be positive");
  const CameraIntrinsics& K = problem.intrinsics;
  const size_t n = static_cast<size_t>(K.width) * K.height;

  OptimState state;
  state.log_depth.assign(n, std::log(config.init_depth));
  if (config.init_perturbation > 0) {
    std::mt19937 rng(config.seed);
    std::uniform_real_distribution<double> uni(-config.init_perturbation,
                                               config.init_perturbation);
    for (double& v : state.log_depth) v = std::log(config.init_depth * (1.0 + uni(rng)));
  }
  for (const SourceView& sv : problem.sources) {
    Eigen::Matrix<double, 6, 1> p;
    p.head<3>() = sv.pose.axis_angle();
    p.tail<3>() = sv.pose.translation;
    state.poses.push_back(p);
  }

  OptimResult result;
  ObjectiveEval cur = evaluate_objective(problem, loss_config, state, true);
  result.trace.push_back({0, cur.breakdown, 0.0});

  // adaptive trust step: pixels already at their optimum oscillate under sign
  // descent and force tiny line-search factors, so the base step follows the
  // last accepted effective step and regrows after clean full steps
  double step_scale = 1.0;

  for (int iter = 0; iter < config.max_iterations; ++iter) {
    // scaled steepest-descent direction, normalized per parameter group
    double gmax_d = 0;
    for (double g : cur.grad_log_depth) gmax_d = std::max(gmax_d, std::abs(g));
    double gmax_p = 0;
    if (config.optimize_pose)
      for (const auto& gp : cur.grad_poses) gmax_p = std::max(gmax_p, gp.cwiseAbs().maxCoeff());

    if (gmax_d == 0 && gmax_p == 0) {
      result.halt_reason = "zero gradient";
      break;
    }
    // sign descent decouples the per-pixel rates: L1 terms concentrate large
    // gradients on a few keypoints, which would otherwise stall the rest of
    // the depth field under a shared gradient-proportional step
    const double sd = step_scale * config.step_depth;
    std::vector<double> dir_d(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
      const double g = cur.grad_log_depth[i];
      dir_d[i] = g > 0 ? -sd : (g < 0 ? sd : 0.0);
    }
    std::vector<Eigen::Matrix<double, 6, 1>> dir_p(state.poses.size(),
                                                   Eigen::Matrix<double, 6, 1>::Zero());
    if (config.optimize_pose && gmax_p > 0)
      for (size_t k = 0; k < state.poses.size(); ++k)
        dir_p[k] = -(step_scale * config.step_pose / gmax_p) * cur.grad_poses[k];

    double slope = 0;
    for (size_t i = 0; i < n; ++i) slope += cur.grad_log_depth[i] * dir_d[i];
    for (size_t k = 0; k < state.poses.size(); ++k) slope += cur.grad_poses[k].dot(dir_p[k]);

    double alpha = 1.0;
    bool accepted = false;
    OptimState trial = state;
    for (int bt = 0; bt <= config.max_backtracks; ++bt) {
      for (size_t i = 0; i < n; ++i) trial.log_depth[i] = state.log_depth[i] + alpha * dir_d[i];
      for (size_t k = 0; k < state.poses.size(); ++k)
        trial.poses[k] = state.poses[k] + alpha * dir_p[k];
      const ObjectiveEval probe = evaluate_objective(problem, loss_config, trial, false);
      if (probe.value <= cur.value + config.armijo_c * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= config.backtrack_factor;
    }
    if (!accepted) {
      result.halted_early = true;
      result.halt_reason = "line search failed to decrease the loss";
      break;
    }
    step_scale = alpha < 1.0 ? std::max(step_scale * alpha, 1e-6)
                             : std::min(2.0 * step_scale, 1.0);
    state = trial;
    state.iteration = iter + 1;
    cur = evaluate_objective(problem, loss_config, state, true);
    result.trace.push_back({iter + 1, cur.breakdown, alpha});
  }

  result.depth = state_depth(state, K.width, K.height);
  result.poses.reserve(state.poses.size());
  for (const auto& p : state.poses)
    result.poses.push_back(PoseSE3::from_axis_angle(p.head<3>(), p.tail<3>()));
  return result;
}

std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& fn,
                                const std::vector<double>& state, double h) {
  if (!(h > 0)) throw std::invalid_argument("fd_gradient: h must be positive");
  std::vector<double> grad(state.size());
  std::vector<double> probe = state;
  for (size_t i = 0; i < state.size(); ++i) {
    probe[i] = state[i] + h;
    const double fp = fn(probe);
    probe[i] = state[i] - h;
    const double fm = fn(probe);
    probe[i] = state[i];
    grad[i] = (fp - fm) / (2 * h);
  }
  return grad;
}

}  // namespace depthflow
