#include "depthflow/gradcheck.hpp"

#include <cmath>
#include <random>

#include "depthflow/features.hpp"
#include "depthflow/losses.hpp"
#include "depthflow/optimizer.hpp"
#include "depthflow/synth.hpp"

namespace depthflow {

namespace {

constexpr double kFdStep = 1e-5;

double rel_err(double analytic, double fd) {
  const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-9});
  return std::abs(analytic - fd) / denom;
}

ImagePlane smooth_random_image(int w, int h, std::mt19937& rng) {
  std::uniform_real_distribution<double> uni(0, 1);
  ImagePlane noise(w, h, 1);
  for (double& v : noise.data) v = uni(rng);
  // one 3x3 box blur pass keeps gradients finite everywhere but non-trivial
  ImagePlane out(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int sx = x + dx, sy = y + dy;
          if (sx >= 0 && sy >= 0 && sx < w && sy < h) {
            s += noise.at(sx, sy);
            ++n;
          }
        }
      out.at(x, y) = s / n;
    }
  return out;
}

FlowField random_flow(int w, int h, double mag, std::mt19937& rng) {
  std::uniform_real_distribution<double> uni(-mag, mag);
  FlowField f(w, h);
  for (size_t i = 0; i < f.size(); ++i) {
    f.u[i] = uni(rng);
    f.v[i] = uni(rng);
  }
  return f;
}

// unit direction in flow space
FlowField random_direction(int w, int h, std::mt19937& rng) {
  std::normal_distribution<double> gauss(0, 1);
  FlowField d(w, h);
  double norm = 0;
  for (size_t i = 0; i < d.size(); ++i) {
    d.u[i] = gauss(rng);
    d.v[i] = gauss(rng);
    norm += d.u[i] * d.u[i] + d.v[i] * d.v[i];
  }
  norm = std::sqrt(norm);
  for (size_t i = 0; i < d.size(); ++i) {
    d.u[i] /= norm;
    d.v[i] /= norm;
  }
  return d;
}

FlowField offset_flow(const FlowField& f, const FlowField& dir, double t) {
  FlowField out = f;
  for (size_t i = 0; i < f.size(); ++i) {
    out.u[i] = f.u[i] + t * dir.u[i];
    out.v[i] = f.v[i] + t * dir.v[i];
  }
  return out;
}

double directional(const FlowField& grad, const FlowField& dir) {
  double s = 0;
  for (size_t i = 0; i < grad.size(); ++i) s += grad.u[i] * dir.u[i] + grad.v[i] * dir.v[i];
  return s;
}

PatchSet random_patches(int w, int h, int count, std::mt19937& rng) {
  PatchSet ps;
  ps.radius = 2;
  std::uniform_int_distribution<int> px(3, w - 4), py(3, h - 4);
  for (int i = 0; i < count; ++i) ps.keypoints.emplace_back(px(rng), py(rng));
  return ps;
}

GradCheckReport check_flow_term(const std::string& name, int states, double tol, std::mt19937& rng,
                                int w, int h,
                                const std::function<FlowGradTerm(const FlowField&, bool)>& term) {
  GradCheckReport rep{name, states, 0, tol, false};
  for (int s = 0; s < states; ++s) {
    const FlowField f = random_flow(w, h, 1.5, rng);
    const FlowField dir = random_direction(w, h, rng);
    const FlowGradTerm g = term(f, true);
    if (g.flagged) {
      --s;  // degenerate draw, rare
      continue;
    }
    const double analytic = directional(g.grad, dir);
    const double fd =
        (term(offset_flow(f, dir, kFdStep), false).value -
         term(offset_flow(f, dir, -kFdStep), false).value) /
        (2 * kFdStep);
    rep.max_rel_err = std::max(rep.max_rel_err, rel_err(analytic, fd));
  }
  rep.passed = rep.max_rel_err < tol;
  return rep;
}

}  // namespace

std::vector<GradCheckReport> run_gradient_suite(int width, int height, int states,
                                                std::uint32_t seed, double tolerance) {
  std::mt19937 rng(seed);
  std::vector<GradCheckReport> out;
  const int w = width, h = height;

  {
    const ImagePlane target = smooth_random_image(w, h, rng);
    const ImagePlane source = smooth_random_image(w, h, rng);
    const PatchSet patches = random_patches(w, h, 24, rng);
    out.push_back(check_flow_term(
        "photometric", states, tolerance, rng, w, h, [&](const FlowField& f, bool grad) {
          return patch_photometric_loss(target, source, f, patches, 0.02, nullptr, grad);
        }));
  }
  {
    const ImagePlane target = smooth_random_image(w, h, rng);
    out.push_back(check_flow_term("smoothness", states, tolerance, rng, w, h,
                                  [&](const FlowField& f, bool grad) {
                                    return smoothness_loss(f, target, grad);
                                  }));
  }
  {
    std::mt19937 aux(seed ^ 0x51ed2705u);
    const FlowField reference = random_flow(w, h, 3.0, aux);
    out.push_back(check_flow_term("flow_consistency", states, tolerance, rng, w, h,
                                  [&](const FlowField& f, bool grad) {
                                    return flow_consistency_loss(f, reference, nullptr, grad);
                                  }));
  }
  {
    const ImagePlane target = smooth_random_image(w, h, rng);
    const ImagePlane source = smooth_random_image(w, h, rng);
    FeatureBankConfig cfg;
    cfg.channels_per_level = {4, 6};
    cfg.start_level = 1;
    const FeaturePyramid tp = build_feature_pyramid(target, cfg);
    const FeaturePyramid sp = build_feature_pyramid(source, cfg);
    out.push_back(check_flow_term("feature_synthesis", states, tolerance, rng, w, h,
                                  [&](const FlowField& f, bool grad) {
                                    return feature_synthesis_loss(sp, tp, f, grad);
                                  }));
  }
  {
    GradCheckReport rep{"planar", states, 0, tolerance, false};
    CameraIntrinsics K{0.9 * w, 0.9 * w, (w - 1) / 2.0, (h - 1) / 2.0, w, h};
    std::vector<int> segments(static_cast<size_t>(w) * h, 0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        segments[static_cast<size_t>(y) * w + x] = x < w / 2 ? 1 : 2;
    std::uniform_real_distribution<double> ud(1.5, 3.5);
    std::normal_distribution<double> gauss(0, 1);
    for (int s = 0; s < states; ++s) {
      DepthMap D(w, h, 0.0, true);
      for (auto& v : D.values) v = ud(rng);
      const auto frozen = fit_segment_planes(D, segments, K);
      std::vector<double> dir(D.size());
      double norm = 0;
      for (auto& v : dir) {
        v = gauss(rng);
        norm += v * v;
      }
      norm = std::sqrt(norm);
      for (auto& v : dir) v /= norm;

      const DepthGradTerm g = planar_consistency_loss(D, segments, K, true, &frozen);
      double analytic = 0;
      for (size_t i = 0; i < dir.size(); ++i) analytic += g.grad[i] * dir[i];
      auto value_at = [&](double t) {
        DepthMap Dt = D;
        for (size_t i = 0; i < dir.size(); ++i) Dt.values[i] += t * dir[i];
        return planar_consistency_loss(Dt, segments, K, false, &frozen).value;
      };
      const double fd = (value_at(kFdStep) - value_at(-kFdStep)) / (2 * kFdStep);
      rep.max_rel_err = std::max(rep.max_rel_err, rel_err(analytic, fd));
    }
    rep.passed = rep.max_rel_err < tolerance;
    out.push_back(rep);
  }
  {
    // full objective chained through log-depth and pose on a rendered scene
    GradCheckReport rep{"objective", states, 0, tolerance, false};
    SceneSpec spec = make_two_plane_scene(w, h, 0.3, seed);
    const RenderResult scene = render(spec);
    FeatureBankConfig cfg;
    cfg.channels_per_level = {4, 6};
    cfg.start_level = 1;
    const FeaturePyramid tp = build_feature_pyramid(scene.target, cfg);
    const FeaturePyramid sp = build_feature_pyramid(scene.source, cfg);
    const PatchSet patches = extract_keypoints(scene.target, 60);

    OptimProblem problem;
    problem.target = &scene.target;
    problem.target_pyramid = &tp;
    problem.patches = &patches;
    problem.segments = &scene.segments;
    problem.intrinsics = spec.intrinsics;
    SourceView sv;
    sv.image = &scene.source;
    sv.pyramid = &sp;
    sv.pose = spec.pose;
    sv.supervision = &scene.flow_gt;
    sv.valid_mask = &scene.visible;
    problem.sources.push_back(sv);

    LossConfig lc;
    lc.enable_planar = false;  // refit inside the probe breaks the frozen-fit premise
    const size_t n = scene.depth.size();
    std::uniform_real_distribution<double> ud(0.2, 1.2);
    std::normal_distribution<double> gauss(0, 1);
    for (int s = 0; s < states; ++s) {
      OptimState state;
      state.log_depth.resize(n);
      for (auto& v : state.log_depth) v = ud(rng);
      Eigen::Matrix<double, 6, 1> p;
      p.head<3>() = spec.pose.axis_angle();
      p.tail<3>() = spec.pose.translation;
      for (int k = 0; k < 6; ++k) p(k) += 0.01 * gauss(rng);
      state.poses.push_back(p);

      const ObjectiveEval g = evaluate_objective(problem, lc, state, true);
      const double f0 = evaluate_objective(problem, lc, state, false).value;
      auto value_with = [&](size_t coord, double t) {
        OptimState st = state;
        if (coord < n)
          st.log_depth[coord] += t;
        else
          st.poses[0](coord - n) += t;
        return evaluate_objective(problem, lc, st, false).value;
      };
      // probe a random subset of depth coordinates plus every pose coordinate;
      // a pose coordinate moves every pixel's flow at once, so the probe step
      // is kept small to shrink the L1 kink noise that accumulates across the
      // image (it scales linearly with the step, round-off does not bite yet)
      const double hp = 1e-8;
      std::uniform_int_distribution<size_t> pick(0, n - 1);
      std::vector<size_t> coords;
      for (int j = 0; j < 12; ++j) coords.push_back(pick(rng));
      for (int k = 0; k < 6; ++k) coords.push_back(n + k);
      for (size_t coord : coords) {
        const double fp = value_with(coord, hp);
        const double fm = value_with(coord, -hp);
        const double fd = (fp - fm) / (2 * hp);
        const double analytic = coord < n ? g.grad_log_depth[coord] : g.grad_poses[0](coord - n);
        // an L1 kink inside the probe interval bends the two one-sided
        // secants apart; the central difference is then meaningless
        if (std::abs(fp + fm - 2 * f0) > 2e-4 * hp * std::abs(fd)) continue;
        // below this scale the difference quotient is dominated by round-off
        if (std::abs(fd) < 1e-2 && std::abs(analytic) < 1e-2) continue;
        rep.max_rel_err = std::max(rep.max_rel_err, rel_err(analytic, fd));
      }
    }
    rep.passed = rep.max_rel_err < tolerance;
    out.push_back(rep);
  }
  return out;
}

}  // namespace depthflow
