#include <benchmark/benchmark.h>

#include "depthflow/losses.hpp"
#include "depthflow/optimizer.hpp"
#include "depthflow/synth.hpp"

using namespace depthflow;

namespace {

struct Fixture {
  SceneSpec spec;
  RenderResult scene;
  FeaturePyramid tp, sp;
  PatchSet patches;
  FlowField rigid;

  explicit Fixture(int w, int h) {
    spec = make_two_plane_scene(w, h, 0.2, 1);
    scene = render(spec);
    FeatureBankConfig cfg;
    cfg.channels_per_level = {16, 32};
    cfg.start_level = 1;
    tp = build_feature_pyramid(scene.target, cfg);
    sp = build_feature_pyramid(scene.source, cfg);
    patches = extract_keypoints(scene.target, 300);
    rigid = rigid_flow(scene.depth, spec.pose, spec.intrinsics);
  }
};

const Fixture& fixture() {
  static Fixture f(128, 96);
  return f;
}

void BM_InverseWarp(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(inverse_warp(f.scene.target, f.rigid));
}
BENCHMARK(BM_InverseWarp);

void BM_PatchPhotometricLoss(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state)
    benchmark::DoNotOptimize(
        patch_photometric_loss(f.scene.target, f.scene.source, f.rigid, f.patches, 0.02));
}
BENCHMARK(BM_PatchPhotometricLoss);

void BM_FeaturePyramid(benchmark::State& state) {
  const Fixture& f = fixture();
  FeatureBankConfig cfg;
  cfg.channels_per_level = {16, 32};
  cfg.start_level = 1;
  for (auto _ : state) benchmark::DoNotOptimize(build_feature_pyramid(f.scene.target, cfg));
}
BENCHMARK(BM_FeaturePyramid);

void BM_FeatureSynthesisLoss(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(feature_synthesis_loss(f.sp, f.tp, f.rigid));
}
BENCHMARK(BM_FeatureSynthesisLoss);

void BM_RigidFlowJacobians(benchmark::State& state) {
  const Fixture& f = fixture();
  const Eigen::Vector3d aa = f.spec.pose.axis_angle();
  for (auto _ : state)
    benchmark::DoNotOptimize(
        rigid_flow_jacobians(f.scene.depth, aa, f.spec.pose.translation, f.spec.intrinsics));
}
BENCHMARK(BM_RigidFlowJacobians);

void BM_ObjectiveEval(benchmark::State& state) {
  const Fixture& f = fixture();
  OptimProblem problem;
  problem.target = &f.scene.target;
  problem.target_pyramid = &f.tp;
  problem.patches = &f.patches;
  problem.segments = &f.scene.segments;
  problem.intrinsics = f.spec.intrinsics;
  SourceView sv;
  sv.image = &f.scene.source;
  sv.pyramid = &f.sp;
  sv.pose = f.spec.pose;
  sv.supervision = &f.scene.flow_gt;
  sv.valid_mask = &f.scene.visible;
  problem.sources.push_back(sv);

  OptimState st;
  st.log_depth.assign(f.scene.depth.size(), std::log(2.0));
  Eigen::Matrix<double, 6, 1> p;
  p.head<3>() = f.spec.pose.axis_angle();
  p.tail<3>() = f.spec.pose.translation;
  st.poses.push_back(p);

  LossConfig lc;
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_objective(problem, lc, st, true));
}
BENCHMARK(BM_ObjectiveEval);

}  // namespace

BENCHMARK_MAIN();
