#include <doctest.h>

#include <cmath>

#include "depthflow/image.hpp"
#include "depthflow/synth.hpp"

using namespace depthflow;

namespace {

// fronto-parallel plane at depth z covering the whole view generously
ScenePatch big_plane(double z, AlbedoPattern pattern, int label = 1) {
  ScenePatch p;
  p.origin = {-6, -6, z};
  p.edge_u = {12, 0, 0};
  p.edge_v = {0, 12, 0};
  p.pattern = pattern;
  p.base = 0.5;
  p.amplitude = 0.4;
  p.cell = 0.03;
  p.label = label;
  return p;
}

SceneSpec base_spec(int w, int h) {
  SceneSpec spec;
  spec.intrinsics = {1.1 * w, 1.1 * w, (w - 1) / 2.0, (h - 1) / 2.0, w, h};
  spec.pose = PoseSE3::identity();
  spec.seed = 5;
  return spec;
}

}  // namespace

TEST_CASE("identity pose renders identical frames with zero flow") {
  SceneSpec spec = base_spec(48, 36);
  spec.patches = {big_plane(2.0, AlbedoPattern::ValueNoise)};
  const RenderResult r = render(spec);
  for (size_t i = 0; i < r.flow_gt.size(); ++i) {
    REQUIRE(r.flow_gt.valid[i]);
    CHECK(std::abs(r.flow_gt.u[i]) < 1e-9);
    CHECK(std::abs(r.flow_gt.v[i]) < 1e-9);
    CHECK(r.target.data[i] == r.source.data[i]);
    CHECK(r.occluded[i] == 0);
  }
}

TEST_CASE("pure x-translation against a fronto-parallel plane gives f = (-fx tx / d, 0)") {
  SceneSpec spec = base_spec(48, 36);
  const double d = 2.5, tx = 0.08;
  spec.patches = {big_plane(d, AlbedoPattern::Checker)};
  spec.pose.translation = {tx, 0, 0};
  const RenderResult r = render(spec);
  // X_s = X + t, so u_s = u + fx*tx/d uniformly across the plane
  const double expected_u = spec.intrinsics.fx * tx / d;
  for (size_t i = 0; i < r.flow_gt.size(); ++i) {
    REQUIRE(r.flow_gt.valid[i]);
    CHECK(r.flow_gt.u[i] == doctest::Approx(expected_u).epsilon(1e-9));
    CHECK(std::abs(r.flow_gt.v[i]) < 1e-9);
  }
}

TEST_CASE("ground-truth flow agrees with rigid flow from the ground-truth depth") {
  const SceneSpec spec = make_two_plane_scene(80, 60, 0.3, 9);
  const RenderResult r = render(spec);
  const FlowField rigid = rigid_flow(r.depth, spec.pose, spec.intrinsics);
  for (size_t i = 0; i < rigid.size(); ++i) {
    if (!rigid.valid[i] || !r.flow_gt.valid[i]) continue;
    CHECK(std::abs(rigid.u[i] - r.flow_gt.u[i]) < 1e-6);
    CHECK(std::abs(rigid.v[i] - r.flow_gt.v[i]) < 1e-6);
  }
}

TEST_CASE("occlusion band width matches the disparity difference") {
  // foreground square in front of a background plane, pure x-translation:
  // background pixels hidden behind the square's trailing edge form a band of
  // width |disp_bg - disp_fg|
  SceneSpec spec = base_spec(96, 72);
  const double d_bg = 4.0, d_fg = 2.0, tx = 0.2;
  spec.patches = {big_plane(d_bg, AlbedoPattern::ValueNoise, 1)};
  ScenePatch fg;
  fg.origin = {-0.3, -0.3, d_fg};
  fg.edge_u = {0.6, 0, 0};
  fg.edge_v = {0, 0.6, 0};
  fg.pattern = AlbedoPattern::Checker;
  fg.label = 2;
  spec.patches.push_back(fg);
  spec.pose.translation = {tx, 0, 0};
  const RenderResult r = render(spec);

  const double band = spec.intrinsics.fx * tx * (1.0 / d_fg - 1.0 / d_bg);
  // count occluded background pixels along interior rows crossed by the square
  const int cy = 36;
  int occluded_run = 0;
  for (int x = 0; x < 96; ++x)
    if (r.occluded[static_cast<size_t>(cy) * 96 + x]) ++occluded_run;
  CHECK(occluded_run >= static_cast<int>(std::floor(band)) - 1);
  CHECK(occluded_run <= static_cast<int>(std::ceil(band)) + 1);
}

TEST_CASE("warping the target by the ground-truth flow reproduces the source") {
  const SceneSpec spec = make_two_plane_scene(96, 72, 0.0, 21);
  const RenderResult r = render(spec);
  const WarpResult w = inverse_warp(r.target, r.flow_gt);
  double total = 0;
  size_t n = 0;
  for (size_t i = 0; i < w.valid.size(); ++i) {
    if (!w.valid[i] || !r.visible[i]) continue;
    total += std::abs(w.image.data[i] - r.source.data[i]);
    ++n;
  }
  REQUIRE(n > 2000);
  CHECK(total / n < 2.0 / 255.0);
}

TEST_CASE("rendering is deterministic given the spec") {
  SceneSpec spec = make_two_plane_scene(64, 48, 0.4, 33);
  spec.noise_sigma = 0.01;
  const RenderResult a = render(spec);
  const RenderResult b = render(spec);
  CHECK(a.target.data == b.target.data);
  CHECK(a.source.data == b.source.data);
  CHECK(a.depth.values == b.depth.values);
  CHECK(a.flow_gt.u == b.flow_gt.u);
  CHECK(a.flow_gt.v == b.flow_gt.v);
  CHECK(a.occluded == b.occluded);
  CHECK(a.segments == b.segments);
}

TEST_CASE("flat regions of the canned scene have exactly zero image gradient") {
  const SceneSpec spec = make_two_plane_scene(96, 72, 0.4, 3);
  const RenderResult r = render(spec);
  const Gradients g = image_gradients(r.target);
  size_t flat = 0, checked = 0;
  for (int y = 1; y < 71; ++y)
    for (int x = 1; x < 95; ++x) {
      const size_t i = static_cast<size_t>(y) * 96 + x;
      if (r.segments[i] != 2) continue;  // label 2 is the untextured half
      // interior of the flat half only: all 4 neighbors also label 2
      if (r.segments[i - 1] != 2 || r.segments[i + 1] != 2 || r.segments[i - 96] != 2 ||
          r.segments[i + 96] != 2)
        continue;
      ++checked;
      if (g.dx.data[i] == 0.0 && g.dy.data[i] == 0.0) ++flat;
    }
  REQUIRE(checked > 200);
  CHECK(flat == checked);
}
