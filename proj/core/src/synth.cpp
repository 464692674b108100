#include "depthflow/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace depthflow {

void SceneSpec::validate() const {
  intrinsics.validate();
  if (patches.empty()) throw std::invalid_argument("SceneSpec: no patches");
  for (const auto& p : patches) {
    const Eigen::Vector3d corners[4] = {p.origin, p.origin + p.edge_u, p.origin + p.edge_v,
                                        p.origin + p.edge_u + p.edge_v};
    for (const auto& c : corners) {
      if (c.z() <= 1e-3) throw std::invalid_argument("SceneSpec: patch reaches the camera plane");
      if (pose.apply(c).z() <= 1e-3)
        throw std::invalid_argument("SceneSpec: patch behind the source camera");
    }
    if (p.edge_u.cross(p.edge_v).norm() < 1e-12)
      throw std::invalid_argument("SceneSpec: degenerate patch edges");
  }
  if (noise_sigma < 0) throw std::invalid_argument("SceneSpec: negative noise sigma");
}

namespace {

std::uint32_t hash3(std::uint32_t x, std::uint32_t y, std::uint32_t s) {
  std::uint32_t h = x * 0x8da6b343u + y * 0xd8163841u + s * 0xcb1ab31fu;
  h ^= h >> 13;
  h *= 0x85ebca6bu;
  h ^= h >> 16;
  return h;
}

double lattice_noise(double x, double y, std::uint32_t seed) {
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  const double sx = fx * fx * (3 - 2 * fx);  // smoothstep
  const double sy = fy * fy * (3 - 2 * fy);
  auto val = [&](int ix, int iy) {
    return hash3(static_cast<std::uint32_t>(ix + 0x4000), static_cast<std::uint32_t>(iy + 0x4000),
                 seed) * (1.0 / 4294967295.0);
  };
  const double a = val(x0, y0) * (1 - sx) + val(x0 + 1, y0) * sx;
  const double b = val(x0, y0 + 1) * (1 - sx) + val(x0 + 1, y0 + 1) * sx;
  return a * (1 - sy) + b * sy;
}

double value_noise(double x, double y, std::uint32_t seed) {
  double v = 0, w = 0.5, f = 1.0;
  for (int o = 0; o < 3; ++o) {
    v += w * lattice_noise(x * f, y * f, seed + o * 131u);
    w *= 0.5;
    f *= 2.0;
  }
  return v / 0.875;  // back to [0,1]
}

double albedo_at(const ScenePatch& p, double a, double b, std::uint32_t seed) {
  switch (p.pattern) {
    case AlbedoPattern::Flat:
      return p.base;
    case AlbedoPattern::Checker: {
      const int parity = (static_cast<int>(std::floor(a / p.cell)) +
                          static_cast<int>(std::floor(b / p.cell))) & 1;
      return p.base + p.amplitude * (parity ? 0.5 : -0.5);
    }
    case AlbedoPattern::ValueNoise:
      return p.base +
             p.amplitude * (value_noise(a / p.cell, b / p.cell,
                                        seed ^ static_cast<std::uint32_t>(p.label * 2654435761u)) -
                            0.5);
  }
  return p.base;
}

struct Hit {
  bool ok = false;
  double t = 0;  // depth along the z=1-normalized ray
  double a = 0, b = 0;
  int patch = -1;
};

struct PatchFrame {
  Eigen::Vector3d origin, eu, ev, normal;
  double plane_d;        // normal . origin
  Eigen::Matrix2d gram_inv;
  bool gram_ok;
};

PatchFrame make_frame(const Eigen::Vector3d& origin, const Eigen::Vector3d& eu,
                      const Eigen::Vector3d& ev) {
  PatchFrame f;
  f.origin = origin;
  f.eu = eu;
  f.ev = ev;
  f.normal = eu.cross(ev).normalized();
  f.plane_d = f.normal.dot(origin);
  Eigen::Matrix2d g;
  g << eu.dot(eu), eu.dot(ev), ev.dot(eu), ev.dot(ev);
  f.gram_ok = std::abs(g.determinant()) > 1e-15;
  if (f.gram_ok) f.gram_inv = g.inverse();
  return f;
}

Hit raycast(const std::vector<PatchFrame>& frames, const Eigen::Vector3d& ray) {
  Hit best;
  for (size_t k = 0; k < frames.size(); ++k) {
    const PatchFrame& f = frames[k];
    const double denom = f.normal.dot(ray);
    if (std::abs(denom) < 1e-12 || !f.gram_ok) continue;
    const double t = f.plane_d / denom;
    if (t <= 1e-6) continue;
    const Eigen::Vector3d rel = t * ray - f.origin;
    const Eigen::Vector2d ab = f.gram_inv * Eigen::Vector2d(f.eu.dot(rel), f.ev.dot(rel));
    if (ab.x() < 0 || ab.x() > 1 || ab.y() < 0 || ab.y() > 1) continue;
    const double depth = t * ray.z();
    if (!best.ok || depth < best.t) {
      best = {true, depth, ab.x(), ab.y(), static_cast<int>(k)};
    }
  }
  return best;
}

}  // namespace

RenderResult render(const SceneSpec& spec) {
  spec.validate();
  const CameraIntrinsics& K = spec.intrinsics;
  const int w = K.width, h = K.height;
  const size_t n = static_cast<size_t>(w) * h;

  std::vector<PatchFrame> tgt_frames, src_frames;
  for (const auto& p : spec.patches) {
    tgt_frames.push_back(make_frame(p.origin, p.edge_u, p.edge_v));
    src_frames.push_back(make_frame(spec.pose.apply(p.origin), spec.pose.rotation * p.edge_u,
                                    spec.pose.rotation * p.edge_v));
  }

  // plane-induced homographies: K (R + t n^T / d) K^-1, one per patch
  std::vector<Eigen::Matrix3d> homographies;
  {
    Eigen::Matrix3d Km, Kinv;
    Km << K.fx, 0, K.cx, 0, K.fy, K.cy, 0, 0, 1;
    Kinv << 1.0 / K.fx, 0, -K.cx / K.fx, 0, 1.0 / K.fy, -K.cy / K.fy, 0, 0, 1;
    for (const auto& f : tgt_frames)
      homographies.push_back(
          Km * (spec.pose.rotation + spec.pose.translation * f.normal.transpose() / f.plane_d) *
          Kinv);
  }

  RenderResult out;
  out.target = ImagePlane(w, h, 1);
  out.source = ImagePlane(w, h, 1);
  out.depth = DepthMap(w, h);
  out.flow_gt = FlowField(w, h, false);
  out.occluded.assign(n, 0);
  out.visible.assign(n, 0);
  out.segments.assign(n, 0);

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t i = out.flow_gt.idx(x, y);
      const Eigen::Vector3d ray((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0);
      const Hit hit = raycast(tgt_frames, ray);
      if (!hit.ok) continue;
      const ScenePatch& patch = spec.patches[hit.patch];
      out.target.at(x, y) = albedo_at(patch, hit.a, hit.b, spec.seed);
      out.depth.at(x, y) = hit.t;
      out.depth.set_valid(x, y, true);
      out.segments[i] = patch.label;

      const Eigen::Vector3d ps_h = homographies[hit.patch] * Eigen::Vector3d(x, y, 1.0);
      if (ps_h.z() <= 0) continue;
      const double psx = ps_h.x() / ps_h.z(), psy = ps_h.y() / ps_h.z();
      out.flow_gt.u[i] = psx - x;
      out.flow_gt.v[i] = psy - y;
      out.flow_gt.valid[i] = 1;

      const Eigen::Vector3d Xs = spec.pose.apply(hit.t * ray);
      const bool in_bounds = psx >= 0 && psx <= w - 1 && psy >= 0 && psy <= h - 1;
      if (Xs.z() > 0) {
        const Eigen::Vector3d src_ray((psx - K.cx) / K.fx, (psy - K.cy) / K.fy, 1.0);
        const Hit src_hit = raycast(src_frames, src_ray);
        if (src_hit.ok && src_hit.t < Xs.z() - 1e-6) out.occluded[i] = 1;
        if (in_bounds && !out.occluded[i]) out.visible[i] = 1;
      }
    }

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector3d ray((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0);
      const Hit hit = raycast(src_frames, ray);
      if (hit.ok) out.source.at(x, y) = albedo_at(spec.patches[hit.patch], hit.a, hit.b, spec.seed);
    }

  if (spec.noise_sigma > 0) {
    std::mt19937 rng_t(spec.seed * 2u + 1u), rng_s(spec.seed * 2u + 2u);
    std::normal_distribution<double> gauss(0.0, spec.noise_sigma);
    for (double& v : out.target.data) v = std::clamp(v + gauss(rng_t), 0.0, 1.0);
    for (double& v : out.source.data) v = std::clamp(v + gauss(rng_s), 0.0, 1.0);
  }
  return out;
}

SceneSpec make_two_plane_scene(int width, int height, double flat_fraction, std::uint32_t seed) {
  SceneSpec spec;
  spec.intrinsics = {1.1 * width, 1.1 * width, (width - 1) / 2.0, (height - 1) / 2.0, width, height};
  spec.pose = PoseSE3::from_axis_angle({0.002, -0.003, 0.001}, {0.06, 0.02, 0.03});
  spec.seed = seed;

  // slightly tilted background plane, far enough to cover the frustum
  const double span_x = 6.0, span_y = 5.0;
  const Eigen::Vector3d bg_origin(-span_x / 2, -span_y / 2, 2.7);
  const Eigen::Vector3d bg_eu(span_x, 0, 0.6);
  const Eigen::Vector3d bg_ev(0, span_y, 0);
  const double tex_frac = std::clamp(1.0 - flat_fraction, 0.0, 1.0);

  if (tex_frac > 0) {
    ScenePatch bg;
    bg.origin = bg_origin;
    bg.edge_u = tex_frac * bg_eu;
    bg.edge_v = bg_ev;
    bg.pattern = AlbedoPattern::ValueNoise;
    bg.base = 0.5;
    bg.amplitude = 0.7;
    bg.cell = 0.08;
    bg.label = 1;
    spec.patches.push_back(bg);
  }
  if (tex_frac < 1.0) {
    ScenePatch flat;
    flat.origin = bg_origin + tex_frac * bg_eu;
    flat.edge_u = (1.0 - tex_frac) * bg_eu;
    flat.edge_v = bg_ev;
    flat.pattern = AlbedoPattern::Flat;
    flat.base = 0.55;
    flat.label = 2;
    spec.patches.push_back(flat);
  }

  ScenePatch fg;
  fg.origin = Eigen::Vector3d(-0.45, -0.35, 1.85);
  fg.edge_u = Eigen::Vector3d(0.7, 0, 0.12);
  fg.edge_v = Eigen::Vector3d(0, 0.6, 0.05);
  fg.pattern = AlbedoPattern::ValueNoise;
  fg.base = 0.45;
  fg.amplitude = 0.8;
  fg.cell = 0.25;
  fg.label = 3;
  spec.patches.push_back(fg);
  return spec;
}

}  // namespace depthflow
