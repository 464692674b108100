#include "depthflow/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace depthflow {

using nlohmann::json;

ParseError::ParseError(const std::string& what, std::size_t off)
    : std::runtime_error(what + " (byte offset " + std::to_string(off) + ")"), offset(off) {}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  return f;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  return f;
}

// whitespace-delimited PNM/PFM header token
std::string next_token(std::istream& in) {
  std::string tok;
  in >> tok;
  return tok;
}

}  // namespace

void write_pfm(const std::string& path, const ImagePlane& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_pfm: 1 or 3 channels only");
  auto f = open_out(path);
  f << (img.channels == 1 ? "Pf" : "PF") << "\n"
    << img.width << " " << img.height << "\n-1.0\n";
  // bottom-to-top row order
  std::vector<float> row(static_cast<size_t>(img.width) * img.channels);
  for (int y = img.height - 1; y >= 0; --y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        row[static_cast<size_t>(x) * img.channels + c] = static_cast<float>(img.at(x, y, c));
    f.write(reinterpret_cast<const char*>(row.data()), row.size() * sizeof(float));
  }
}

ImagePlane read_pfm(const std::string& path) {
  auto f = open_in(path);
  const std::string magic = next_token(f);
  if (magic != "Pf" && magic != "PF") throw ParseError("PFM: bad magic", 0);
  const int channels = magic == "Pf" ? 1 : 3;
  int w = 0, h = 0;
  double scale = 0;
  f >> w >> h >> scale;
  if (!f || w <= 0 || h <= 0) throw ParseError("PFM: bad header", static_cast<size_t>(f.tellg()));
  if (scale >= 0) throw ParseError("PFM: big-endian files unsupported", static_cast<size_t>(f.tellg()));
  f.get();  // single whitespace after the scale
  ImagePlane img(w, h, channels);
  std::vector<float> row(static_cast<size_t>(w) * channels);
  for (int y = h - 1; y >= 0; --y) {
    f.read(reinterpret_cast<char*>(row.data()), row.size() * sizeof(float));
    if (!f) throw ParseError("PFM: truncated data", static_cast<size_t>(f.tellg()));
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) img.at(x, y, c) = row[static_cast<size_t>(x) * channels + c];
  }
  return img;
}

void write_pnm(const std::string& path, const ImagePlane& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_pnm: 1 or 3 channels only");
  auto f = open_out(path);
  f << (img.channels == 1 ? "P5" : "P6") << "\n" << img.width << " " << img.height << "\n255\n";
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        const double v = std::clamp(img.at(x, y, c), 0.0, 1.0);
        f.put(static_cast<char>(std::lround(v * 255.0)));
      }
}

ImagePlane read_pnm(const std::string& path) {
  auto f = open_in(path);
  const std::string magic = next_token(f);
  if (magic != "P5" && magic != "P6") throw ParseError("PNM: bad magic", 0);
  const int channels = magic == "P5" ? 1 : 3;
  int w = 0, h = 0, maxval = 0;
  f >> w >> h >> maxval;
  if (!f || w <= 0 || h <= 0) throw ParseError("PNM: bad header", static_cast<size_t>(f.tellg()));
  if (maxval != 255) throw ParseError("PNM: only maxval 255 supported", static_cast<size_t>(f.tellg()));
  f.get();
  ImagePlane img(w, h, channels);
  std::vector<unsigned char> row(static_cast<size_t>(w) * channels);
  for (int y = 0; y < h; ++y) {
    f.read(reinterpret_cast<char*>(row.data()), row.size());
    if (!f) throw ParseError("PNM: truncated data", static_cast<size_t>(f.tellg()));
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        img.at(x, y, c) = row[static_cast<size_t>(x) * channels + c] / 255.0;
  }
  return img;
}

void write_flo(const std::string& path, const FlowField& flow) {
  auto f = open_out(path);
  const float magic = 202021.25f;
  const std::int32_t w = flow.width, h = flow.height;
  f.write(reinterpret_cast<const char*>(&magic), 4);
  f.write(reinterpret_cast<const char*>(&w), 4);
  f.write(reinterpret_cast<const char*>(&h), 4);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t i = flow.idx(x, y);
      const float uv[2] = {static_cast<float>(flow.u[i]), static_cast<float>(flow.v[i])};
      f.write(reinterpret_cast<const char*>(uv), 8);
    }
}

FlowField read_flo(const std::string& path) {
  auto f = open_in(path);
  float magic = 0;
  f.read(reinterpret_cast<char*>(&magic), 4);
  if (!f || magic != 202021.25f) throw ParseError(".flo: bad magic", 0);
  std::int32_t w = 0, h = 0;
  f.read(reinterpret_cast<char*>(&w), 4);
  f.read(reinterpret_cast<char*>(&h), 4);
  if (!f || w <= 0 || h <= 0) throw ParseError(".flo: bad dimensions", 4);
  FlowField flow(w, h, true);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float uv[2];
      f.read(reinterpret_cast<char*>(uv), 8);
      if (!f) throw ParseError(".flo: truncated data", 12 + 8 * flow.idx(x, y));
      const size_t i = flow.idx(x, y);
      flow.u[i] = uv[0];
      flow.v[i] = uv[1];
    }
  return flow;
}

json to_json(const CameraIntrinsics& K) {
  return {{"fx", K.fx}, {"fy", K.fy}, {"cx", K.cx}, {"cy", K.cy},
          {"width", K.width}, {"height", K.height}};
}

CameraIntrinsics intrinsics_from_json(const json& j) {
  CameraIntrinsics K{j.at("fx"), j.at("fy"), j.at("cx"), j.at("cy"), j.at("width"), j.at("height")};
  K.validate();
  return K;
}

json to_json(const PoseSE3& pose) {
  const Eigen::Vector3d aa = pose.axis_angle();
  return {{"axis_angle", {aa.x(), aa.y(), aa.z()}},
          {"t", {pose.translation.x(), pose.translation.y(), pose.translation.z()}}};
}

PoseSE3 pose_from_json(const json& j) {
  const auto& aa = j.at("axis_angle");
  const auto& t = j.at("t");
  return PoseSE3::from_axis_angle(
      Eigen::Vector3d(aa.at(0).get<double>(), aa.at(1).get<double>(), aa.at(2).get<double>()),
      Eigen::Vector3d(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()));
}

json to_json(const LossConfig& c) {
  return {{"lambda_sm_flow", c.lambda_sm_flow}, {"lambda1", c.lambda1}, {"lambda2", c.lambda2},
          {"lambda3", c.lambda3}, {"census_eps", c.census_eps},
          {"occ_alpha1", c.occ_alpha1}, {"occ_alpha2", c.occ_alpha2},
          {"enable_photometric", c.enable_photometric},
          {"enable_smoothness", c.enable_smoothness},
          {"enable_planar", c.enable_planar},
          {"enable_flow_consistency", c.enable_flow_consistency},
          {"enable_feature_synthesis", c.enable_feature_synthesis}};
}

LossConfig loss_config_from_json(const json& j) {
  LossConfig c;
  c.lambda_sm_flow = j.value("lambda_sm_flow", c.lambda_sm_flow);
  c.lambda1 = j.value("lambda1", c.lambda1);
  c.lambda2 = j.value("lambda2", c.lambda2);
  c.lambda3 = j.value("lambda3", c.lambda3);
  c.census_eps = j.value("census_eps", c.census_eps);
  c.occ_alpha1 = j.value("occ_alpha1", c.occ_alpha1);
  c.occ_alpha2 = j.value("occ_alpha2", c.occ_alpha2);
  c.enable_photometric = j.value("enable_photometric", c.enable_photometric);
  c.enable_smoothness = j.value("enable_smoothness", c.enable_smoothness);
  c.enable_planar = j.value("enable_planar", c.enable_planar);
  c.enable_flow_consistency = j.value("enable_flow_consistency", c.enable_flow_consistency);
  c.enable_feature_synthesis = j.value("enable_feature_synthesis", c.enable_feature_synthesis);
  c.validate();
  return c;
}

json to_json(const LossBreakdown& b) {
  return {{"patch_photometric", b.patch_photometric}, {"smoothness", b.smoothness},
          {"planar", b.planar}, {"flow_consistency", b.flow_consistency},
          {"feature_synthesis", b.feature_synthesis}, {"total_flow", b.total_flow},
          {"total_depth", b.total_depth},
          {"n_patch", b.n_patch}, {"n_smooth", b.n_smooth}, {"n_planar", b.n_planar},
          {"n_flow", b.n_flow}, {"n_feature", b.n_feature},
          {"patch_flagged", b.patch_flagged}, {"flow_flagged", b.flow_flagged},
          {"planar_flagged", b.planar_flagged}};
}

json to_json(const EvalReport& r) {
  return {{"abs_rel", r.abs_rel}, {"rms", r.rms}, {"mean_log10", r.mean_log10},
          {"delta1", r.delta1}, {"delta2", r.delta2}, {"delta3", r.delta3},
          {"n_pixels", r.n_pixels}};
}

json to_json(const OptimConfig& c) {
  return {{"max_iterations", c.max_iterations}, {"init_depth", c.init_depth},
          {"init_perturbation", c.init_perturbation}, {"seed", c.seed},
          {"optimize_pose", c.optimize_pose}, {"step_depth", c.step_depth},
          {"step_pose", c.step_pose}, {"armijo_c", c.armijo_c},
          {"backtrack_factor", c.backtrack_factor}, {"max_backtracks", c.max_backtracks}};
}

OptimConfig optim_config_from_json(const json& j) {
  OptimConfig c;
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  c.init_depth = j.value("init_depth", c.init_depth);
  c.init_perturbation = j.value("init_perturbation", c.init_perturbation);
  c.seed = j.value("seed", c.seed);
  c.optimize_pose = j.value("optimize_pose", c.optimize_pose);
  c.step_depth = j.value("step_depth", c.step_depth);
  c.step_pose = j.value("step_pose", c.step_pose);
  c.armijo_c = j.value("armijo_c", c.armijo_c);
  c.backtrack_factor = j.value("backtrack_factor", c.backtrack_factor);
  c.max_backtracks = j.value("max_backtracks", c.max_backtracks);
  return c;
}

namespace {

const char* pattern_name(AlbedoPattern p) {
  switch (p) {
    case AlbedoPattern::Flat: return "flat";
    case AlbedoPattern::Checker: return "checker";
    case AlbedoPattern::ValueNoise: return "noise";
  }
  return "flat";
}

AlbedoPattern pattern_from_name(const std::string& s) {
  if (s == "flat") return AlbedoPattern::Flat;
  if (s == "checker") return AlbedoPattern::Checker;
  if (s == "noise") return AlbedoPattern::ValueNoise;
  throw std::invalid_argument("unknown albedo pattern: " + s);
}

json vec3_json(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }
Eigen::Vector3d vec3_from(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

}  // namespace

json to_json(const SceneSpec& s) {
  json patches = json::array();
  for (const auto& p : s.patches)
    patches.push_back({{"origin", vec3_json(p.origin)}, {"edge_u", vec3_json(p.edge_u)},
                       {"edge_v", vec3_json(p.edge_v)}, {"pattern", pattern_name(p.pattern)},
                       {"base", p.base}, {"amplitude", p.amplitude}, {"cell", p.cell},
                       {"label", p.label}});
  return {{"intrinsics", to_json(s.intrinsics)}, {"pose", to_json(s.pose)},
          {"patches", patches}, {"noise_sigma", s.noise_sigma}, {"seed", s.seed}};
}

SceneSpec scene_spec_from_json(const json& j) {
  SceneSpec s;
  s.intrinsics = intrinsics_from_json(j.at("intrinsics"));
  s.pose = pose_from_json(j.at("pose"));
  s.noise_sigma = j.value("noise_sigma", 0.0);
  s.seed = j.value("seed", 1u);
  for (const auto& pj : j.at("patches")) {
    ScenePatch p;
    p.origin = vec3_from(pj.at("origin"));
    p.edge_u = vec3_from(pj.at("edge_u"));
    p.edge_v = vec3_from(pj.at("edge_v"));
    p.pattern = pattern_from_name(pj.value("pattern", "flat"));
    p.base = pj.value("base", 0.5);
    p.amplitude = pj.value("amplitude", 0.3);
    p.cell = pj.value("cell", 0.1);
    p.label = pj.value("label", 1);
    s.patches.push_back(p);
  }
  s.validate();
  return s;
}

json load_json(const std::string& path) {
  auto f = open_in(path);
  return json::parse(f);
}

void save_json(const std::string& path, const json& j) {
  auto f = open_out(path);
  f << j.dump(2) << "\n";
}

std::string config_hash(const json& j) {
  const std::string s = j.dump();  // nlohmann keeps object keys sorted
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json provenance_record(const std::string& command, const json& config, std::uint32_t seed) {
  return {{"command", command}, {"config_hash", config_hash(config)}, {"seed", seed},
          {"version", "0.1.0"}};
}

void write_scene_bundle(const std::string& dir, const SceneSpec& spec, const RenderResult& scene) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path base(dir);
  write_pnm((base / "target.pgm").string(), scene.target);
  write_pnm((base / "source.pgm").string(), scene.source);
  write_pfm((base / "depth_gt.pfm").string(), [&] {
    ImagePlane d(scene.depth.width, scene.depth.height, 1);
    for (size_t i = 0; i < scene.depth.size(); ++i) d.data[i] = scene.depth.values[i];
    return d;
  }());
  write_flo((base / "flow_gt.flo").string(), scene.flow_gt);

  auto write_mask = [&](const std::string& name, const std::vector<std::uint8_t>& m) {
    ImagePlane img(scene.depth.width, scene.depth.height, 1);
    for (size_t i = 0; i < m.size(); ++i) img.data[i] = m[i] ? 1.0 : 0.0;
    write_pnm((base / name).string(), img);
  };
  write_mask("occluded.pgm", scene.occluded);
  write_mask("visible.pgm", scene.visible);
  write_mask("depth_valid.pgm", scene.depth.valid);

  ImagePlane seg(scene.depth.width, scene.depth.height, 1);
  for (size_t i = 0; i < scene.segments.size(); ++i) seg.data[i] = scene.segments[i] / 255.0;
  write_pnm((base / "segments.pgm").string(), seg);

  json manifest = {{"spec", to_json(spec)},
                   {"files",
                    {{"target", "target.pgm"}, {"source", "source.pgm"},
                     {"depth_gt", "depth_gt.pfm"}, {"flow_gt", "flow_gt.flo"},
                     {"occluded", "occluded.pgm"}, {"visible", "visible.pgm"},
                     {"depth_valid", "depth_valid.pgm"}, {"segments", "segments.pgm"}}},
                   {"provenance", provenance_record("synth", to_json(spec), spec.seed)}};
  save_json((base / "manifest.json").string(), manifest);
}

SceneBundle read_scene_bundle(const std::string& manifest_path) {
  const json manifest = load_json(manifest_path);
  SceneBundle b;
  b.spec = scene_spec_from_json(manifest.at("spec"));
  // re-render from the embedded spec: the manifest is the source of truth
  b.scene = render(b.spec);
  return b;
}

}  // namespace depthflow
