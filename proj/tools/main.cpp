#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include "depthflow/eval.hpp"
#include "depthflow/gradcheck.hpp"
#include "depthflow/io.hpp"
#include "depthflow/optimizer.hpp"
#include "depthflow/synth.hpp"

using namespace depthflow;
using nlohmann::json;

namespace {

std::vector<int> parse_channels(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

std::uint32_t env_seed(std::uint32_t fallback) {
  if (const char* s = std::getenv("DEPTHFLOW_SEED")) return static_cast<std::uint32_t>(std::stoul(s));
  return fallback;
}

struct Pipeline {
  SceneSpec spec;
  RenderResult scene;
  FeaturePyramid target_pyramid, source_pyramid;
  PatchSet patches;
};

Pipeline build_pipeline(const SceneSpec& spec, const std::string& channels_csv, int start_level,
                        int max_keypoints) {
  Pipeline p;
  p.spec = spec;
  p.scene = render(spec);
  FeatureBankConfig cfg;
  cfg.channels_per_level = parse_channels(channels_csv);
  cfg.start_level = start_level;
  p.target_pyramid = build_feature_pyramid(p.scene.target, cfg);
  p.source_pyramid = build_feature_pyramid(p.scene.source, cfg);
  p.patches = extract_keypoints(p.scene.target, max_keypoints);
  return p;
}

int run_synth(const std::string& spec_path, const std::string& out_dir) {
  SceneSpec spec = scene_spec_from_json(load_json(spec_path));
  spec.seed = env_seed(spec.seed);
  write_scene_bundle(out_dir, spec, render(spec));
  std::cout << "wrote scene bundle to " << out_dir << "\n";
  return 0;
}

int run_loss_eval(const std::string& manifest_path, const std::string& loss_config_path,
                  const std::string& depth_path, const std::string& out_path,
                  const std::string& channels_csv, int start_level) {
  const SceneBundle bundle = read_scene_bundle(manifest_path);
  LossConfig lc;
  json lc_json = to_json(lc);
  if (!loss_config_path.empty()) {
    lc_json = load_json(loss_config_path);
    lc = loss_config_from_json(lc_json);
  }
  const Pipeline p = build_pipeline(bundle.spec, channels_csv, start_level, 400);

  DepthMap depth = p.scene.depth;
  if (!depth_path.empty()) {
    const ImagePlane d = read_pfm(depth_path);
    if (d.width != depth.width || d.height != depth.height)
      throw std::runtime_error("loss-eval: depth dimensions do not match the scene");
    for (size_t i = 0; i < depth.size(); ++i) {
      depth.values[i] = d.data[i];
      depth.valid[i] = d.data[i] > 0;
    }
  }
  const FlowField rigid = rigid_flow(depth, p.spec.pose, p.spec.intrinsics);

  DepthLossInputs in;
  in.target = &p.scene.target;
  in.source = &p.scene.source;
  in.target_pyramid = &p.target_pyramid;
  in.source_pyramid = &p.source_pyramid;
  in.rigid = &rigid;
  in.supervision = &p.scene.flow_gt;
  in.patches = &p.patches;
  in.segments = &p.scene.segments;
  in.depth = &depth;
  in.intrinsics = &p.spec.intrinsics;
  in.valid_mask = &p.scene.visible;

  const DepthLossResult r = total_depth_loss(in, lc, false);
  const FlowLossResult fr =
      total_flow_loss(p.scene.target, p.scene.source, p.scene.flow_gt, p.patches, lc, false);

  json report = {{"depth_objective", to_json(r.breakdown)},
                 {"flow_objective", to_json(fr.breakdown)},
                 {"provenance", provenance_record("loss-eval", lc_json, bundle.spec.seed)}};
  std::cout << report.dump(2) << "\n";
  if (!out_path.empty()) save_json(out_path, report);
  return 0;
}

int run_optimize(const std::string& scene_path, const std::string& loss_config_path,
                 const std::string& opt_config_path, const std::string& out_path,
                 const std::string& trace_path, const std::string& channels_csv, int start_level,
                 bool no_supervision) {
  SceneSpec spec = scene_spec_from_json(load_json(scene_path));
  LossConfig lc;
  json lc_json = to_json(lc);
  if (!loss_config_path.empty()) {
    lc_json = load_json(loss_config_path);
    lc = loss_config_from_json(lc_json);
  }
  OptimConfig oc;
  json oc_json = to_json(oc);
  if (!opt_config_path.empty()) {
    oc_json = load_json(opt_config_path);
    oc = optim_config_from_json(oc_json);
  }
  oc.seed = env_seed(oc.seed);

  const Pipeline p = build_pipeline(spec, channels_csv, start_level, 400);

  OptimProblem problem;
  problem.target = &p.scene.target;
  problem.target_pyramid = &p.target_pyramid;
  problem.patches = &p.patches;
  problem.segments = &p.scene.segments;
  problem.intrinsics = spec.intrinsics;
  SourceView sv;
  sv.image = &p.scene.source;
  sv.pyramid = &p.source_pyramid;
  sv.pose = spec.pose;
  sv.supervision = no_supervision ? nullptr : &p.scene.flow_gt;
  sv.valid_mask = &p.scene.visible;
  problem.sources.push_back(sv);

  const OptimResult result = optimize(problem, lc, oc);

  ImagePlane depth_img(result.depth.width, result.depth.height, 1);
  for (size_t i = 0; i < result.depth.size(); ++i) depth_img.data[i] = result.depth.values[i];
  write_pfm(out_path, depth_img);

  const DepthMap scaled = median_scale(result.depth, p.scene.depth, p.scene.depth.valid);
  const EvalReport metrics = compute_metrics(scaled, p.scene.depth, p.scene.depth.valid);

  json trace = json::array();
  for (const auto& e : result.trace)
    trace.push_back({{"iteration", e.iteration}, {"step", e.step}, {"loss", to_json(e.breakdown)}});
  json combined_cfg = {{"loss", lc_json}, {"optimizer", oc_json}, {"scene", to_json(spec)}};
  json out = {{"trace", trace},
              {"halted_early", result.halted_early},
              {"halt_reason", result.halt_reason},
              {"final_pose", to_json(result.poses[0])},
              {"metrics_vs_gt", to_json(metrics)},
              {"provenance", provenance_record("optimize", combined_cfg, oc.seed)}};
  if (!trace_path.empty()) save_json(trace_path, out);
  std::cout << "final loss " << result.trace.back().breakdown.total_depth << ", abs_rel "
            << metrics.abs_rel << " after " << result.trace.back().iteration << " iterations\n";
  return 0;
}

int run_eval_depth(const std::string& pred_path, const std::string& gt_path,
                   const std::string& mask_path, const std::string& out_path, bool use_median_scale,
                   double min_depth, double max_depth) {
  const ImagePlane pred_img = read_pfm(pred_path);
  const ImagePlane gt_img = read_pfm(gt_path);
  if (pred_img.width != gt_img.width || pred_img.height != gt_img.height)
    throw std::runtime_error("eval-depth: prediction and ground truth dimensions differ");

  DepthMap pred(pred_img.width, pred_img.height), gt(gt_img.width, gt_img.height);
  for (size_t i = 0; i < pred.size(); ++i) {
    pred.values[i] = pred_img.data[i];
    gt.values[i] = gt_img.data[i];
  }
  std::vector<std::uint8_t> mask(pred.size(), 1);
  if (!mask_path.empty()) {
    const ImagePlane m = read_pnm(mask_path);
    if (m.width != pred_img.width || m.height != pred_img.height)
      throw std::runtime_error("eval-depth: mask dimensions differ");
    for (size_t i = 0; i < mask.size(); ++i) mask[i] = m.data[i] > 0.5 ? 1 : 0;
  }
  for (size_t i = 0; i < mask.size(); ++i)
    if (!(pred.values[i] > 0) || !(gt.values[i] > 0)) mask[i] = 0;

  if (use_median_scale) pred = median_scale(pred, gt, mask);
  const EvalReport r = compute_metrics(pred, gt, mask, min_depth, max_depth);
  json report = to_json(r);
  report["provenance"] = provenance_record(
      "eval-depth", {{"median_scale", use_median_scale}, {"min_depth", min_depth},
                     {"max_depth", max_depth}}, 0);
  std::cout << report.dump(2) << "\n";
  if (!out_path.empty()) save_json(out_path, report);
  return 0;
}

int run_flow_check(const std::string& scene_path, const std::string& flow_path, double tol) {
  const SceneSpec spec = scene_spec_from_json(load_json(scene_path));
  const RenderResult scene = render(spec);
  const FlowField reference = flow_path.empty() ? scene.flow_gt : read_flo(flow_path);
  const FlowField rigid = rigid_flow(scene.depth, spec.pose, spec.intrinsics);
  if (reference.width != rigid.width || reference.height != rigid.height)
    throw std::runtime_error("flow-check: flow dimensions do not match the scene");

  double max_err = 0, sum_err = 0;
  size_t n = 0;
  for (size_t i = 0; i < rigid.size(); ++i) {
    if (!rigid.valid[i] || !reference.valid[i]) continue;
    const double e = std::max(std::abs(rigid.u[i] - reference.u[i]),
                              std::abs(rigid.v[i] - reference.v[i]));
    max_err = std::max(max_err, e);
    sum_err += e;
    ++n;
  }
  json report = {{"max_err_px", max_err}, {"mean_err_px", n ? sum_err / n : 0.0},
                 {"n_pixels", n}, {"tolerance", tol}, {"passed", n > 0 && max_err < tol},
                 {"provenance", provenance_record("flow-check", to_json(spec), spec.seed)}};
  std::cout << report.dump(2) << "\n";
  return report["passed"].get<bool>() ? 0 : 1;
}

int run_gradcheck(const std::string& term, int states, int width, int height, std::uint32_t seed) {
  const auto reports = run_gradient_suite(width, height, states, env_seed(seed));
  bool all_passed = true;
  bool matched = false;
  for (const auto& r : reports) {
    if (term != "all" && term != r.term) continue;
    matched = true;
    std::cout << (r.passed ? "PASS" : "FAIL") << "  " << r.term << "  max_rel_err=" << r.max_rel_err
              << " (tol " << r.tolerance << ", " << r.states << " states)\n";
    all_passed &= r.passed;
  }
  if (!matched) {
    std::cerr << "unknown term: " << term << "\n";
    return 2;
  }
  return all_passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"depth and optical-flow supervision toolkit"};
  app.require_subcommand(1);

  std::string spec_path, out_dir;
  auto* synth_cmd = app.add_subcommand("synth", "render a synthetic scene bundle");
  synth_cmd->add_option("--spec", spec_path, "scene spec JSON")->required();
  synth_cmd->add_option("--out", out_dir, "output directory")->required();

  std::string manifest_path, loss_config_path, depth_path, out_path;
  std::string channels_csv = "16,32,64,96";
  int start_level = 1;
  auto* loss_cmd = app.add_subcommand("loss-eval", "evaluate the loss breakdown on a scene bundle");
  loss_cmd->add_option("--manifest", manifest_path, "scene bundle manifest.json")->required();
  loss_cmd->add_option("--loss-config", loss_config_path, "loss config JSON");
  loss_cmd->add_option("--depth", depth_path, "depth PFM overriding the ground truth");
  loss_cmd->add_option("--out", out_path, "write the breakdown JSON here");
  loss_cmd->add_option("--feature-channels", channels_csv, "per-level channel counts");
  loss_cmd->add_option("--feature-start-level", start_level, "pyramid root level");

  std::string scene_path, opt_config_path, trace_path;
  bool no_supervision = false;
  auto* opt_cmd = app.add_subcommand("optimize", "gradient-descent depth recovery on a scene");
  opt_cmd->add_option("--scene", scene_path, "scene spec JSON")->required();
  opt_cmd->add_option("--loss-config", loss_config_path, "loss config JSON");
  opt_cmd->add_option("--opt-config", opt_config_path, "optimizer config JSON");
  opt_cmd->add_option("--out", out_path, "output depth PFM")->required();
  opt_cmd->add_option("--trace", trace_path, "per-iteration trace JSON");
  opt_cmd->add_option("--feature-channels", channels_csv, "per-level channel counts");
  opt_cmd->add_option("--feature-start-level", start_level, "pyramid root level");
  opt_cmd->add_flag("--no-supervision", no_supervision, "disable the flow consistency supervision");

  std::string pred_path, gt_path, mask_path;
  bool use_median_scale = false;
  double min_depth = 0, max_depth = 0, tol = 1e-6;
  auto* eval_cmd = app.add_subcommand("eval-depth", "depth metrics against ground truth");
  eval_cmd->add_option("--pred", pred_path, "predicted depth PFM")->required();
  eval_cmd->add_option("--gt", gt_path, "ground-truth depth PFM")->required();
  eval_cmd->add_option("--mask", mask_path, "valid-pixel mask PGM");
  eval_cmd->add_option("--out", out_path, "write the report JSON here");
  eval_cmd->add_flag("--median-scale", use_median_scale, "median-scale the prediction first");
  eval_cmd->add_option("--min-depth", min_depth, "ignore ground truth below this");
  eval_cmd->add_option("--max-depth", max_depth, "ignore ground truth above this");

  std::string flow_path;
  auto* flow_cmd = app.add_subcommand("flow-check", "rigid flow vs analytic/external flow");
  flow_cmd->add_option("--scene", scene_path, "scene spec JSON")->required();
  flow_cmd->add_option("--flow", flow_path, "reference .flo (default: analytic)");
  flow_cmd->add_option("--tol", tol, "max error tolerance in pixels");

  std::string term = "all";
  int states = 100, gw = 32, gh = 48;
  std::uint32_t seed = 1;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  grad_cmd->add_option("--term", term, "all|photometric|smoothness|flow_consistency|"
                                       "feature_synthesis|planar|objective");
  grad_cmd->add_option("--states", states, "random states per term");
  grad_cmd->add_option("--width", gw, "test image width");
  grad_cmd->add_option("--height", gh, "test image height");
  grad_cmd->add_option("--seed", seed, "RNG seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth_cmd) return run_synth(spec_path, out_dir);
    if (*loss_cmd)
      return run_loss_eval(manifest_path, loss_config_path, depth_path, out_path, channels_csv,
                           start_level);
    if (*opt_cmd)
      return run_optimize(scene_path, loss_config_path, opt_config_path, out_path, trace_path,
                          channels_csv, start_level, no_supervision);
    if (*eval_cmd)
      return run_eval_depth(pred_path, gt_path, mask_path, out_path, use_median_scale, min_depth,
                            max_depth);
    if (*flow_cmd) return run_flow_check(scene_path, flow_path, tol);
    if (*grad_cmd) return run_gradcheck(term, states, gw, gh, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
