#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "depthflow/eval.hpp"
#include "depthflow/geometry.hpp"
#include "depthflow/image.hpp"
#include "depthflow/losses.hpp"
#include "depthflow/optimizer.hpp"
#include "depthflow/synth.hpp"

namespace depthflow {

/// Thrown on malformed files; carries the byte offset of the failure.
struct ParseError : std::runtime_error {
  std::size_t offset;
  ParseError(const std::string& what, std::size_t off);
};

// Little-endian PFM (scale -1). 1-channel "Pf" or 3-channel "PF".
void write_pfm(const std::string& path, const ImagePlane& img);
ImagePlane read_pfm(const std::string& path);

// Binary 8-bit PGM (P5) / PPM (P6); intensities quantized to [0,255].
void write_pnm(const std::string& path, const ImagePlane& img);
ImagePlane read_pnm(const std::string& path);

// Middlebury .flo, magic 202021.25.
void write_flo(const std::string& path, const FlowField& flow);
FlowField read_flo(const std::string& path);

// JSON forms.
nlohmann::json to_json(const CameraIntrinsics& K);
CameraIntrinsics intrinsics_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PoseSE3& pose);  // {"axis_angle": [...], "t": [...]}
PoseSE3 pose_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LossConfig& c);
LossConfig loss_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LossBreakdown& b);
nlohmann::json to_json(const EvalReport& r);
nlohmann::json to_json(const OptimConfig& c);
OptimConfig optim_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SceneSpec& s);
SceneSpec scene_spec_from_json(const nlohmann::json& j);

nlohmann::json load_json(const std::string& path);
void save_json(const std::string& path, const nlohmann::json& j);

/// FNV-1a over the canonical (sorted-key) JSON dump; identifies configs in
/// provenance records.
std::string config_hash(const nlohmann::json& j);

/// Provenance block attached to every CLI output. Deterministic: no
/// timestamps.
nlohmann::json provenance_record(const std::string& command, const nlohmann::json& config,
                                 std::uint32_t seed);

/// Write a rendered scene as a file bundle (PGM images, PFM depth, .flo flow,
/// PGM masks) plus manifest.json; the manifest embeds the spec so the bundle
/// can be re-rendered bit-identically.
void write_scene_bundle(const std::string& dir, const SceneSpec& spec, const RenderResult& scene);

struct SceneBundle {
  SceneSpec spec;
  RenderResult scene;
};
SceneBundle read_scene_bundle(const std::string& manifest_path);

}  // namespace depthflow
