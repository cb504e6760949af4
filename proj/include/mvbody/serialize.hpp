#pragma once

#include "mvbody/body_model.hpp"
#include "mvbody/camera.hpp"
#include "mvbody/fitting.hpp"
#include "mvbody/metrics.hpp"
#include "mvbody/observation.hpp"
#include "mvbody/synth.hpp"

#include <json.hpp>

#include <filesystem>

namespace mvb {

// JSON bindings for the structured-text file formats (datasets, fit
// reports, run configs). Numbers round-trip exactly.

nlohmann::json to_json(const Points3& m);
nlohmann::json to_json(const Points2& m);
Points3 points3_from_json(const nlohmann::json& j, const char* what);
Points2 points2_from_json(const nlohmann::json& j, const char* what);

nlohmann::json to_json(const BodyParams& p);
BodyParams body_params_from_json(const nlohmann::json& j);

nlohmann::json to_json(const CameraParams& c);
CameraParams camera_params_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ViewFeature& v);
ViewFeature view_feature_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const FitConfig& c);
FitConfig fit_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const FitReport& r);
FitReport fit_report_from_json(const nlohmann::json& j);

nlohmann::json to_json(const MetricsReport& r);

/// Writes text to path via a temp file + rename, so readers never observe
/// partial content.
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& content);

std::string read_file(const std::filesystem::path& path);

/// Mesh export/import as OBJ-style text ("v x y z" / "f a b c" lines).
void save_mesh_obj(const Mesh& mesh, const std::filesystem::path& path);
Mesh load_mesh_obj(const std::filesystem::path& path);

}  // namespace mvb
