#include "mvbody/serialize.hpp"

#include <fstream>
#include <sstream>

namespace mvb {

namespace {

nlohmann::json matrix_rows(const MatX& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatX matrix_from_rows(const nlohmann::json& j, Eigen::Index cols,
                      const char* what) {
  require_data(j.is_array(), std::string("expected array of rows for ") + what);
  MatX m(static_cast<Eigen::Index>(j.size()), cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    require_data(row.is_array() && static_cast<Eigen::Index>(row.size()) == cols,
                 std::string("bad row width for ") + what);
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace

nlohmann::json to_json(const Points3& m) { return matrix_rows(m); }
nlohmann::json to_json(const Points2& m) { return matrix_rows(m); }

Points3 points3_from_json(const nlohmann::json& j, const char* what) {
  return matrix_from_rows(j, 3, what);
}
Points2 points2_from_json(const nlohmann::json& j, const char* what) {
  return matrix_from_rows(j, 2, what);
}

nlohmann::json to_json(const BodyParams& p) {
  nlohmann::json j;
  j["pose"] = matrix_rows(p.pose);
  nlohmann::json shape = nlohmann::json::array();
  for (Eigen::Index i = 0; i < p.shape.size(); ++i) shape.push_back(p.shape[i]);
  j["shape"] = std::move(shape);
  return j;
}

BodyParams body_params_from_json(const nlohmann::json& j) {
  BodyParams p;
  p.pose = matrix_from_rows(j.at("pose"), 3, "body pose");
  const auto shape = j.at("shape").get<std::vector<double>>();
  p.shape = Eigen::Map<const VecX>(shape.data(),
                                   static_cast<Eigen::Index>(shape.size()));
  return p;
}

nlohmann::json to_json(const CameraParams& c) {
  nlohmann::json j;
  j["scale"] = c.scale;
  j["rotation"] = {c.rotation.x(), c.rotation.y(), c.rotation.z()};
  j["translation"] = {c.translation.x(), c.translation.y()};
  return j;
}

CameraParams camera_params_from_json(const nlohmann::json& j) {
  CameraParams c;
  c.scale = j.at("scale").get<double>();
  const auto r = j.at("rotation").get<std::vector<double>>();
  require_data(r.size() == 3, "camera rotation must have 3 entries");
  c.rotation = Vec3(r[0], r[1], r[2]);
  const auto t = j.at("translation").get<std::vector<double>>();
  require_data(t.size() == 2, "camera translation must have 2 entries");
  c.translation = Vec2(t[0], t[1]);
  return c;
}

nlohmann::json to_json(const ViewFeature& v) {
  nlohmann::json j;
  j["view_id"] = v.view_id;
  j["joints2d"] = matrix_rows(v.joints2d);
  j["visibility"] = v.visibility;
  if (v.joints3d) {
    j["joints3d"] = matrix_rows(*v.joints3d);
    j["joints3d_mask"] = v.joints3d_mask;
  }
  return j;
}

ViewFeature view_feature_from_json(const nlohmann::json& j) {
  ViewFeature v;
  v.view_id = j.at("view_id").get<int>();
  v.joints2d = points2_from_json(j.at("joints2d"), "joints2d");
  v.visibility = j.at("visibility").get<std::vector<bool>>();
  require_data(static_cast<Eigen::Index>(v.visibility.size()) == v.joints2d.rows(),
               "visibility length mismatch");
  if (j.contains("joints3d")) {
    v.joints3d = points3_from_json(j.at("joints3d"), "joints3d");
    v.joints3d_mask = j.at("joints3d_mask").get<std::vector<bool>>();
    require_data(static_cast<Eigen::Index>(v.joints3d_mask.size()) ==
                     v.joints3d->rows(),
                 "joints3d_mask length mismatch");
  }
  return v;
}

nlohmann::json to_json(const SynthConfig& c) {
  nlohmann::json j;
  j["n_shapes"] = c.n_shapes;
  j["poses_per_shape"] = c.poses_per_shape;
  j["n_views"] = c.n_views;
  j["noise_sigma_px"] = c.noise_sigma_px;
  j["occlusion_rate"] = c.occlusion_rate;
  j["min_visible_per_view"] = c.min_visible_per_view;
  j["max_pose_angle_rad"] = c.max_pose_angle_rad;
  if (c.pose_file) j["pose_file"] = c.pose_file->string();
  j["epsilon_margin_m"] = c.epsilon_margin_m;
  j["seed"] = c.seed;
  j["split_fraction"] = c.split_fraction;
  j["base_scale_px_per_m"] = c.base_scale_px_per_m;
  j["scale_jitter_lo"] = c.scale_jitter_lo;
  j["scale_jitter_hi"] = c.scale_jitter_hi;
  j["translation_jitter_px"] = c.translation_jitter_px;
  j["export_meshes"] = c.export_meshes;
  return j;
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  c.n_shapes = j.value("n_shapes", c.n_shapes);
  c.poses_per_shape = j.value("poses_per_shape", c.poses_per_shape);
  c.n_views = j.value("n_views", c.n_views);
  c.noise_sigma_px = j.value("noise_sigma_px", c.noise_sigma_px);
  c.occlusion_rate = j.value("occlusion_rate", c.occlusion_rate);
  c.min_visible_per_view = j.value("min_visible_per_view", c.min_visible_per_view);
  c.max_pose_angle_rad = j.value("max_pose_angle_rad", c.max_pose_angle_rad);
  if (j.contains("pose_file"))
    c.pose_file = std::filesystem::path(j.at("pose_file").get<std::string>());
  c.epsilon_margin_m = j.value("epsilon_margin_m", c.epsilon_margin_m);
  c.seed = j.value("seed", c.seed);
  c.split_fraction = j.value("split_fraction", c.split_fraction);
  c.base_scale_px_per_m = j.value("base_scale_px_per_m", c.base_scale_px_per_m);
  c.scale_jitter_lo = j.value("scale_jitter_lo", c.scale_jitter_lo);
  c.scale_jitter_hi = j.value("scale_jitter_hi", c.scale_jitter_hi);
  c.translation_jitter_px =
      j.value("translation_jitter_px", c.translation_jitter_px);
  c.export_meshes = j.value("export_meshes", c.export_meshes);
  return c;
}

nlohmann::json to_json(const FitConfig& c) {
  nlohmann::json j;
  j["stages"] = c.stages;
  j["lambda2d"] = c.lambda2d;
  j["lambda3d"] = c.lambda3d;
  j["lambda_smpl"] = c.lambda_smpl;
  j["corrector"] =
      c.corrector == CorrectorKind::gauss_newton ? "gauss_newton" : "gradient";
  j["damping"] = c.damping;
  j["huber_delta_px"] = c.huber_delta_px;
  j["max_inner_iters"] = c.max_inner_iters;
  j["start_view_random"] = c.start_view.random;
  j["start_view_index"] = c.start_view.fixed_index;
  j["start_view_seed"] = c.start_view.seed;
  j["convergence_tol"] = c.convergence_tol;
  j["gradient_lr"] = c.gradient_lr;
  j["pad_to_views"] = c.pad_to_views;
  return j;
}

FitConfig fit_config_from_json(const nlohmann::json& j) {
  FitConfig c;
  c.stages = j.value("stages", c.stages);
  c.lambda2d = j.value("lambda2d", c.lambda2d);
  c.lambda3d = j.value("lambda3d", c.lambda3d);
  c.lambda_smpl = j.value("lambda_smpl", c.lambda_smpl);
  if (j.contains("corrector")) {
    const auto kind = j.at("corrector").get<std::string>();
    if (kind == "gauss_newton") {
      c.corrector = CorrectorKind::gauss_newton;
    } else if (kind == "gradient") {
      c.corrector = CorrectorKind::gradient;
    } else {
      throw config_error("fit config: unknown corrector '" + kind + "'");
    }
  }
  c.damping = j.value("damping", c.damping);
  c.huber_delta_px = j.value("huber_delta_px", c.huber_delta_px);
  c.max_inner_iters = j.value("max_inner_iters", c.max_inner_iters);
  c.start_view.random = j.value("start_view_random", c.start_view.random);
  c.start_view.fixed_index = j.value("start_view_index", c.start_view.fixed_index);
  c.start_view.seed = j.value("start_view_seed", c.start_view.seed);
  c.convergence_tol = j.value("convergence_tol", c.convergence_tol);
  c.gradient_lr = j.value("gradient_lr", c.gradient_lr);
  c.pad_to_views = j.value("pad_to_views", c.pad_to_views);
  return c;
}

nlohmann::json to_json(const FitReport& r) {
  nlohmann::json j;
  j["instance_id"] = r.instance_id;
  j["body"] = to_json(r.state.body);
  nlohmann::json cams = nlohmann::json::array();
  for (const auto& c : r.state.cameras) cams.push_back(to_json(c));
  j["cameras"] = std::move(cams);
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& b : r.state.stage_trace) {
    trace.push_back({{"stage", b.stage},
                     {"view", b.view},
                     {"loss_before", b.loss_before},
                     {"loss_after", b.loss_after},
                     {"d_body_norm", b.d_body_norm},
                     {"d_camera_norm", b.d_camera_norm},
                     {"damping_capped", b.damping_capped}});
  }
  j["stage_trace"] = std::move(trace);
  j["flags"] = r.state.flags;
  j["per_view_final_losses"] = r.per_view_final_losses;
  j["mean_final_loss"] = r.mean_final_loss;
  j["converged"] = r.converged;
  j["wall_time_s"] = r.wall_time_s;
  return j;
}

FitReport fit_report_from_json(const nlohmann::json& j) {
  FitReport r;
  r.instance_id = j.at("instance_id").get<int>();
  r.state.body = body_params_from_json(j.at("body"));
  for (const auto& c : j.at("cameras"))
    r.state.cameras.push_back(camera_params_from_json(c));
  for (const auto& b : j.at("stage_trace")) {
    r.state.stage_trace.push_back(
        BlockTrace{b.at("stage").get<int>(), b.at("view").get<int>(),
                   b.at("loss_before").get<double>(),
                   b.at("loss_after").get<double>(),
                   b.at("d_body_norm").get<double>(),
                   b.at("d_camera_norm").get<double>(),
                   b.at("damping_capped").get<bool>()});
  }
  r.state.flags = j.value("flags", std::vector<std::string>{});
  r.per_view_final_losses =
      j.at("per_view_final_losses").get<std::vector<double>>();
  r.mean_final_loss = j.at("mean_final_loss").get<double>();
  r.converged = j.at("converged").get<bool>();
  r.wall_time_s = j.at("wall_time_s").get<double>();
  return r;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["mpjpe_mm"] = r.mpjpe_mm;
  j["pa_mpjpe_mm"] = r.pa_mpjpe_mm;
  j["pck_at_150mm"] = r.pck_at_150mm;
  j["auc_0_150"] = r.auc_0_150;
  if (r.hausdorff_mm) j["hausdorff_mm"] = *r.hausdorff_mm;
  if (r.measurements) {
    nlohmann::json m;
    const auto vals = r.measurements->as_array();
    for (int i = 0; i < 6; ++i) m[TapeMeasurements::names()[i]] = vals[i];
    j["measurements_m"] = std::move(m);
  }
  if (r.measurement_rel_errors) {
    nlohmann::json m;
    for (int i = 0; i < 6; ++i)
      m[TapeMeasurements::names()[i]] = r.measurement_rel_errors->percent[i];
    m["mean"] = r.measurement_rel_errors->mean_percent;
    j["measurement_rel_errors_pct"] = std::move(m);
  }
  return j;
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::string& content) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    require_data(os.good(), "cannot open for writing: " + tmp);
    os << content;
    require_data(os.good(), "write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require_data(is.good(), "cannot open: " + path.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void save_mesh_obj(const Mesh& mesh, const std::filesystem::path& path) {
  std::ostringstream os;
  os.precision(17);
  for (Eigen::Index v = 0; v < mesh.vertices.rows(); ++v)
    os << "v " << mesh.vertices(v, 0) << ' ' << mesh.vertices(v, 1) << ' '
       << mesh.vertices(v, 2) << '\n';
  for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f)
    os << "f " << mesh.faces(f, 0) + 1 << ' ' << mesh.faces(f, 1) + 1 << ' '
       << mesh.faces(f, 2) + 1 << '\n';
  write_file_atomic(path, os.str());
}

Mesh load_mesh_obj(const std::filesystem::path& path) {
  std::ifstream is(path);
  require_data(is.good(), "mesh file: cannot open: " + path.string());
  std::vector<Vec3> verts;
  std::vector<std::array<std::uint32_t, 3>> faces;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Vec3 v;
      ls >> v.x() >> v.y() >> v.z();
      require_data(!ls.fail(), "mesh file: malformed vertex line");
      verts.push_back(v);
    } else if (tag == "f") {
      std::array<std::uint32_t, 3> f{};
      ls >> f[0] >> f[1] >> f[2];
      require_data(!ls.fail(), "mesh file: malformed face line");
      for (auto& idx : f) {
        require_data(idx >= 1, "mesh file: face index out of range");
        idx -= 1;
      }
      faces.push_back(f);
    }
  }
  for (const auto& f : faces)
    for (auto idx : f)
      require_data(idx < verts.size(), "mesh file: face index out of range");
  Mesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i)
    mesh.vertices.row(static_cast<Eigen::Index>(i)) = verts[i].transpose();
  mesh.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (std::size_t i = 0; i < faces.size(); ++i)
    for (int e = 0; e < 3; ++e)
      mesh.faces(static_cast<Eigen::Index>(i), e) = faces[i][e];
  return mesh;
}

}  // namespace mvb
