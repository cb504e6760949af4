#include "mvbody/body_model.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>

namespace mvb {

namespace {

constexpr char kMagic[5] = {'M', 'V', 'B', 'T', '1'};

void write_raw(std::ostream& os, const void* data, std::size_t bytes) {
  os.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
}

void read_raw(std::istream& is, void* data, std::size_t bytes,
              const char* what) {
  is.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
  require_data(static_cast<std::size_t>(is.gcount()) == bytes,
               std::string("template file: unexpected end of data in ") + what);
}

void write_u32(std::ostream& os, std::uint32_t v) { write_raw(os, &v, 4); }

std::uint32_t read_u32(std::istream& is, const char* what) {
  std::uint32_t v = 0;
  read_raw(is, &v, 4, what);
  return v;
}

// Matrices serialize row-major as 64-bit floats (file is little-endian;
// loading assumes a little-endian host).
void write_matrix(std::ostream& os, const MatX& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      write_raw(os, &v, 8);
    }
}

MatX read_matrix(std::istream& is, Eigen::Index rows, Eigen::Index cols,
                 const char* what) {
  MatX m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      double v = 0;
      read_raw(is, &v, 8, what);
      m(r, c) = v;
    }
  return m;
}

nlohmann::json matrix_to_json(const MatX& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatX matrix_from_json(const nlohmann::json& j, Eigen::Index rows,
                      Eigen::Index cols, const char* what) {
  require_data(j.is_array() && static_cast<Eigen::Index>(j.size()) == rows,
               std::string("template file: bad row count for ") + what);
  MatX m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    require_data(row.is_array() && static_cast<Eigen::Index>(row.size()) == cols,
                 std::string("template file: bad column count for ") + what);
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

void save_binary(const BodyTemplate& t, std::ostream& os) {
  write_raw(os, kMagic, 5);
  write_u32(os, static_cast<std::uint32_t>(t.vertex_count));
  write_u32(os, static_cast<std::uint32_t>(t.joint_count));
  write_u32(os, static_cast<std::uint32_t>(t.shape_dim));
  write_u32(os, static_cast<std::uint32_t>(t.faces.rows()));
  write_matrix(os, t.rest_vertices);
  write_matrix(os, t.shape_basis);
  write_matrix(os, t.pose_basis);
  write_matrix(os, t.skinning_weights);
  write_matrix(os, t.joint_regressor);
  for (int p : t.parent) {
    const std::int32_t v = p;
    write_raw(os, &v, 4);
  }
  for (Eigen::Index f = 0; f < t.faces.rows(); ++f)
    for (int e = 0; e < 3; ++e) write_u32(os, t.faces(f, e));
  for (int i = 0; i < kKeypointCount; ++i)
    write_u32(os, static_cast<std::uint32_t>(t.keypoint_map[i]));
  write_matrix(os, t.bone_capsule_radii);
  write_matrix(os, t.torso_axis);
  for (double f : t.section_fractions) write_raw(os, &f, 8);
}

BodyTemplate load_binary(std::istream& is) {
  BodyTemplate t;
  t.vertex_count = static_cast<int>(read_u32(is, "dims"));
  t.joint_count = static_cast<int>(read_u32(is, "dims"));
  t.shape_dim = static_cast<int>(read_u32(is, "dims"));
  const int F = static_cast<int>(read_u32(is, "dims"));
  require_data(t.vertex_count > 0 && t.joint_count > 0 && t.shape_dim >= 0 &&
                   F >= 0 && t.vertex_count < (1 << 24) && t.joint_count < 4096,
               "template file: implausible dimensions in header");
  const int V = t.vertex_count, K = t.joint_count, B = t.shape_dim;
  t.rest_vertices = read_matrix(is, V, 3, "rest_vertices");
  t.shape_basis = read_matrix(is, 3 * V, B, "shape_basis");
  t.pose_basis = read_matrix(is, 3 * V, 9 * (K - 1), "pose_basis");
  t.skinning_weights = read_matrix(is, V, K, "skinning_weights");
  t.joint_regressor = read_matrix(is, K, V, "joint_regressor");
  t.parent.resize(K);
  for (int k = 0; k < K; ++k) {
    std::int32_t v = 0;
    read_raw(is, &v, 4, "parent");
    t.parent[k] = v;
  }
  t.faces.resize(F, 3);
  for (int f = 0; f < F; ++f)
    for (int e = 0; e < 3; ++e) t.faces(f, e) = read_u32(is, "faces");
  for (int i = 0; i < kKeypointCount; ++i)
    t.keypoint_map[i] = static_cast<int>(read_u32(is, "keypoint_map"));
  t.bone_capsule_radii = read_matrix(is, K - 1, 1, "bone_capsule_radii");
  const MatX axis = read_matrix(is, 3, 1, "torso_axis");
  t.torso_axis = Vec3(axis(0, 0), axis(1, 0), axis(2, 0));
  for (double& f : t.section_fractions) read_raw(is, &f, 8, "section_fractions");
  return t;
}

void save_json(const BodyTemplate& t, std::ostream& os) {
  nlohmann::json j;
  j["format"] = "mvbt-json-1";
  j["vertex_count"] = t.vertex_count;
  j["joint_count"] = t.joint_count;
  j["shape_dim"] = t.shape_dim;
  j["rest_vertices"] = matrix_to_json(t.rest_vertices);
  j["shape_basis"] = matrix_to_json(t.shape_basis);
  j["pose_basis"] = matrix_to_json(t.pose_basis);
  j["skinning_weights"] = matrix_to_json(t.skinning_weights);
  j["joint_regressor"] = matrix_to_json(t.joint_regressor);
  j["parent"] = t.parent;
  nlohmann::json faces = nlohmann::json::array();
  for (Eigen::Index f = 0; f < t.faces.rows(); ++f)
    faces.push_back({t.faces(f, 0), t.faces(f, 1), t.faces(f, 2)});
  j["faces"] = std::move(faces);
  j["keypoint_map"] = t.keypoint_map;
  nlohmann::json radii = nlohmann::json::array();
  for (Eigen::Index b = 0; b < t.bone_capsule_radii.size(); ++b)
    radii.push_back(t.bone_capsule_radii[b]);
  j["bone_capsule_radii"] = std::move(radii);
  j["torso_axis"] = {t.torso_axis.x(), t.torso_axis.y(), t.torso_axis.z()};
  j["section_fractions"] = t.section_fractions;
  os << j.dump(1) << '\n';
}

BodyTemplate load_json(const nlohmann::json& j) {
  BodyTemplate t;
  try {
    t.vertex_count = j.at("vertex_count").get<int>();
    t.joint_count = j.at("joint_count").get<int>();
    t.shape_dim = j.at("shape_dim").get<int>();
    const int V = t.vertex_count, K = t.joint_count, B = t.shape_dim;
    require_data(V > 0 && K > 0 && B >= 0,
                 "template file: implausible dimensions");
    t.rest_vertices = matrix_from_json(j.at("rest_vertices"), V, 3, "rest_vertices");
    t.shape_basis = matrix_from_json(j.at("shape_basis"), 3 * V, B, "shape_basis");
    t.pose_basis =
        matrix_from_json(j.at("pose_basis"), 3 * V, 9 * (K - 1), "pose_basis");
    t.skinning_weights =
        matrix_from_json(j.at("skinning_weights"), V, K, "skinning_weights");
    t.joint_regressor =
        matrix_from_json(j.at("joint_regressor"), K, V, "joint_regressor");
    t.parent = j.at("parent").get<std::vector<int>>();
    const auto& faces = j.at("faces");
    t.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
    for (std::size_t f = 0; f < faces.size(); ++f)
      for (int e = 0; e < 3; ++e)
        t.faces(static_cast<Eigen::Index>(f), e) = faces[f][e].get<std::uint32_t>();
    const auto kp = j.at("keypoint_map").get<std::vector<int>>();
    require_data(kp.size() == kKeypointCount,
                 "template file: keypoint_map must have 14 entries");
    std::copy(kp.begin(), kp.end(), t.keypoint_map.begin());
    const auto radii = j.at("bone_capsule_radii").get<std::vector<double>>();
    t.bone_capsule_radii = Eigen::Map<const VecX>(radii.data(),
                                                  static_cast<Eigen::Index>(radii.size()));
    const auto axis = j.at("torso_axis").get<std::vector<double>>();
    require_data(axis.size() == 3, "template file: torso_axis must have 3 entries");
    t.torso_axis = Vec3(axis[0], axis[1], axis[2]);
    const auto fr = j.at("section_fractions").get<std::vector<double>>();
    require_data(fr.size() == 4,
                 "template file: section_fractions must have 4 entries");
    std::copy(fr.begin(), fr.end(), t.section_fractions.begin());
  } catch (const nlohmann::json::exception& e) {
    throw io_error(std::string("template file: ") + e.what());
  }
  return t;
}

}  // namespace

void save_template(const BodyTemplate& t, const std::filesystem::path& path,
                   TemplateFormat format) {
  t.validate();
  std::ofstream os(path, std::ios::binary);
  require_data(os.good(), "template file: cannot open for writing: " + path.string());
  if (format == TemplateFormat::binary)
    save_binary(t, os);
  else
    save_json(t, os);
  require_data(os.good(), "template file: write failed: " + path.string());
}

BodyTemplate load_template(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require_data(is.good(), "template file: cannot open: " + path.string());
  char magic[5] = {};
  is.read(magic, 5);
  BodyTemplate t;
  if (is.gcount() == 5 && std::memcmp(magic, kMagic, 5) == 0) {
    t = load_binary(is);
  } else {
    is.clear();
    is.seekg(0);
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw io_error("template file: not a MVBT1 container and not valid JSON: " +
                     std::string(e.what()));
    }
    t = load_json(j);
  }
  try {
    t.validate();
  } catch (const std::exception& e) {
    throw io_error("template file: invariant violation: " + std::string(e.what()));
  }
  return t;
}

}  // namespace mvb
