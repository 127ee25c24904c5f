#include "v2p/scene.hpp"

#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

#include "v2p/binio.hpp"

namespace v2p {

const ObjectSpec* SceneSpec::find_object(const std::string& name) const {
  for (const auto& o : objects)
    if (o.name == name) return &o;
  return nullptr;
}

double quat_yaw(const Eigen::Vector4d& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  return std::atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z));
}

Eigen::Vector4d quat_from_axis_angle(const Eigen::Vector3d& axis, double angle) {
  const double h = angle * 0.5;
  const double s = std::sin(h);
  return {std::cos(h), axis.x() * s, axis.y() * s, axis.z() * s};
}

Eigen::Vector4d quat_multiply(const Eigen::Vector4d& a, const Eigen::Vector4d& b) {
  const double aw = a[0], ax = a[1], ay = a[2], az = a[3];
  const double bw = b[0], bx = b[1], by = b[2], bz = b[3];
  return {aw * bw - ax * bx - ay * by - az * bz, aw * bx + ax * bw + ay * bz - az * by,
          aw * by - ax * bz + ay * bw + az * bx, aw * bz + ax * by - ay * bx + az * bw};
}

static double wrap_angle(double a) {
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

PoseDelta pose_delta(const PoseTrack& track) {
  if (track.samples.empty()) throw InputError("pose_delta: empty track");
  const PoseSample& first = track.samples.front();
  const PoseSample& last = track.samples.back();
  PoseDelta d;
  d.first = first;
  d.last = last;
  d.dpos = last.pos - first.pos;
  d.dyaw = wrap_angle(quat_yaw(last.quat) - quat_yaw(first.quat));
  return d;
}

// Identifier-safe object name: [A-Za-z_][A-Za-z0-9_]*.
static std::string sanitize_name(const std::string& name) {
  std::string out;
  for (char c : name) {
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '_') ? c : '_';
  }
  if (out.empty() || std::isdigit(static_cast<unsigned char>(out[0]))) out = "obj_" + out;
  return out;
}

std::string emit_urdf(const ObjectSpec& obj) {
  const std::string name = sanitize_name(obj.name);
  // Mesh is emitted next to the URDF as <name>.obj; the reference is relative.
  const std::string mesh_ref = name + ".obj";
  const double mass = 0.1;
  const double l = obj.size.x(), w = obj.size.y(), h = obj.size.z();
  const double ixx = mass / 12.0 * (w * w + h * h);
  const double iyy = mass / 12.0 * (l * l + h * h);
  const double izz = mass / 12.0 * (l * l + w * w);
  const std::string scale =
      format_double(obj.scale_ratio) + " " + format_double(obj.scale_ratio) + " " + format_double(obj.scale_ratio);
  std::ostringstream os;
  os << "<?xml version=\"1.0\"?>\n";
  os << "<robot name=\"" << name << "\">\n";
  os << "  <link name=\"" << name << "_link\">\n";
  os << "    <inertial>\n";
  os << "      <mass value=\"" << format_double(mass) << "\"/>\n";
  os << "      <inertia ixx=\"" << format_double(ixx) << "\" ixy=\"0\" ixz=\"0\" iyy=\""
     << format_double(iyy) << "\" iyz=\"0\" izz=\"" << format_double(izz) << "\"/>\n";
  os << "    </inertial>\n";
  os << "    <visual>\n";
  os << "      <geometry>\n";
  os << "        <mesh filename=\"" << mesh_ref << "\" scale=\"" << scale << "\"/>\n";
  os << "      </geometry>\n";
  os << "    </visual>\n";
  os << "    <collision>\n";
  os << "      <geometry>\n";
  os << "        <mesh filename=\"" << mesh_ref << "\" scale=\"" << scale << "\"/>\n";
  os << "      </geometry>\n";
  os << "    </collision>\n";
  os << "  </link>\n";
  os << "  <bounding_box size=\"" << format_double(l) << " " << format_double(w) << " "
     << format_double(h) << "\"/>\n";
  os << "</robot>\n";
  return os.str();
}

void validate_scene(const SceneSpec& scene) {
  std::vector<std::string> problems;
  if (scene.objects.empty()) problems.push_back("scene has no objects");
  std::set<std::string> seen;
  for (const auto& o : scene.objects) {
    if (!seen.insert(o.name).second) problems.push_back("duplicate object name: " + o.name);
    if (o.name != sanitize_name(o.name))
      problems.push_back("object name is not a valid identifier: " + o.name);
    if (!(o.size.array() > 0.0).all()) problems.push_back("non-positive size for object: " + o.name);
    if (o.scale_ratio <= 0.0) problems.push_back("non-positive scale ratio for object: " + o.name);
    if (o.pose_track.samples.empty()) problems.push_back("empty pose track for object: " + o.name);
    for (size_t k = 0; k + 1 < o.pose_track.samples.size(); ++k) {
      if (o.pose_track.samples[k + 1].frame <= o.pose_track.samples[k].frame) {
        problems.push_back("pose track frames not strictly increasing for object: " + o.name);
        break;
      }
    }
    for (const auto& s : o.pose_track.samples) {
      if (std::abs(s.quat.norm() - 1.0) > 1e-6) {
        problems.push_back("non-unit quaternion in pose track of object: " + o.name);
        break;
      }
    }
  }
  if (!problems.empty()) {
    std::string msg = "scene validation failed:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw InputError(msg);
  }
}

static nlohmann::json vec_to_json(const Eigen::Vector3d& v) {
  return nlohmann::json::array({v.x(), v.y(), v.z()});
}

static Eigen::Vector3d vec3_from_json(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw InputError(std::string("expected 3-array for ") + what);
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

static constexpr int kSceneFormatVersion = 1;

nlohmann::json scene_to_json(const SceneSpec& scene) {
  nlohmann::json j = scene.extra;
  j["format_version"] = kSceneFormatVersion;
  j["task_title"] = scene.task_title;
  j["caption"] = scene.caption;
  j["table_height"] = scene.table_height;
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : scene.objects) {
    nlohmann::json jo = o.extra;
    jo["name"] = o.name;
    jo["size"] = vec_to_json(o.size);
    jo["mesh_diameter"] = o.mesh_diameter;
    jo["scale_ratio"] = o.scale_ratio;
    jo["urdf_path"] = o.urdf_path;
    nlohmann::json track = nlohmann::json::array();
    for (const auto& s : o.pose_track.samples) {
      track.push_back({{"frame", s.frame},
                       {"pos", vec_to_json(s.pos)},
                       {"quat", nlohmann::json::array({s.quat[0], s.quat[1], s.quat[2], s.quat[3]})}});
    }
    jo["pose_track"] = std::move(track);
    objs.push_back(std::move(jo));
  }
  j["objects"] = std::move(objs);
  return j;
}

SceneSpec scene_from_json(const nlohmann::json& j) {
  SceneSpec scene;
  try {
    scene.task_title = j.at("task_title").get<std::string>();
    scene.caption = j.value("caption", std::string());
    scene.table_height = j.at("table_height").get<double>();
    const std::set<std::string> known = {"format_version", "task_title", "caption", "table_height",
                                         "objects"};
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!known.count(it.key())) scene.extra[it.key()] = it.value();
    }
    for (const auto& jo : j.at("objects")) {
      ObjectSpec o;
      o.name = jo.at("name").get<std::string>();
      o.size = vec3_from_json(jo.at("size"), "object size");
      o.mesh_diameter = jo.at("mesh_diameter").get<double>();
      o.scale_ratio = jo.at("scale_ratio").get<double>();
      o.urdf_path = jo.value("urdf_path", std::string());
      const std::set<std::string> known_obj = {"name", "size", "mesh_diameter", "scale_ratio",
                                               "urdf_path", "pose_track"};
      for (auto it = jo.begin(); it != jo.end(); ++it) {
        if (!known_obj.count(it.key())) o.extra[it.key()] = it.value();
      }
      for (const auto& js : jo.at("pose_track")) {
        PoseSample s;
        s.frame = js.at("frame").get<int>();
        s.pos = vec3_from_json(js.at("pos"), "pose position");
        const auto& q = js.at("quat");
        if (!q.is_array() || q.size() != 4) throw InputError("pose quat must be a 4-array");
        s.quat = {q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>()};
        o.pose_track.samples.push_back(s);
      }
      scene.objects.push_back(std::move(o));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("scene parse error: ") + e.what());
  }
  validate_scene(scene);
  return scene;
}

SceneSpec load_scene(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw InputError("cannot parse scene file " + path.string() + ": " + e.what());
  }
  return scene_from_json(j);
}

void save_scene(const SceneSpec& scene, const std::filesystem::path& path) {
  write_text_file(path, scene_to_json(scene).dump(2) + "\n");
}

DepthMap load_depth(const std::filesystem::path& path) {
  auto is = open_in(path);
  DepthMap d;
  d.width = static_cast<int>(read_pod<uint32_t>(is));
  d.height = static_cast<int>(read_pod<uint32_t>(is));
  if (d.width <= 0 || d.height <= 0 || d.width > 65536 || d.height > 65536)
    throw InputError("depth file has implausible dimensions: " + path.string());
  d.values.resize(static_cast<size_t>(d.width) * d.height);
  is.read(reinterpret_cast<char*>(d.values.data()),
          static_cast<std::streamsize>(d.values.size() * sizeof(float)));
  if (!is) throw InputError("depth file truncated: " + path.string());
  for (float v : d.values) {
    if (!std::isfinite(v) || v < 0.0f) throw InputError("depth file has invalid values: " + path.string());
  }
  return d;
}

void save_depth(const DepthMap& depth, const std::filesystem::path& path) {
  auto os = open_out(path);
  write_pod<uint32_t>(os, static_cast<uint32_t>(depth.width));
  write_pod<uint32_t>(os, static_cast<uint32_t>(depth.height));
  os.write(reinterpret_cast<const char*>(depth.values.data()),
           static_cast<std::streamsize>(depth.values.size() * sizeof(float)));
}

ObjectMask load_mask(const std::filesystem::path& path, int width, int height) {
  auto is = open_in(path, false);
  ObjectMask m;
  m.width = width;
  m.height = height;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    int i, j0, j1;
    if (!(ls >> i >> j0 >> j1) || j1 < j0)
      throw InputError("mask " + path.string() + ": bad run at line " + std::to_string(lineno));
    if (i < 0 || i >= height || j0 < 0 || j1 >= width)
      throw InputError("mask " + path.string() + ": run out of bounds at line " + std::to_string(lineno));
    for (int j = j0; j <= j1; ++j) m.pixels.emplace_back(i, j);
  }
  return m;
}

void save_mask(const ObjectMask& mask, const std::filesystem::path& path) {
  // Compress sorted pixels into runs.
  auto pixels = mask.pixels;
  std::sort(pixels.begin(), pixels.end());
  std::ostringstream os;
  size_t k = 0;
  while (k < pixels.size()) {
    const int i = pixels[k].first;
    const int j0 = pixels[k].second;
    int j1 = j0;
    while (k + 1 < pixels.size() && pixels[k + 1].first == i && pixels[k + 1].second == j1 + 1) {
      ++k;
      ++j1;
    }
    os << i << " " << j0 << " " << j1 << "\n";
    ++k;
  }
  write_text_file(path, os.str());
}

std::vector<Eigen::Vector3d> load_mesh_vertices(const std::filesystem::path& path) {
  auto is = open_in(path, false);
  std::vector<Eigen::Vector3d> verts;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x >> y >> z))
      throw InputError("vertex file " + path.string() + ": bad line " + std::to_string(lineno));
    verts.emplace_back(x, y, z);
  }
  if (verts.empty()) throw InputError("vertex file " + path.string() + ": no vertices");
  return verts;
}

PoseTrack load_pose_track(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw InputError("cannot parse pose track " + path.string() + ": " + e.what());
  }
  PoseTrack t;
  for (const auto& js : j) {
    PoseSample s;
    s.frame = js.at("frame").get<int>();
    s.pos = vec3_from_json(js.at("pos"), "pose position");
    const auto& q = js.at("quat");
    s.quat = {q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>()};
    t.samples.push_back(s);
  }
  if (t.samples.empty()) throw InputError("pose track " + path.string() + " is empty");
  return t;
}

}  // namespace v2p
