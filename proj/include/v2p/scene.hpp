#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "v2p/geometry.hpp"

namespace v2p {

// Quaternions are stored (w, x, y, z), unit norm.
struct PoseSample {
  int frame = 0;
  Eigen::Vector3d pos = Eigen::Vector3d::Zero();
  Eigen::Vector4d quat = {1, 0, 0, 0};
};

struct PoseTrack {
  std::vector<PoseSample> samples;
};

struct PoseDelta {
  Eigen::Vector3d dpos;
  double dyaw;
  PoseSample first;
  PoseSample last;
};

struct ObjectSpec {
  std::string name;
  Eigen::Vector3d size = {0.05, 0.05, 0.05};  // (l, w, h) meters
  double mesh_diameter = 0.0;
  double scale_ratio = 1.0;
  std::string urdf_path;
  PoseTrack pose_track;
  nlohmann::json extra = nlohmann::json::object();  // unknown fields, preserved
};

struct SceneSpec {
  std::string task_title;
  std::string caption;
  double table_height = 0.4;
  std::vector<ObjectSpec> objects;
  nlohmann::json extra = nlohmann::json::object();

  const ObjectSpec* find_object(const std::string& name) const;
};

// Yaw (rotation about z) of a unit quaternion, ZYX convention.
double quat_yaw(const Eigen::Vector4d& q);

// Quaternion for a rotation of `angle` radians about `axis` (unit).
Eigen::Vector4d quat_from_axis_angle(const Eigen::Vector3d& axis, double angle);

Eigen::Vector4d quat_multiply(const Eigen::Vector4d& a, const Eigen::Vector4d& b);

// Endpoint poses and their difference; feeds generation prompts.
PoseDelta pose_delta(const PoseTrack& track);

// Single-link URDF with mesh geometry at uniform scale rho, box inertia of the
// declared size at 0.1 kg. Byte-stable for identical inputs.
std::string emit_urdf(const ObjectSpec& obj);

// Throws InputError listing every violated invariant.
void validate_scene(const SceneSpec& scene);

SceneSpec scene_from_json(const nlohmann::json& j);
nlohmann::json scene_to_json(const SceneSpec& scene);
SceneSpec load_scene(const std::filesystem::path& path);
void save_scene(const SceneSpec& scene, const std::filesystem::path& path);

// Depth grid: u32 width, u32 height (little-endian), then width*height f32.
DepthMap load_depth(const std::filesystem::path& path);
void save_depth(const DepthMap& depth, const std::filesystem::path& path);

// Run-length mask: one line per run, "i j_start j_end", j range inclusive.
ObjectMask load_mask(const std::filesystem::path& path, int width, int height);
void save_mask(const ObjectMask& mask, const std::filesystem::path& path);

// Plain text vertex list: "x y z" per line.
std::vector<Eigen::Vector3d> load_mesh_vertices(const std::filesystem::path& path);

// JSON array of {frame, pos[3], quat[4]}.
PoseTrack load_pose_track(const std::filesystem::path& path);

}  // namespace v2p
