#include "v2p/scene.hpp"

#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "v2p/binio.hpp"
#include "v2p/rng.hpp"

using namespace v2p;
namespace fs = std::filesystem;

namespace {

SceneSpec two_object_scene() {
  SceneSpec s;
  s.task_title = "slide remote to mouse";
  s.caption = "a hand slides a remote control next to a mouse";
  s.table_height = 0.4;
  ObjectSpec remote;
  remote.name = "remote";
  remote.size = {0.18, 0.04, 0.02};
  remote.mesh_diameter = 0.0615;
  remote.scale_ratio = 3.0;
  remote.urdf_path = "remote.urdf";
  remote.pose_track.samples = {{0, {0.3, 0.0, 0.41}, {1, 0, 0, 0}},
                               {45, {0.5, 0.05, 0.41}, {1, 0, 0, 0}}};
  ObjectSpec mouse;
  mouse.name = "mouse";
  mouse.size = {0.17, 0.10, 0.05};
  mouse.mesh_diameter = 0.1;
  mouse.scale_ratio = 2.0;
  mouse.urdf_path = "mouse.urdf";
  mouse.pose_track.samples = {{0, {0.6, 0.1, 0.42}, {1, 0, 0, 0}},
                              {45, {0.6, 0.1, 0.42}, {1, 0, 0, 0}}};
  s.objects = {remote, mouse};
  return s;
}

fs::path temp_dir() {
  auto p = fs::temp_directory_path() / ("v2p_scene_test_" + std::to_string(Rng(::getpid()).next_u64() % 100000));
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("pose delta: single sample gives zero delta") {
  PoseTrack t;
  t.samples = {{0, {0.1, 0.2, 0.3}, {1, 0, 0, 0}}};
  const auto d = pose_delta(t);
  CHECK(d.dpos.norm() == 0.0);
  CHECK(d.dyaw == 0.0);
  CHECK(d.first.frame == d.last.frame);
}

TEST_CASE("pose delta: leftward push") {
  PoseTrack t;
  t.samples = {{0, {0, 0, 0}, {1, 0, 0, 0}}, {10, {-0.2, 0, 0}, {1, 0, 0, 0}}};
  const auto d = pose_delta(t);
  CHECK(d.dpos.x() == doctest::Approx(-0.2));
  CHECK(d.dpos.y() == 0.0);
}

TEST_CASE("pose delta: 90 degree yaw via quaternion oracle") {
  // Oracle: rotate the x axis by the quaternion and read the angle.
  const double half = M_PI / 4.0;
  Eigen::Vector4d q{std::cos(half), 0, 0, std::sin(half)};
  PoseTrack t;
  t.samples = {{0, {0, 0, 0}, {1, 0, 0, 0}}, {5, {0, 0, 0}, q}};
  const auto d = pose_delta(t);
  // Oracle route: yaw of rotated x-axis.
  const double c = 1.0 - 2.0 * q[3] * q[3];
  const double s = 2.0 * q[0] * q[3];
  const double oracle = std::atan2(s, c);
  CHECK(d.dyaw == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(d.dyaw == doctest::Approx(M_PI / 2).epsilon(1e-12));
}

TEST_CASE("pose delta rejects empty track") {
  CHECK_THROWS_AS(pose_delta(PoseTrack{}), InputError);
}

TEST_CASE("urdf: identity and scaled outputs, determinism") {
  ObjectSpec o = two_object_scene().objects[0];
  o.scale_ratio = 1.0;
  const std::string u1 = emit_urdf(o);
  CHECK(u1.find("scale=\"1 1 1\"") != std::string::npos);
  o.scale_ratio = 3.0;
  const std::string u3 = emit_urdf(o);
  CHECK(u3.find("scale=\"3 3 3\"") != std::string::npos);
  CHECK(emit_urdf(o) == u3);
}

TEST_CASE("urdf: scale recovery and structural sanity") {
  ObjectSpec o = two_object_scene().objects[0];
  o.scale_ratio = 2.718281828459045;
  const std::string u = emit_urdf(o);
  const auto at = u.find("scale=\"");
  REQUIRE(at != std::string::npos);
  const auto end = u.find('"', at + 7);
  const std::string scale_text = u.substr(at + 7, end - at - 7);
  const double recovered = std::stod(scale_text.substr(0, scale_text.find(' ')));
  CHECK(std::abs(recovered - o.scale_ratio) < 1e-9);
  // Well-formed XML at the level we emit: every open tag closes.
  for (const char* tag : {"robot", "link", "inertial", "visual", "collision", "geometry"}) {
    const std::string open = std::string("<") + tag;
    const std::string close = std::string("</") + tag + ">";
    size_t opens = 0, closes = 0;
    for (size_t p = u.find(open); p != std::string::npos; p = u.find(open, p + 1)) {
      if (u[p + open.size()] == '>' || u[p + open.size()] == ' ') ++opens;
    }
    for (size_t p = u.find(close); p != std::string::npos; p = u.find(close, p + 1)) ++closes;
    CHECK(opens == closes);
  }
}

TEST_CASE("urdf sanitizes awkward names") {
  ObjectSpec o = two_object_scene().objects[0];
  o.name = "2 fancy-name!";
  const std::string u = emit_urdf(o);
  CHECK(u.find("2 fancy-name!") == std::string::npos);
  CHECK(u.find("obj_2_fancy_name_") != std::string::npos);
}

TEST_CASE("scene json round trip is lossless and preserves unknown fields") {
  const auto dir = temp_dir();
  SceneSpec s = two_object_scene();
  s.extra["recorded_by"] = "fixture";
  s.objects[0].extra["mesh_source_frame"] = "last";
  save_scene(s, dir / "scene.json");
  SceneSpec loaded = load_scene(dir / "scene.json");
  CHECK(loaded.task_title == s.task_title);
  CHECK(loaded.caption == s.caption);
  CHECK(loaded.table_height == s.table_height);
  REQUIRE(loaded.objects.size() == 2);
  CHECK(loaded.objects[0].size == s.objects[0].size);
  CHECK(loaded.objects[0].pose_track.samples.size() == 2);
  CHECK(loaded.extra["recorded_by"] == "fixture");
  CHECK(loaded.objects[0].extra["mesh_source_frame"] == "last");
  // Byte-stable second save.
  save_scene(loaded, dir / "scene2.json");
  CHECK(read_text_file(dir / "scene.json") == read_text_file(dir / "scene2.json"));
  // pose_delta available per object.
  for (const auto& o : loaded.objects) CHECK_NOTHROW(pose_delta(o.pose_track));
  fs::remove_all(dir);
}

TEST_CASE("scene validation rejects duplicates and bad data") {
  SceneSpec s = two_object_scene();
  s.objects[1].name = "remote";
  CHECK_THROWS_AS(validate_scene(s), InputError);
  s = two_object_scene();
  s.objects[0].size.z() = -1;
  CHECK_THROWS_AS(validate_scene(s), InputError);
  s = two_object_scene();
  s.objects[0].pose_track.samples[1].frame = 0;
  CHECK_THROWS_AS(validate_scene(s), InputError);
  s = two_object_scene();
  s.objects[0].pose_track.samples[0].quat = {2, 0, 0, 0};
  CHECK_THROWS_AS(validate_scene(s), InputError);
}

TEST_CASE("malformed scene file raises a parse error") {
  const auto dir = temp_dir();
  write_text_file(dir / "bad.json", "{not json");
  CHECK_THROWS_AS(load_scene(dir / "bad.json"), InputError);
  fs::remove_all(dir);
}

TEST_CASE("depth and mask files round trip") {
  const auto dir = temp_dir();
  Rng rng(3);
  DepthMap d{6, 4, {}};
  d.values.resize(24);
  for (auto& v : d.values) v = rng.chance(0.2) ? 0.0f : static_cast<float>(rng.uniform(0.1, 2.0));
  save_depth(d, dir / "d.bin");
  const DepthMap d2 = load_depth(dir / "d.bin");
  CHECK(d2.width == d.width);
  CHECK(d2.height == d.height);
  CHECK(d2.values == d.values);

  ObjectMask m{6, 4, {{0, 1}, {0, 2}, {0, 3}, {2, 5}, {3, 0}}};
  save_mask(m, dir / "m.rle");
  const ObjectMask m2 = load_mask(dir / "m.rle", 6, 4);
  auto sorted = m.pixels;
  std::sort(sorted.begin(), sorted.end());
  auto sorted2 = m2.pixels;
  std::sort(sorted2.begin(), sorted2.end());
  CHECK(sorted == sorted2);
  // The RLE text uses inclusive runs.
  CHECK(read_text_file(dir / "m.rle").find("0 1 3") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("mesh vertex and pose track loaders") {
  const auto dir = temp_dir();
  write_text_file(dir / "v.txt", "0 0 0\n1 0 0\n# comment\n0 2 0\n");
  const auto verts = load_mesh_vertices(dir / "v.txt");
  REQUIRE(verts.size() == 3);
  CHECK(verts[2].y() == 2.0);
  write_text_file(dir / "bad.txt", "1 2\n");
  CHECK_THROWS_AS(load_mesh_vertices(dir / "bad.txt"), InputError);

  write_text_file(dir / "t.json",
                  R"([{"frame":0,"pos":[0,0,0],"quat":[1,0,0,0]},{"frame":9,"pos":[1,0,0],"quat":[1,0,0,0]}])");
  const auto track = load_pose_track(dir / "t.json");
  CHECK(track.samples.size() == 2);
  CHECK(track.samples[1].pos.x() == 1.0);
  fs::remove_all(dir);
}
