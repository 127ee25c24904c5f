#include "v2p/sim.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>

#include "v2p/binio.hpp"

namespace v2p {

int EnvStateBatch::object_index(const std::string& name) const {
  for (size_t k = 0; k < object_names.size(); ++k)
    if (object_names[k] == name) return static_cast<int>(k);
  return -1;
}

static Eigen::Matrix3d quat_to_matrix(const Eigen::Vector4d& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix3d R;
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return R;
}

double support_half_height(const Eigen::Vector4d& quat, const Eigen::Vector3d& size) {
  const Eigen::Matrix3d R = quat_to_matrix(quat);
  double h = 0.0;
  for (int i = 0; i < 3; ++i) h += std::abs(R(2, i)) * size[i] * 0.5;
  return h;
}

Eigen::Vector3d box_world_half_extents(const Eigen::Vector4d& quat, const Eigen::Vector3d& size) {
  const Eigen::Matrix3d R = quat_to_matrix(quat);
  Eigen::Vector3d e;
  for (int a = 0; a < 3; ++a) {
    double v = 0.0;
    for (int i = 0; i < 3; ++i) v += std::abs(R(a, i)) * size[i] * 0.5;
    e[a] = v;
  }
  return e;
}

namespace {

Eigen::Vector3d get3(const std::vector<double>& v, int b) {
  return {v[b * 3 + 0], v[b * 3 + 1], v[b * 3 + 2]};
}
void set3(std::vector<double>& v, int b, const Eigen::Vector3d& x) {
  v[b * 3 + 0] = x[0];
  v[b * 3 + 1] = x[1];
  v[b * 3 + 2] = x[2];
}
Eigen::Vector4d get4(const std::vector<double>& v, int b) {
  return {v[b * 4 + 0], v[b * 4 + 1], v[b * 4 + 2], v[b * 4 + 3]};
}
void set4(std::vector<double>& v, int b, const Eigen::Vector4d& x) {
  for (int k = 0; k < 4; ++k) v[b * 4 + k] = x[k];
}

double wrap_pi(double a) {
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

constexpr double kEefHomeX = 0.4;
constexpr double kEefHomeY = 0.0;
constexpr double kEefHomeZUp = 0.2;  // above the table

}  // namespace

EnvStateBatch reset(const ResetSpec& spec, const SceneSpec& scene, const SimConfig& config,
                    uint64_t seed) {
  EnvStateBatch s;
  const int B = config.num_envs;
  s.num_envs = B;
  s.table_height = scene.table_height;
  s.eef_pos.resize(3 * B);
  s.eef_euler.assign(3 * B, 0.0);
  s.eef_vel.assign(3 * B, 0.0);
  s.gripper_width.assign(B, 1.0);
  s.step_count.assign(B, 0);
  s.objects.resize(scene.objects.size());
  for (auto& o : s.objects) {
    o.pos.resize(3 * B);
    o.quat.resize(4 * B);
    o.vel.assign(3 * B, 0.0);
    o.size.resize(3 * B);
    o.held.assign(B, 0.0);
    o.upright.assign(B, 1.0);
    o.grasp_offset.assign(3 * B, 0.0);
  }
  for (const auto& obj : scene.objects) s.object_names.push_back(obj.name);
  for (int b = 0; b < B; ++b) {
    reset_env(s, b, spec, scene, config, derive_seed(seed, static_cast<uint64_t>(b)));
  }
  return s;
}

void reset_env(EnvStateBatch& s, int b, const ResetSpec& spec, const SceneSpec& scene,
               const SimConfig& config, uint64_t episode_seed) {
  Rng rng(episode_seed);
  s.eef_pos[b * 3 + 0] = kEefHomeX;
  s.eef_pos[b * 3 + 1] = kEefHomeY;
  s.eef_pos[b * 3 + 2] = scene.table_height + kEefHomeZUp;
  for (int k = 0; k < 3; ++k) {
    s.eef_euler[b * 3 + k] = 0.0;
    s.eef_vel[b * 3 + k] = 0.0;
  }
  s.gripper_width[b] = 1.0;
  s.step_count[b] = 0;

  // Placements resolve in declaration order; anchors are already placed when
  // a relative placement needs them (ResetSpec invariant).
  for (const auto& p : spec.placements) {
    const int oi = s.object_index(p.object);
    if (oi < 0) throw ContractError("reset: unknown object " + p.object);
    auto& o = s.objects[oi];
    const Eigen::Vector3d base_size = scene.objects[oi].size;
    for (int k = 0; k < 3; ++k) o.size[b * 3 + k] = base_size[k];
    double x = 0, y = 0, yaw = 0, z = 0;
    switch (p.mode) {
      case PlaceMode::Uniform:
        x = rng.uniform(p.x_range.lo, p.x_range.hi);
        y = rng.uniform(p.y_range.lo, p.y_range.hi);
        yaw = rng.uniform(p.yaw_range.lo, p.yaw_range.hi);
        z = scene.table_height + base_size.z() * 0.5;
        break;
      case PlaceMode::Fixed:
        x = p.pos.x();
        y = p.pos.y();
        yaw = p.yaw;
        z = std::max(p.pos.z(), scene.table_height + base_size.z() * 0.5);
        break;
      case PlaceMode::Relative: {
        const int ai = s.object_index(p.anchor);
        if (ai < 0) throw ContractError("reset: anchor not placed: " + p.anchor);
        x = s.objects[ai].pos[b * 3 + 0] + rng.uniform(p.offset_x.lo, p.offset_x.hi);
        y = s.objects[ai].pos[b * 3 + 1] + rng.uniform(p.offset_y.lo, p.offset_y.hi);
        yaw = 0.0;
        z = scene.table_height + base_size.z() * 0.5;
        break;
      }
    }
    o.pos[b * 3 + 0] = x;
    o.pos[b * 3 + 1] = y;
    o.pos[b * 3 + 2] = z;
    set4(o.quat, b, {std::cos(yaw * 0.5), 0.0, 0.0, std::sin(yaw * 0.5)});
    for (int k = 0; k < 3; ++k) {
      o.vel[b * 3 + k] = 0.0;
      o.grasp_offset[b * 3 + k] = 0.0;
    }
    o.held[b] = 0.0;
    o.upright[b] = 1.0;
  }
  (void)config;
}

void step(EnvStateBatch& s, const ActionBatch& actions, const SimConfig& config) {
  const int B = s.num_envs;
  if (actions.rows() != B || actions.cols() != 7)
    throw ContractError("step: action batch must be num_envs x 7");
  const double dt = config.dt;
  const int num_obj = s.num_objects();

  for (int b = 0; b < B; ++b) {
    if (s.step_count[b] >= config.horizon)
      throw ContractError("step: env " + std::to_string(b) + " already at horizon");
    // (1) clip + sanity
    double a[7];
    for (int k = 0; k < 7; ++k) {
      const float raw = actions(b, k);
      if (!std::isfinite(raw))
        throw ContractError("step: non-finite action in env " + std::to_string(b));
      a[k] = std::clamp(static_cast<double>(raw), -1.0, 1.0);
    }

    // (2) eef motion, clamped to the workspace
    const Eigen::Vector3d prev_eef = get3(s.eef_pos, b);
    Eigen::Vector3d eef = prev_eef;
    for (int k = 0; k < 3; ++k) eef[k] += a[k] * config.max_step_translation;
    const Workspace& ws = config.workspace;
    eef.x() = std::clamp(eef.x(), ws.x0, ws.x1);
    eef.y() = std::clamp(eef.y(), ws.y0, ws.y1);
    eef.z() = std::clamp(eef.z(), std::max(ws.z0, s.table_height), ws.z1);
    set3(s.eef_pos, b, eef);
    for (int k = 0; k < 3; ++k) {
      s.eef_euler[b * 3 + k] = wrap_pi(s.eef_euler[b * 3 + k] +
                                       a[3 + k] * config.max_step_rotation * config.action_rotation_scale);
    }
    const Eigen::Vector3d eef_vel = (eef - prev_eef) / dt;
    set3(s.eef_vel, b, eef_vel);

    // (3) gripper: command > 0 closes, <= 0 opens
    const bool was_closed = s.gripper_width[b] < 0.5;
    const bool closed = a[6] > 0.0;
    s.gripper_width[b] = closed ? 0.0 : 1.0;

    int held_idx = -1;
    for (int oi = 0; oi < num_obj; ++oi) {
      if (s.objects[oi].held[b] > 0.5) held_idx = oi;
    }

    // (4) grasp: a closed gripper near an object's center attaches the
    // nearest eligible object. Eligibility requires a quasi-static eef
    // (under a quarter of full speed): fingers closing mid-sweep slip off,
    // which also keeps release-velocity throws from being triggered by
    // accidental snatches.
    const double grasp_speed_cap = 0.25 * config.max_step_translation / dt;
    if (closed && held_idx < 0 && eef_vel.norm() <= grasp_speed_cap) {
      int best = -1;
      double best_d = 0.0;
      for (int oi = 0; oi < num_obj; ++oi) {
        auto& o = s.objects[oi];
        const Eigen::Vector3d size = get3(o.size, b);
        const double radius = size.maxCoeff() * 0.5 + config.grasp_margin;
        const double d = (get3(o.pos, b) - eef).norm();
        if (d <= radius && (best < 0 || d < best_d)) {
          best = oi;
          best_d = d;
        }
      }
      if (best >= 0) {
        auto& o = s.objects[best];
        o.held[b] = 1.0;
        set3(o.grasp_offset, b, get3(o.pos, b) - eef);
        held_idx = best;
      }
    }

    // Held object follows the eef rigidly (z kept at or above rest height).
    if (held_idx >= 0 && closed) {
      auto& o = s.objects[held_idx];
      Eigen::Vector3d p = eef + get3(o.grasp_offset, b);
      const double rest = s.table_height + support_half_height(get4(o.quat, b), get3(o.size, b));
      p.z() = std::max(p.z(), rest);
      set3(o.pos, b, p);
      set3(o.vel, b, eef_vel);
    }

    // (5) release: opening hands the object the eef velocity and detaches
    if (held_idx >= 0 && was_closed && !closed) {
      auto& o = s.objects[held_idx];
      o.held[b] = 0.0;
      set3(o.vel, b, eef_vel);
      held_idx = -1;
    }

    // (6)+(7) free objects: ballistic integration, then table contact.
    // The position update uses the average of the pre/post step z velocity,
    // which integrates constant gravity exactly.
    for (int oi = 0; oi < num_obj; ++oi) {
      auto& o = s.objects[oi];
      if (o.held[b] > 0.5) continue;
      Eigen::Vector3d p = get3(o.pos, b);
      Eigen::Vector3d v = get3(o.vel, b);
      p.x() += v.x() * dt;
      p.y() += v.y() * dt;
      p.z() += v.z() * dt - 0.5 * config.gravity * dt * dt;
      v.z() -= config.gravity * dt;
      const double rest = s.table_height + support_half_height(get4(o.quat, b), get3(o.size, b));
      if (p.z() <= rest && v.z() <= 0.0) {
        p.z() = rest;
        v.z() = 0.0;
        const double decay = std::exp(-config.friction_decay * dt);
        v.x() *= decay;
        v.y() *= decay;
        if (std::abs(v.x()) < 1e-3) v.x() = 0.0;
        if (std::abs(v.y()) < 1e-3) v.y() = 0.0;
      }
      set3(o.pos, b, p);
      set3(o.vel, b, v);
    }

    // (8) push + (9) topple. The eef acts as a point; a held object acts as
    // its rotated-box AABB. Contacts are resolved against free objects in
    // index order, eef first.
    for (int oi = 0; oi < num_obj; ++oi) {
      auto& o = s.objects[oi];
      if (o.held[b] > 0.5) continue;
      const Eigen::Vector3d size = get3(o.size, b);
      const Eigen::Vector4d quat = get4(o.quat, b);
      Eigen::Vector3d ext = box_world_half_extents(quat, size);
      Eigen::Vector3d p = get3(o.pos, b);

      struct Contact {
        bool hit = false;
        int axis = 0;       // 0=x, 1=y
        double pen = 0.0;   // displacement magnitude
        double dir = 1.0;   // sign of displacement
        double z = 0.0;     // contact height (world)
      };
      // c: pusher center, half: pusher half extents, v: pusher velocity.
      // The push direction follows the pusher's motion along the chosen axis,
      // so a fast sweep through a thin object carries it along instead of
      // expelling it backwards through the entry face.
      auto box_contact = [&](const Eigen::Vector3d& c, const Eigen::Vector3d& half,
                             const Eigen::Vector3d& v) {
        Contact ct;
        const double dx = p.x() - c.x();
        const double dy = p.y() - c.y();
        const double dz = p.z() - c.z();
        const double px = (ext.x() + half.x()) - std::abs(dx);
        const double py = (ext.y() + half.y()) - std::abs(dy);
        const double pz = (ext.z() + half.z()) - std::abs(dz);
        if (px <= 0.0 || py <= 0.0 || pz <= 0.0) return ct;
        ct.hit = true;
        ct.axis = (px <= py) ? 0 : 1;
        const double d_axis = ct.axis == 0 ? dx : dy;
        const double v_axis = v[ct.axis];
        ct.dir = std::abs(v_axis) > 1e-9 ? (v_axis > 0.0 ? 1.0 : -1.0)
                                         : (d_axis >= 0.0 ? 1.0 : -1.0);
        ct.pen = (ext[ct.axis] + half[ct.axis]) - ct.dir * d_axis;
        // Penetration resolves no faster than the contact sweeps (compliant
        // extrusion): a deep poke herds the object at the pusher's speed over
        // several steps instead of launching it.
        const double cap = std::max(std::abs(v_axis) * dt, 0.002);
        ct.pen = std::min(ct.pen, cap);
        ct.z = c.z();
        return ct;
      };

      Contact contacts[2];
      int n_contacts = 0;
      contacts[n_contacts++] = box_contact(eef, Eigen::Vector3d::Zero(), eef_vel);
      if (held_idx >= 0 && held_idx != oi) {
        auto& h = s.objects[held_idx];
        contacts[n_contacts++] =
            box_contact(get3(h.pos, b), box_world_half_extents(get4(h.quat, b), get3(h.size, b)),
                        eef_vel);
      }
      for (int ci = 0; ci < n_contacts; ++ci) {
        const Contact& ct = contacts[ci];
        if (!ct.hit) continue;
        Eigen::Vector3d v = get3(o.vel, b);
        p[ct.axis] += ct.dir * ct.pen;
        v[ct.axis] = ct.dir * ct.pen / dt;
        set3(o.pos, b, p);
        set3(o.vel, b, v);
        // (9) topple: high contact plus a large lateral shove tips the box
        // about the horizontal axis perpendicular to the push.
        const double height = 2.0 * support_half_height(quat, size);
        const double contact_h = ct.z - (p.z() - height * 0.5);
        const double base_w = 2.0 * ext[ct.axis];
        if (o.upright[b] > 0.5 && contact_h > 0.7 * height && ct.pen > 0.25 * base_w) {
          o.upright[b] = 0.0;
          const Eigen::Vector3d push_dir = ct.axis == 0
                                               ? Eigen::Vector3d(ct.dir, 0.0, 0.0)
                                               : Eigen::Vector3d(0.0, ct.dir, 0.0);
          const Eigen::Vector3d axis = Eigen::Vector3d::UnitZ().cross(push_dir);
          const Eigen::Vector4d tip = quat_from_axis_angle(axis, M_PI / 2.0);
          set4(o.quat, b, quat_multiply(tip, get4(o.quat, b)));
          ext = box_world_half_extents(get4(o.quat, b), size);
        }
      }

      // Safety clamp: rule interleaving must never leave a resting object
      // below the table surface.
      const double rest = s.table_height + support_half_height(get4(o.quat, b), size);
      if (p.z() < rest) {
        p.z() = rest;
        set3(o.pos, b, p);
      }
    }

    // (10)
    s.step_count[b] += 1;
  }
}

FeatureTable features(const EnvStateBatch& s) {
  FeatureTable t;
  t.batch = s.num_envs;
  t.columns["eef.pos"] = {s.eef_pos.data(), 3, 3, ValueType::Vec3};
  t.columns["eef.euler"] = {s.eef_euler.data(), 3, 3, ValueType::Vec3};
  t.columns["eef.vel"] = {s.eef_vel.data(), 3, 3, ValueType::Vec3};
  t.columns["gripper.width"] = {s.gripper_width.data(), 1, 1, ValueType::Scalar};
  t.columns["table.height"] = {&s.table_height, 0, 1, ValueType::Scalar};
  for (int oi = 0; oi < s.num_objects(); ++oi) {
    const std::string& nm = s.object_names[oi];
    const auto& o = s.objects[oi];
    t.columns[nm + ".pos"] = {o.pos.data(), 3, 3, ValueType::Vec3};
    t.columns[nm + ".quat"] = {o.quat.data(), 4, 4, ValueType::Vec4};
    t.columns[nm + ".vel_linear"] = {o.vel.data(), 3, 3, ValueType::Vec3};
    t.columns[nm + ".size"] = {o.size.data(), 3, 3, ValueType::Vec3};
    t.columns[nm + ".held"] = {o.held.data(), 1, 1, ValueType::Scalar};
    t.columns[nm + ".upright"] = {o.upright.data(), 1, 1, ValueType::Scalar};
  }
  return t;
}

PlacementBounds placement_bounds(const ResetSpec& reset, const std::string& object) {
  const Placement* p = reset.find(object);
  if (!p) throw InputError("placement_bounds: object not placed: " + object);
  switch (p->mode) {
    case PlaceMode::Uniform:
      return {p->x_range.lo, p->x_range.hi, p->y_range.lo, p->y_range.hi};
    case PlaceMode::Fixed:
      return {p->pos.x(), p->pos.x(), p->pos.y(), p->pos.y()};
    case PlaceMode::Relative: {
      PlacementBounds a = placement_bounds(reset, p->anchor);
      return {a.x_lo + p->offset_x.lo, a.x_hi + p->offset_x.hi, a.y_lo + p->offset_y.lo,
              a.y_hi + p->offset_y.hi};
    }
  }
  throw ContractError("placement_bounds: unreachable");
}

const std::vector<std::string>& builtin_families() {
  static const std::vector<std::string> families = {
      "push_left", "push_right", "lift",         "tip_over", "cover",     "uncover",
      "push_next_to", "drop_in_front", "insert", "slide_to", "throw_into"};
  return families;
}

bool family_needs_two_objects(const std::string& family) {
  return family == "cover" || family == "uncover" || family == "push_next_to" ||
         family == "drop_in_front" || family == "insert" || family == "slide_to" ||
         family == "throw_into";
}

SuccessProgram builtin_ground_truth(const std::string& family, const SceneSpec& scene,
                                    const ResetSpec& reset) {
  if (scene.objects.empty()) throw InputError("ground truth: scene has no objects");
  const std::string a = scene.objects[0].name;
  std::string b;
  if (family_needs_two_objects(family)) {
    if (scene.objects.size() < 2)
      throw InputError("ground truth: family '" + family + "' needs two objects");
    b = scene.objects[1].name;
  }
  auto fd = [](double v) { return format_double(v); };
  std::string text;
  if (family == "push_left") {
    const auto pb = placement_bounds(reset, a);
    text = a + ".pos[0] < " + fd(pb.x_lo - 0.1);
  } else if (family == "push_right") {
    const auto pb = placement_bounds(reset, a);
    text = a + ".pos[0] > " + fd(pb.x_hi + 0.1);
  } else if (family == "lift") {
    // A 1e-6 margin keeps exact resting/topple states (support height equal
    // to max(size)/2 to the last ulp) from flipping on rounding noise.
    text = "(" + a + ".pos[2] - table.height) > max(" + a + ".size[0], max(" + a + ".size[1], " +
           a + ".size[2])) / 2 + 0.000001";
  } else if (family == "tip_over") {
    text = a + ".upright < 0.5";
  } else if (family == "cover") {
    text = "norm((" + a + ".pos - " + b + ".pos)[0:2]) < " + b + ".size[0] / 2 & " + a +
           ".held < 0.5";
  } else if (family == "uncover") {
    text = "norm((" + a + ".pos - " + b + ".pos)[0:2]) > (" + a + ".size[0] / 2 + " + b +
           ".size[0] / 2)";
  } else if (family == "push_next_to") {
    text = "norm((" + a + ".pos - " + b + ".pos)[0:2]) < (" + a + ".size[0] / 2 + " + b +
           ".size[0] / 2 + 0.03) & " + a + ".held < 0.5";
  } else if (family == "drop_in_front") {
    // +x is "in front of" the target.
    text = "(" + a + ".pos[0] - " + b + ".pos[0]) > " + b + ".size[0] / 2 & abs(" + a +
           ".pos[1] - " + b + ".pos[1]) < " + b + ".size[1] & " + a + ".held < 0.5";
  } else if (family == "insert" || family == "throw_into") {
    text = "norm((" + a + ".pos - " + b + ".pos)[0:2]) < " + b + ".size[0] / 2 & (" + a +
           ".pos[2] - " + a + ".size[2] / 2) < (" + b + ".pos[2] + " + b + ".size[2] / 2) & (" +
           a + ".pos[2] + " + a + ".size[2] / 2) > (" + b + ".pos[2] - " + b + ".size[2] / 2) & " +
           a + ".held < 0.5";
  } else if (family == "slide_to") {
    text = "norm((" + a + ".pos - " + b + ".pos)[0:2]) < (" + a + ".size[0] / 2 + " + b +
           ".size[0] / 2 + 0.02)";
  } else {
    std::string families;
    for (const auto& f : builtin_families()) families += " " + f;
    throw InputError("unknown task family '" + family + "'; known:" + families);
  }
  return SuccessProgram{parse_expr(text)};
}

SceneSpec make_builtin_scene(const std::string& family) {
  SceneSpec scene;
  scene.task_title = family;
  scene.caption = "a hand manipulates a block on a table (" + family + ")";
  scene.table_height = 0.4;

  ObjectSpec block;
  block.name = "block";
  block.size = {0.05, 0.05, 0.05};
  block.mesh_diameter = block.size.norm();
  block.scale_ratio = 1.0;
  const double bz = scene.table_height + 0.025;
  auto track = [&](Eigen::Vector3d from, Eigen::Vector3d to, Eigen::Vector4d q_to) {
    PoseTrack t;
    t.samples.push_back({0, from, {1, 0, 0, 0}});
    t.samples.push_back({90, to, q_to});
    return t;
  };
  const Eigen::Vector4d ident = {1, 0, 0, 0};
  if (family == "push_left") {
    block.pose_track = track({0.4, 0, bz}, {0.2, 0, bz}, ident);
  } else if (family == "push_right") {
    block.pose_track = track({0.4, 0, bz}, {0.6, 0, bz}, ident);
  } else if (family == "lift") {
    // Height below the max dimension keeps the lift rule robustly false at
    // rest (a perfect cube would sit on the threshold).
    block.size = {0.05, 0.05, 0.04};
    block.mesh_diameter = block.size.norm();
    block.pose_track = track({0.4, 0, bz}, {0.4, 0, bz + 0.25}, ident);
  } else if (family == "tip_over") {
    block.size = {0.04, 0.04, 0.12};
    block.mesh_diameter = block.size.norm();
    block.pose_track = track({0.4, 0, 0.46}, {0.45, 0, 0.42},
                             quat_from_axis_angle({0, 1, 0}, M_PI / 2));
  } else {
    block.pose_track = track({0.35, -0.1, bz}, {0.55, 0.1, bz + 0.02}, ident);
  }
  scene.objects.push_back(block);

  if (family_needs_two_objects(family)) {
    ObjectSpec box;
    box.name = "box";
    box.size = {0.12, 0.12, 0.06};
    box.mesh_diameter = box.size.norm();
    box.scale_ratio = 1.0;
    PoseTrack t;
    t.samples.push_back({0, {0.55, 0.1, 0.43}, ident});
    t.samples.push_back({90, {0.55, 0.1, 0.43}, ident});
    box.pose_track = t;
    scene.objects.push_back(box);
  }
  return scene;
}

ResetSpec make_builtin_reset(const std::string& family, const SceneSpec& scene) {
  ResetSpec r;
  Placement block;
  block.object = scene.objects[0].name;
  block.mode = PlaceMode::Uniform;
  block.x_range = {0.38, 0.42};
  block.y_range = {-0.04, 0.04};
  block.yaw_range = {0.0, 0.0};
  r.placements.push_back(block);
  if (scene.objects.size() > 1) {
    Placement box;
    box.object = scene.objects[1].name;
    box.mode = PlaceMode::Uniform;
    box.x_range = {0.53, 0.57};
    box.y_range = {0.08, 0.12};
    box.yaw_range = {0.0, 0.0};
    r.placements.push_back(box);
  }
  return r;
}

// --- actors -------------------------------------------------------------------

ActionBatch RandomActor::act(const EnvStateBatch& state, const Eigen::MatrixXf&, bool) {
  ActionBatch a(state.num_envs, 7);
  for (int b = 0; b < state.num_envs; ++b)
    for (int k = 0; k < 7; ++k) a(b, k) = static_cast<float>(rng_.uniform(-1.0, 1.0));
  return a;
}

ScriptedActor::ScriptedActor(std::string family, const SceneSpec& scene, const ResetSpec& reset,
                             const SimConfig& config)
    : family_(std::move(family)), config_(config) {
  primary_ = 0;
  secondary_ = scene.objects.size() > 1 ? 1 : -1;
  if (family_ == "push_left") {
    push_target_x_ = placement_bounds(reset, scene.objects[0].name).x_lo - 0.13;
  } else if (family_ == "push_right") {
    push_target_x_ = placement_bounds(reset, scene.objects[0].name).x_hi + 0.13;
  }
}

ActionBatch ScriptedActor::act(const EnvStateBatch& s, const Eigen::MatrixXf&, bool) {
  const int B = s.num_envs;
  ActionBatch out = ActionBatch::Zero(B, 7);
  const double step = config_.max_step_translation;

  auto move_toward = [&](int b, const Eigen::Vector3d& target, double* a) {
    const Eigen::Vector3d eef = get3(s.eef_pos, b);
    const Eigen::Vector3d d = target - eef;
    for (int k = 0; k < 3; ++k) a[k] = std::clamp(d[k] / step, -1.0, 1.0);
  };

  for (int b = 0; b < B; ++b) {
    double a[7] = {0, 0, 0, 0, 0, 0, -1.0};
    const auto& po = s.objects[primary_];
    const Eigen::Vector3d obj = get3(po.pos, b);
    const Eigen::Vector3d size = get3(po.size, b);
    const Eigen::Vector3d eef = get3(s.eef_pos, b);
    const bool held = po.held[b] > 0.5;
    const double grasp_radius = size.maxCoeff() * 0.5 + config_.grasp_margin;

    auto grasp_or_approach = [&]() {
      // Approach from above, descend onto the center, close when inside the
      // grasp radius.
      const double xy = std::hypot(obj.x() - eef.x(), obj.y() - eef.y());
      if (xy > 0.015) {
        move_toward(b, {obj.x(), obj.y(), obj.z() + 0.1}, a);
        a[6] = -1.0;
      } else if ((obj - eef).norm() > grasp_radius * 0.7) {
        move_toward(b, obj, a);
        a[6] = -1.0;
      } else {
        a[6] = 1.0;  // close; grasp rule attaches this step
      }
    };

    auto push_along = [&](int axis, double dir, double target) {
      // Position behind the object at its center height, then drive through.
      const Eigen::Vector3d ext = box_world_half_extents(get4(po.quat, b), size);
      if (dir > 0 ? obj[axis] > target : obj[axis] < target) return;  // done
      Eigen::Vector3d behind = obj;
      behind[axis] -= dir * (ext[axis] + 0.015);
      const int other = axis == 0 ? 1 : 0;
      const bool lined_up = std::abs(eef[other] - obj[other]) < 0.01 &&
                            std::abs(eef.z() - behind.z()) < 0.01 &&
                            (dir > 0 ? eef[axis] <= obj[axis] - ext[axis] * 0.5
                                     : eef[axis] >= obj[axis] + ext[axis] * 0.5);
      if (!lined_up) {
        move_toward(b, behind, a);
      } else {
        a[axis] = dir;
      }
      a[6] = -1.0;
    };

    if (family_ == "push_right") {
      push_along(0, 1.0, push_target_x_);
    } else if (family_ == "push_left") {
      push_along(0, -1.0, push_target_x_);
    } else if (family_ == "lift") {
      if (held) {
        a[2] = 1.0;
        a[6] = 1.0;
      } else {
        grasp_or_approach();
      }
    } else if (family_ == "tip_over") {
      if (po.upright[b] < 0.5) {
        // done; retreat upward
        move_toward(b, {eef.x(), eef.y(), s.table_height + 0.3}, a);
      } else {
        // Push near the top, fast, along +x.
        const Eigen::Vector3d ext = box_world_half_extents(get4(po.quat, b), size);
        const double push_z = obj.z() + ext.z() * 0.8;
        const bool lined_up = std::abs(eef.y() - obj.y()) < 0.01 &&
                              std::abs(eef.z() - push_z) < 0.012 && eef.x() <= obj.x() - ext.x() * 0.5;
        if (!lined_up) {
          move_toward(b, {obj.x() - ext.x() - 0.015, obj.y(), push_z}, a);
        } else {
          a[0] = 1.0;
        }
      }
    } else if (secondary_ >= 0) {
      // Transport families: carry the block to a family-specific point near
      // the target box, then release. slide_to pushes instead of carrying.
      const auto& so = s.objects[secondary_];
      const Eigen::Vector3d tgt = get3(so.pos, b);
      const Eigen::Vector3d tsz = get3(so.size, b);
      if (family_ == "slide_to") {
        // Push along the dominant axis toward the box until adjacent.
        const double dxy[2] = {tgt.x() - obj.x(), tgt.y() - obj.y()};
        const int axis = std::abs(dxy[0]) >= std::abs(dxy[1]) ? 0 : 1;
        const double dir = dxy[axis] >= 0 ? 1.0 : -1.0;
        const double stop = tgt[axis] - dir * (tsz[axis] * 0.5 + size[axis] * 0.5 + 0.005);
        push_along(axis, dir, dir > 0 ? stop : stop);
      } else if (family_ == "uncover") {
        if (held) {
          Eigen::Vector3d away = {obj.x(), obj.y() + 0.2, s.table_height + 0.15};
          const double xy = std::hypot(away.x() - obj.x(), away.y() - obj.y());
          if (xy < 0.03) {
            a[6] = -1.0;  // release
          } else {
            move_toward(b, away, a);
            a[6] = 1.0;
          }
        } else {
          grasp_or_approach();
        }
      } else {
        Eigen::Vector3d drop = tgt;
        if (family_ == "push_next_to") {
          drop.x() = tgt.x() - (tsz.x() * 0.5 + size.x() * 0.5 + 0.005);
        } else if (family_ == "drop_in_front") {
          drop.x() = tgt.x() + tsz.x() * 0.5 + size.x() * 0.5 + 0.02;
        }
        if (held) {
          const double xy = std::hypot(drop.x() - obj.x(), drop.y() - obj.y());
          if (xy < 0.015) {
            a[6] = -1.0;  // release above the target
          } else {
            move_toward(b, {drop.x(), drop.y(), s.table_height + (family_ == "cover" ? 0.12 : 0.18)}, a);
            a[6] = 1.0;
          }
        } else {
          grasp_or_approach();
        }
      }
    }
    for (int k = 0; k < 7; ++k) out(b, k) = static_cast<float>(a[k]);
  }
  return out;
}

EnvStateBatch slice_env(const EnvStateBatch& s, int begin, int count) {
  EnvStateBatch out;
  out.num_envs = count;
  out.table_height = s.table_height;
  out.object_names = s.object_names;
  auto copy3 = [&](const std::vector<double>& src) {
    return std::vector<double>(src.begin() + begin * 3, src.begin() + (begin + count) * 3);
  };
  out.eef_pos = copy3(s.eef_pos);
  out.eef_euler = copy3(s.eef_euler);
  out.eef_vel = copy3(s.eef_vel);
  out.gripper_width.assign(s.gripper_width.begin() + begin, s.gripper_width.begin() + begin + count);
  out.step_count.assign(s.step_count.begin() + begin, s.step_count.begin() + begin + count);
  out.objects.resize(s.objects.size());
  for (size_t oi = 0; oi < s.objects.size(); ++oi) {
    const auto& src = s.objects[oi];
    auto& dst = out.objects[oi];
    dst.pos = copy3(src.pos);
    dst.vel = copy3(src.vel);
    dst.size = copy3(src.size);
    dst.grasp_offset = copy3(src.grasp_offset);
    dst.quat.assign(src.quat.begin() + begin * 4, src.quat.begin() + (begin + count) * 4);
    dst.held.assign(src.held.begin() + begin, src.held.begin() + begin + count);
    dst.upright.assign(src.upright.begin() + begin, src.upright.begin() + begin + count);
  }
  return out;
}

bool states_equal(const EnvStateBatch& a, const EnvStateBatch& b) {
  if (a.num_envs != b.num_envs || a.table_height != b.table_height ||
      a.object_names != b.object_names)
    return false;
  if (a.eef_pos != b.eef_pos || a.eef_euler != b.eef_euler || a.eef_vel != b.eef_vel ||
      a.gripper_width != b.gripper_width || a.step_count != b.step_count)
    return false;
  for (size_t oi = 0; oi < a.objects.size(); ++oi) {
    const auto& x = a.objects[oi];
    const auto& y = b.objects[oi];
    if (x.pos != y.pos || x.quat != y.quat || x.vel != y.vel || x.size != y.size ||
        x.held != y.held || x.upright != y.upright || x.grasp_offset != y.grasp_offset)
      return false;
  }
  return true;
}

}  // namespace v2p
