#include "v2p/task.hpp"

#include <cctype>
#include <set>

#include "v2p/binio.hpp"
#include "v2p/rng.hpp"

namespace v2p {

const Placement* ResetSpec::find(const std::string& object) const {
  for (const auto& p : placements)
    if (p.object == object) return &p;
  return nullptr;
}

FeatureTypes scene_feature_types(const SceneSpec& scene) {
  FeatureTypes t;
  t["eef.pos"] = ValueType::Vec3;
  t["eef.euler"] = ValueType::Vec3;
  t["eef.vel"] = ValueType::Vec3;
  t["gripper.width"] = ValueType::Scalar;
  t["table.height"] = ValueType::Scalar;
  for (const auto& o : scene.objects) {
    t[o.name + ".pos"] = ValueType::Vec3;
    t[o.name + ".quat"] = ValueType::Vec4;
    t[o.name + ".vel_linear"] = ValueType::Vec3;
    t[o.name + ".size"] = ValueType::Vec3;
    t[o.name + ".held"] = ValueType::Scalar;
    t[o.name + ".upright"] = ValueType::Scalar;
  }
  return t;
}

std::vector<std::pair<std::string, int>> base_observation_layout(const SceneSpec& scene) {
  std::vector<std::pair<std::string, int>> layout = {
      {"eef.pos", 3}, {"eef.euler", 3}, {"gripper.width", 1}};
  for (const auto& o : scene.objects) {
    layout.emplace_back(o.name + ".pos", 3);
    layout.emplace_back(o.name + ".quat", 4);
    layout.emplace_back(o.name + ".vel_linear", 3);
    layout.emplace_back(o.name + ".size", 3);
  }
  return layout;
}

int base_observation_dim(const SceneSpec& scene) {
  return 7 + 13 * static_cast<int>(scene.objects.size());
}

int computed_observation_dim(const TaskSpec& task, const SceneSpec& scene) {
  return base_observation_dim(scene) + static_cast<int>(task.observation.extras.size());
}

// Component streams hold the weighted values (weight * expr), mirroring the
// generated-code convention where reward_components stores the scaled terms;
// total = sum(components) - step_penalty.
RewardEval eval_reward(const RewardProgram& program, const FeatureTable& table, EvalDiag* diag) {
  RewardEval out;
  const int B = table.batch;
  out.totals.assign(B, 0.0);
  for (const auto& comp : program.components) {
    BatchValue<double> v = eval_batch<double>(*comp.expr, table, diag);
    if (v.is_bool || v.dim != 1) throw ContractError("reward component is not scalar");
    for (int b = 0; b < B; ++b) {
      v.data[b] *= comp.weight;
      out.totals[b] += v.data[b];
    }
    out.components[comp.name] = std::move(v.data);
  }
  out.components["total_reward"] = out.totals;  // pre-penalty sum, mirrors the log format
  for (int b = 0; b < B; ++b) out.totals[b] -= program.step_penalty;
  out.components["step_penalty"] = std::vector<double>(B, program.step_penalty);
  return out;
}

RewardEvalF eval_reward_f(const RewardProgram& program, const FeatureTable& table, EvalDiag* diag) {
  RewardEvalF out;
  const int B = table.batch;
  out.totals.assign(B, 0.0f);
  out.components.reserve(program.components.size());
  for (const auto& comp : program.components) {
    BatchValue<float> v = eval_batch<float>(*comp.expr, table, diag);
    if (v.is_bool || v.dim != 1) throw ContractError("reward component is not scalar");
    const float w = static_cast<float>(comp.weight);
    for (int b = 0; b < B; ++b) {
      v.data[b] *= w;
      out.totals[b] += v.data[b];
    }
    out.components.push_back(std::move(v.data));
  }
  const float p = static_cast<float>(program.step_penalty);
  for (int b = 0; b < B; ++b) out.totals[b] -= p;
  return out;
}

std::vector<uint8_t> eval_success(const SuccessProgram& program, const FeatureTable& table) {
  BatchValue<double> v = eval_batch<double>(*program.expr, table);
  if (!v.is_bool) throw ContractError("success program is not boolean");
  return std::move(v.bools);
}

Eigen::MatrixXf observation_matrix(const ObservationSpec& spec, const SceneSpec& scene,
                                   const FeatureTable& table, EvalDiag* diag) {
  const int B = table.batch;
  const auto layout = base_observation_layout(scene);
  int base = 0;
  for (const auto& [k, d] : layout) base += d;
  const int dim = base + static_cast<int>(spec.extras.size());
  Eigen::MatrixXf obs(B, dim);
  int col = 0;
  for (const auto& [key, d] : layout) {
    auto it = table.columns.find(key);
    if (it == table.columns.end()) throw ContractError("observation: missing feature " + key);
    const FeatureColumn& c = it->second;
    for (int b = 0; b < B; ++b)
      for (int k = 0; k < d; ++k)
        obs(b, col + k) = static_cast<float>(c.data[static_cast<size_t>(b) * c.stride + k]);
    col += d;
  }
  for (const auto& extra : spec.extras) {
    BatchValue<float> v = eval_batch<float>(*extra.expr, table, diag);
    if (v.is_bool || v.dim != 1) throw ContractError("observation extra is not scalar");
    for (int b = 0; b < B; ++b) obs(b, col) = v.data[b];
    ++col;
  }
  return obs;
}

bool ValidationReport::runnable() const { return hard_failures() == 0; }

int ValidationReport::flags() const {
  int n = 0;
  for (const auto& i : issues)
    if (!i.hard) ++n;
  return n;
}

int ValidationReport::hard_failures() const {
  int n = 0;
  for (const auto& i : issues)
    if (i.hard) ++n;
  return n;
}

std::string ValidationReport::to_string() const {
  if (issues.empty()) return "ok";
  std::string s;
  for (const auto& i : issues) {
    s += (i.hard ? "[fail] " : "[flag] ");
    s += i.what;
    s += "\n";
  }
  return s;
}

namespace {

bool valid_identifier(const std::string& s) {
  if (s.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  return true;
}

// Random plausible states for the success-triviality probe. Buffers owned
// here; the table views into them.
struct SampledStates {
  int batch;
  std::vector<double> eef_pos, eef_euler, eef_vel, gripper, table_height;
  struct Obj {
    std::vector<double> pos, quat, vel, size, held, upright;
  };
  std::vector<Obj> objs;
  FeatureTable table;

  SampledStates(const SceneSpec& scene, const Workspace& ws, int n, uint64_t seed) : batch(n) {
    Rng rng(seed);
    eef_pos.resize(3 * n);
    eef_euler.resize(3 * n);
    eef_vel.resize(3 * n);
    gripper.resize(n);
    table_height.assign(1, scene.table_height);
    for (int b = 0; b < n; ++b) {
      eef_pos[b * 3 + 0] = rng.uniform(ws.x0, ws.x1);
      eef_pos[b * 3 + 1] = rng.uniform(ws.y0, ws.y1);
      eef_pos[b * 3 + 2] = rng.uniform(scene.table_height, scene.table_height + 0.4);
      for (int k = 0; k < 3; ++k) {
        eef_euler[b * 3 + k] = rng.uniform(-0.5, 0.5);
        eef_vel[b * 3 + k] = rng.uniform(-0.5, 0.5);
      }
      gripper[b] = rng.chance(0.5) ? 0.0 : 1.0;
    }
    objs.resize(scene.objects.size());
    for (size_t oi = 0; oi < scene.objects.size(); ++oi) {
      auto& o = objs[oi];
      const auto& spec = scene.objects[oi];
      o.pos.resize(3 * n);
      o.quat.resize(4 * n);
      o.vel.resize(3 * n);
      o.size.resize(3 * n);
      o.held.resize(n);
      o.upright.resize(n);
      for (int b = 0; b < n; ++b) {
        o.pos[b * 3 + 0] = rng.uniform(ws.x0, ws.x1);
        o.pos[b * 3 + 1] = rng.uniform(ws.y0, ws.y1);
        o.pos[b * 3 + 2] = rng.uniform(scene.table_height + spec.size.z() * 0.5,
                                       scene.table_height + 0.35);
        const double yaw = rng.uniform(-M_PI, M_PI);
        o.quat[b * 4 + 0] = std::cos(yaw / 2);
        o.quat[b * 4 + 1] = 0.0;
        o.quat[b * 4 + 2] = 0.0;
        o.quat[b * 4 + 3] = std::sin(yaw / 2);
        for (int k = 0; k < 3; ++k) {
          o.vel[b * 3 + k] = rng.uniform(-0.5, 0.5);
          o.size[b * 3 + k] = spec.size[k];
        }
        o.held[b] = rng.chance(0.2) ? 1.0 : 0.0;
        o.upright[b] = rng.chance(0.9) ? 1.0 : 0.0;
      }
    }
    // At most one held object per env.
    for (int b = 0; b < n; ++b) {
      bool taken = false;
      for (auto& o : objs) {
        if (o.held[b] > 0.5) {
          if (taken)
            o.held[b] = 0.0;
          else
            taken = true;
        }
      }
    }
    table.batch = n;
    table.columns["eef.pos"] = {eef_pos.data(), 3, 3, ValueType::Vec3};
    table.columns["eef.euler"] = {eef_euler.data(), 3, 3, ValueType::Vec3};
    table.columns["eef.vel"] = {eef_vel.data(), 3, 3, ValueType::Vec3};
    table.columns["gripper.width"] = {gripper.data(), 1, 1, ValueType::Scalar};
    table.columns["table.height"] = {table_height.data(), 0, 1, ValueType::Scalar};
    for (size_t oi = 0; oi < scene.objects.size(); ++oi) {
      const std::string& nm = scene.objects[oi].name;
      auto& o = objs[oi];
      table.columns[nm + ".pos"] = {o.pos.data(), 3, 3, ValueType::Vec3};
      table.columns[nm + ".quat"] = {o.quat.data(), 4, 4, ValueType::Vec4};
      table.columns[nm + ".vel_linear"] = {o.vel.data(), 3, 3, ValueType::Vec3};
      table.columns[nm + ".size"] = {o.size.data(), 3, 3, ValueType::Vec3};
      table.columns[nm + ".held"] = {o.held.data(), 1, 1, ValueType::Scalar};
      table.columns[nm + ".upright"] = {o.upright.data(), 1, 1, ValueType::Scalar};
    }
  }
};

bool interval_ok(const Interval& r) { return r.lo <= r.hi; }

}  // namespace

ValidationReport validate_task_spec(const TaskSpec& task, const SceneSpec& scene,
                                    const Workspace& ws) {
  ValidationReport rep;
  auto hard = [&](const std::string& w) { rep.issues.push_back({true, w}); };
  auto flag = [&](const std::string& w) { rep.issues.push_back({false, w}); };

  const FeatureTypes types = scene_feature_types(scene);

  // Reward program.
  std::set<std::string> comp_names;
  for (const auto& comp : task.reward.components) {
    if (!valid_identifier(comp.name)) hard("reward component name is not an identifier: " + comp.name);
    if (!comp_names.insert(comp.name).second) hard("duplicate reward component: " + comp.name);
    if (!comp.expr) {
      hard("reward component has no expression: " + comp.name);
      continue;
    }
    try {
      if (typecheck(*comp.expr, types) != ValueType::Scalar)
        hard("reward component '" + comp.name + "' is not scalar");
    } catch (const TypeError& e) {
      hard("reward component '" + comp.name + "': " + e.what());
    }
    if (comp.weight == 0.0) flag("reward component '" + comp.name + "' has zero weight");
  }
  if (task.reward.step_penalty < 0.0) hard("negative step penalty");

  // Success program.
  bool success_ok = false;
  if (!task.success.expr) {
    hard("missing success program");
  } else {
    try {
      if (typecheck(*task.success.expr, types) != ValueType::Bool)
        hard("success program is not boolean");
      else
        success_ok = true;
    } catch (const TypeError& e) {
      hard(std::string("success program: ") + e.what());
    }
  }

  // Observation extras and dimension.
  std::set<std::string> extra_names;
  for (const auto& extra : task.observation.extras) {
    if (!valid_identifier(extra.name)) hard("observation extra name is not an identifier: " + extra.name);
    if (!extra_names.insert(extra.name).second) hard("duplicate observation extra: " + extra.name);
    if (!extra.expr) {
      hard("observation extra has no expression: " + extra.name);
      continue;
    }
    try {
      if (typecheck(*extra.expr, types) != ValueType::Scalar)
        hard("observation extra '" + extra.name + "' is not scalar");
    } catch (const TypeError& e) {
      hard("observation extra '" + extra.name + "': " + e.what());
    }
  }
  if (task.observation_dim != computed_observation_dim(task, scene)) {
    hard("observation_dim mismatch: declared " + std::to_string(task.observation_dim) +
         ", computed " + std::to_string(computed_observation_dim(task, scene)));
  }

  // Reset spec.
  std::set<std::string> placed;
  for (const auto& p : task.reset.placements) {
    if (!scene.find_object(p.object)) hard("reset places unknown object: " + p.object);
    if (placed.count(p.object)) hard("object placed twice: " + p.object);
    switch (p.mode) {
      case PlaceMode::Uniform:
        if (!interval_ok(p.x_range) || !interval_ok(p.y_range) || !interval_ok(p.yaw_range))
          hard("invalid uniform ranges for object: " + p.object);
        if (!p.outside_reach &&
            (p.x_range.lo < ws.x0 || p.x_range.hi > ws.x1 || p.y_range.lo < ws.y0 ||
             p.y_range.hi > ws.y1))
          hard("placement range outside workspace for object: " + p.object);
        break;
      case PlaceMode::Fixed:
        if (!p.outside_reach && (p.pos.x() < ws.x0 || p.pos.x() > ws.x1 || p.pos.y() < ws.y0 ||
                                 p.pos.y() > ws.y1))
          hard("fixed placement outside workspace for object: " + p.object);
        break;
      case PlaceMode::Relative: {
        if (!interval_ok(p.offset_x) || !interval_ok(p.offset_y))
          hard("invalid relative offsets for object: " + p.object);
        if (!placed.count(p.anchor)) hard("anchor '" + p.anchor + "' not placed before: " + p.object);
        break;
      }
    }
    placed.insert(p.object);
  }
  for (const auto& o : scene.objects) {
    if (!placed.count(o.name)) hard("scene object never placed by reset: " + o.name);
  }

  // Triviality probe.
  if (success_ok) {
    SampledStates samples(scene, ws, 1000, 0x5eedu);
    const auto bits = eval_success(task.success, samples.table);
    size_t on = 0;
    for (uint8_t b : bits) on += b;
    if (on == bits.size()) flag("success program is trivially true on random reachable states");
    if (on == 0) flag("success program is trivially false on random reachable states");
  }

  return rep;
}

// --- JSON --------------------------------------------------------------------

static nlohmann::json interval_json(const Interval& r) {
  return nlohmann::json::array({r.lo, r.hi});
}

static Interval interval_from(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 2) throw InputError(std::string("expected [lo, hi] for ") + what);
  return {j[0].get<double>(), j[1].get<double>()};
}

nlohmann::json task_to_json(const TaskSpec& task) {
  nlohmann::json j;
  j["task_description"] = task.task_description;
  nlohmann::json reset = nlohmann::json::array();
  for (const auto& p : task.reset.placements) {
    nlohmann::json jp;
    jp["object"] = p.object;
    switch (p.mode) {
      case PlaceMode::Uniform:
        jp["mode"] = "uniform";
        jp["x_range"] = interval_json(p.x_range);
        jp["y_range"] = interval_json(p.y_range);
        jp["yaw_range"] = interval_json(p.yaw_range);
        break;
      case PlaceMode::Fixed:
        jp["mode"] = "fixed";
        jp["pos"] = nlohmann::json::array({p.pos.x(), p.pos.y(), p.pos.z()});
        jp["yaw"] = p.yaw;
        break;
      case PlaceMode::Relative:
        jp["mode"] = "relative";
        jp["anchor"] = p.anchor;
        jp["offset_x_range"] = interval_json(p.offset_x);
        jp["offset_y_range"] = interval_json(p.offset_y);
        break;
    }
    if (p.outside_reach) jp["outside_reach"] = true;
    reset.push_back(std::move(jp));
  }
  j["reset"] = std::move(reset);
  j["success"] = task.success.expr ? print_expr(*task.success.expr) : "";
  nlohmann::json extras = nlohmann::json::array();
  for (const auto& e : task.observation.extras) {
    extras.push_back({{"name", e.name}, {"expr", print_expr(*e.expr)}});
  }
  j["observation_extras"] = std::move(extras);
  j["observation_dim"] = task.observation_dim;
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : task.reward.components) {
    comps.push_back({{"name", c.name}, {"expr", print_expr(*c.expr)}, {"weight", c.weight}});
  }
  j["reward"] = {{"components", std::move(comps)}, {"step_penalty", task.reward.step_penalty}};
  return j;
}

TaskSpec task_from_json(const nlohmann::json& j) {
  TaskSpec task;
  try {
    task.task_description = j.value("task_description", std::string());
    for (const auto& jp : j.at("reset")) {
      Placement p;
      p.object = jp.at("object").get<std::string>();
      const std::string mode = jp.at("mode").get<std::string>();
      if (mode == "uniform") {
        p.mode = PlaceMode::Uniform;
        p.x_range = interval_from(jp.at("x_range"), "x_range");
        p.y_range = interval_from(jp.at("y_range"), "y_range");
        p.yaw_range = interval_from(jp.at("yaw_range"), "yaw_range");
      } else if (mode == "fixed") {
        p.mode = PlaceMode::Fixed;
        const auto& pos = jp.at("pos");
        p.pos = {pos[0].get<double>(), pos[1].get<double>(), pos[2].get<double>()};
        p.yaw = jp.value("yaw", 0.0);
      } else if (mode == "relative") {
        p.mode = PlaceMode::Relative;
        p.anchor = jp.at("anchor").get<std::string>();
        p.offset_x = interval_from(jp.at("offset_x_range"), "offset_x_range");
        p.offset_y = interval_from(jp.at("offset_y_range"), "offset_y_range");
      } else {
        throw InputError("unknown placement mode: " + mode);
      }
      p.outside_reach = jp.value("outside_reach", false);
      task.reset.placements.push_back(std::move(p));
    }
    task.success.expr = parse_expr(j.at("success").get<std::string>());
    for (const auto& je : j.value("observation_extras", nlohmann::json::array())) {
      ObservationExtra e;
      e.name = je.at("name").get<std::string>();
      e.expr = parse_expr(je.at("expr").get<std::string>());
      task.observation.extras.push_back(std::move(e));
    }
    task.observation_dim = j.at("observation_dim").get<int>();
    const auto& jr = j.at("reward");
    for (const auto& jc : jr.at("components")) {
      RewardComponent c;
      c.name = jc.at("name").get<std::string>();
      c.expr = parse_expr(jc.at("expr").get<std::string>());
      c.weight = jc.at("weight").get<double>();
      task.reward.components.push_back(std::move(c));
    }
    task.reward.step_penalty = jr.value("step_penalty", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("task parse error: ") + e.what());
  }
  return task;
}

TaskSpec load_task(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw InputError("cannot parse task file " + path.string() + ": " + e.what());
  }
  return task_from_json(j);
}

void save_task(const TaskSpec& task, const std::filesystem::path& path) {
  write_text_file(path, task_to_json(task).dump(2) + "\n");
}

}  // namespace v2p
