#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "v2p/dsl_eval.hpp"
#include "v2p/scene.hpp"

namespace v2p {

struct RewardComponent {
  std::string name;
  ExprPtr expr;
  double weight = 1.0;
};

// total = sum_i weight_i * expr_i - step_penalty
struct RewardProgram {
  std::vector<RewardComponent> components;
  double step_penalty = 0.0;
};

struct SuccessProgram {
  ExprPtr expr;
};

struct ObservationExtra {
  std::string name;
  ExprPtr expr;
};

struct ObservationSpec {
  std::vector<ObservationExtra> extras;
};

enum class PlaceMode { Uniform, Fixed, Relative };

struct Interval {
  double lo = 0.0, hi = 0.0;
};

struct Placement {
  std::string object;
  PlaceMode mode = PlaceMode::Uniform;
  // uniform
  Interval x_range, y_range, yaw_range;
  // fixed
  Eigen::Vector3d pos = Eigen::Vector3d::Zero();
  double yaw = 0.0;
  // relative
  std::string anchor;
  Interval offset_x, offset_y;
  // Allows ranges outside the eef workspace (unreachable-goal placement).
  bool outside_reach = false;
};

// Objects are placed in declaration order; anchors must precede dependents.
struct ResetSpec {
  std::vector<Placement> placements;

  const Placement* find(const std::string& object) const;
};

struct TaskSpec {
  std::string task_description;
  ResetSpec reset;
  SuccessProgram success;
  ObservationSpec observation;
  int observation_dim = 0;
  RewardProgram reward;
};

// Axis-aligned eef workspace bounds. SimConfig embeds one of these.
struct Workspace {
  double x0 = 0.1, x1 = 0.9;
  double y0 = -0.4, y1 = 0.4;
  double z0 = 0.4, z1 = 1.0;
};

// The closed feature namespace for a scene: eef.pos/euler/vel, gripper.width,
// table.height, and per object pos/quat/vel_linear/size/held/upright.
FeatureTypes scene_feature_types(const SceneSpec& scene);

// Base observation layout: eef.pos, eef.euler, gripper.width, then per object
// pos, quat, vel_linear, size in scene declaration order.
std::vector<std::pair<std::string, int>> base_observation_layout(const SceneSpec& scene);
int base_observation_dim(const SceneSpec& scene);
int computed_observation_dim(const TaskSpec& task, const SceneSpec& scene);

struct RewardEval {
  std::vector<double> totals;
  std::map<std::string, std::vector<double>> components;  // includes total_reward, step_penalty
};

RewardEval eval_reward(const RewardProgram& program, const FeatureTable& table,
                       EvalDiag* diag = nullptr);

// Float-precision totals and component rows for the training path.
struct RewardEvalF {
  std::vector<float> totals;
  std::vector<std::vector<float>> components;  // component order of the program
};
RewardEvalF eval_reward_f(const RewardProgram& program, const FeatureTable& table,
                          EvalDiag* diag = nullptr);

std::vector<uint8_t> eval_success(const SuccessProgram& program, const FeatureTable& table);

// Batch-major observation matrix (batch x observation_dim), float precision.
Eigen::MatrixXf observation_matrix(const ObservationSpec& spec, const SceneSpec& scene,
                                   const FeatureTable& table, EvalDiag* diag = nullptr);

struct ValidationIssue {
  bool hard = false;
  std::string what;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;

  bool runnable() const;
  int flags() const;
  int hard_failures() const;
  std::string to_string() const;
};

// Static checks plus a triviality probe of the success program on random
// reachable states. Runnable == no hard failures.
ValidationReport validate_task_spec(const TaskSpec& task, const SceneSpec& scene,
                                    const Workspace& ws = Workspace());

nlohmann::json task_to_json(const TaskSpec& task);
TaskSpec task_from_json(const nlohmann::json& j);
TaskSpec load_task(const std::filesystem::path& path);
void save_task(const TaskSpec& task, const std::filesystem::path& path);

}  // namespace v2p
