#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "v2p/rng.hpp"
#include "v2p/task.hpp"

namespace v2p {

struct SimConfig {
  double dt = 1.0 / 60.0;
  int horizon = 300;
  int num_envs = 256;
  Workspace workspace;
  double gravity = 9.81;
  double grasp_margin = 0.02;          // added to max(size)/2 for the grasp radius
  double friction_decay = 8.0;         // per-second horizontal decay on table contact
  double max_step_translation = 0.05;  // m per step at action 1
  double max_step_rotation = 0.1;      // rad per step at action 1, before rotation scale
  double action_rotation_scale = 0.2;
};

inline SimConfig with_envs(SimConfig c, int n) {
  c.num_envs = n;
  return c;
}

// Batch x 7 action matrix: dpos (3), deuler (3), gripper (1), clipped to [-1,1].
using ActionBatch = Eigen::MatrixXf;

// Vectorized environment state, struct-of-arrays, doubles. Per-env layout:
// component k of env b lives at v[b*dim + k].
struct EnvStateBatch {
  int num_envs = 0;
  double table_height = 0.4;
  std::vector<std::string> object_names;

  std::vector<double> eef_pos;        // B x 3
  std::vector<double> eef_euler;      // B x 3
  std::vector<double> eef_vel;        // B x 3
  std::vector<double> gripper_width;  // B, 0 closed / 1 open
  std::vector<int> step_count;        // B

  struct ObjectArrays {
    std::vector<double> pos;           // B x 3
    std::vector<double> quat;          // B x 4 (w, x, y, z)
    std::vector<double> vel;           // B x 3
    std::vector<double> size;          // B x 3 (per env; randomization may jitter)
    std::vector<double> held;          // B, 0/1
    std::vector<double> upright;       // B, 0/1
    std::vector<double> grasp_offset;  // B x 3, valid while held
  };
  std::vector<ObjectArrays> objects;

  int num_objects() const { return static_cast<int>(objects.size()); }
  int object_index(const std::string& name) const;
};

// Support half-height of a box with half extents size/2 under rotation quat:
// the projection of the rotated half extents onto the world z axis.
double support_half_height(const Eigen::Vector4d& quat, const Eigen::Vector3d& size);
// Same projection onto world x / y (AABB half extents of the rotated box).
Eigen::Vector3d box_world_half_extents(const Eigen::Vector4d& quat, const Eigen::Vector3d& size);

// Samples every env independently from the placement distributions. Env b
// uses the substream derive_seed(seed, b), so the batch is bit-identical for
// a given seed regardless of partitioning.
EnvStateBatch reset(const ResetSpec& spec, const SceneSpec& scene, const SimConfig& config,
                    uint64_t seed);

// Re-samples a single env from an explicit episode seed. reset() routes
// through this; trajectory replay calls it directly.
void reset_env(EnvStateBatch& state, int env, const ResetSpec& spec, const SceneSpec& scene,
               const SimConfig& config, uint64_t episode_seed);

// Advances every env by one action. Rule order per env: clip, eef move,
// gripper, grasp, release, free flight, table contact, push, topple, count.
void step(EnvStateBatch& state, const ActionBatch& actions, const SimConfig& config);

// DSL feature bindings into the state arrays. Views remain valid while the
// batch is alive and unmodified.
FeatureTable features(const EnvStateBatch& state);

// Conservative initial-position bounds for an object under a reset spec.
struct PlacementBounds {
  double x_lo, x_hi, y_lo, y_hi;
};
PlacementBounds placement_bounds(const ResetSpec& reset, const std::string& object);

// Fixed, human-authored success programs used for evaluation only.
// Families: push_left, push_right, lift, tip_over, cover, uncover,
// push_next_to, drop_in_front, insert, slide_to, throw_into.
SuccessProgram builtin_ground_truth(const std::string& family, const SceneSpec& scene,
                                    const ResetSpec& reset);

bool family_needs_two_objects(const std::string& family);
const std::vector<std::string>& builtin_families();

// Canonical single-scene fixtures for the built-in families (block on a
// table, plus a target box for relational families) with pose tracks that
// reflect the family's motion.
SceneSpec make_builtin_scene(const std::string& family);
ResetSpec make_builtin_reset(const std::string& family, const SceneSpec& scene);

// --- actors -------------------------------------------------------------------

struct Actor {
  virtual ~Actor() = default;
  // obs is the observation matrix for the current state (may be ignored).
  virtual ActionBatch act(const EnvStateBatch& state, const Eigen::MatrixXf& obs,
                          bool deterministic) = 0;
  // Called when the evaluation loop starts a fresh batch of episodes.
  virtual void begin_rollout() {}
};

class RandomActor : public Actor {
 public:
  explicit RandomActor(uint64_t seed) : rng_(seed) {}
  ActionBatch act(const EnvStateBatch& state, const Eigen::MatrixXf& obs, bool) override;

 private:
  Rng rng_;
};

// Hand-written per-family controllers. Near-perfect on their family given the
// builtin scenes; used for probe trajectories, evaluation baselines and BC
// fixtures.
class ScriptedActor : public Actor {
 public:
  ScriptedActor(std::string family, const SceneSpec& scene, const ResetSpec& reset,
                const SimConfig& config);
  ActionBatch act(const EnvStateBatch& state, const Eigen::MatrixXf& obs, bool) override;

 private:
  std::string family_;
  double push_target_x_ = 0.0;  // push families: drive the object past this
  int primary_ = 0, secondary_ = -1;
  SimConfig config_;
};

// Test/diagnostic helpers: extract env `b` as a batch of one, and compare.
EnvStateBatch slice_env(const EnvStateBatch& state, int begin, int count);
bool states_equal(const EnvStateBatch& a, const EnvStateBatch& b);

}  // namespace v2p
