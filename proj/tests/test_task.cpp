#include "v2p/task.hpp"

#include <filesystem>

#include "doctest.h"
#include "v2p/binio.hpp"
#include "v2p/sim.hpp"

using namespace v2p;
namespace fs = std::filesystem;

namespace {

SceneSpec card_scene() {
  SceneSpec s;
  s.task_title = "lift up the card";
  s.caption = "a hand lifts a card off the table";
  s.table_height = 0.4;
  ObjectSpec card;
  card.name = "card";
  card.size = {0.08, 0.05, 0.01};
  card.mesh_diameter = 0.09;
  card.scale_ratio = 1.0;
  card.pose_track.samples = {{0, {0.4, 0.0, 0.405}, {1, 0, 0, 0}},
                             {60, {0.4, 0.0, 0.6}, {1, 0, 0, 0}}};
  s.objects.push_back(card);
  return s;
}

TaskSpec lift_task(const SceneSpec& scene) {
  TaskSpec t;
  t.task_description = "lift up the card";
  Placement p;
  p.object = "card";
  p.mode = PlaceMode::Uniform;
  p.x_range = {0.35, 0.45};
  p.y_range = {-0.05, 0.05};
  p.yaw_range = {0, 0};
  t.reset.placements.push_back(p);
  t.success.expr = parse_expr(
      "(card.pos[2] - table.height) > max(card.size[0], max(card.size[1], card.size[2])) / 2");
  t.observation.extras.push_back({"dist_to_card", parse_expr("norm(card.pos - eef.pos)")});
  t.observation_dim = base_observation_dim(scene) + 1;
  t.reward.components.push_back(
      {"reach", parse_expr("1 - tanh(8.0 * norm(card.pos - eef.pos))"), 0.5});
  t.reward.components.push_back({"height", parse_expr("card.pos[2] - table.height"), 1.0});
  t.reward.step_penalty = 0.01;
  return t;
}

}  // namespace

TEST_CASE("observation dims: base layout and extras") {
  const SceneSpec scene = card_scene();
  CHECK(base_observation_dim(scene) == 20);  // 7 + 13
  TaskSpec t = lift_task(scene);
  CHECK(computed_observation_dim(t, scene) == 21);
  TaskSpec two = t;
  two.observation.extras.push_back({"h", parse_expr("card.pos[2]")});
  CHECK(computed_observation_dim(two, scene) == base_observation_dim(scene) + 2);
}

TEST_CASE("observation matrix layout: base prefix then extras in order") {
  const SceneSpec scene = card_scene();
  TaskSpec t = lift_task(scene);
  const SimConfig config;
  auto state = reset(t.reset, scene, with_envs(config, 3), 7);
  const auto table = features(state);
  const auto obs = observation_matrix(t.observation, scene, table);
  CHECK(obs.rows() == 3);
  CHECK(obs.cols() == 21);
  // base prefix: eef.pos(3), eef.euler(3), gripper.width(1), card pos/quat/vel/size
  for (int b = 0; b < 3; ++b) {
    CHECK(obs(b, 0) == doctest::Approx(state.eef_pos[b * 3 + 0]));
    CHECK(obs(b, 6) == doctest::Approx(state.gripper_width[b]));
    CHECK(obs(b, 7) == doctest::Approx(state.objects[0].pos[b * 3 + 0]));
    CHECK(obs(b, 10) == doctest::Approx(state.objects[0].quat[b * 4 + 0]));
  }
  // extras reorder => columns permute, base prefix unchanged
  TaskSpec t2 = t;
  t2.observation.extras.insert(t2.observation.extras.begin(),
                               {"h", parse_expr("card.pos[2]")});
  t2.observation_dim = 22;
  const auto obs2 = observation_matrix(t2.observation, scene, table);
  for (int b = 0; b < 3; ++b) {
    CHECK(obs2(b, 20) == doctest::Approx(state.objects[0].pos[b * 3 + 2]));
    CHECK(obs2(b, 21) == obs(b, 20));
  }
}

TEST_CASE("eval_reward: totals and named components") {
  const SceneSpec scene = card_scene();
  const SimConfig config;
  auto state = reset(lift_task(scene).reset, scene, with_envs(config, 2), 3);
  const auto table = features(state);

  RewardProgram prog;
  prog.components.push_back({"unit", parse_expr("1.0"), 0.3});
  prog.step_penalty = 0.01;
  const auto ev = eval_reward(prog, table);
  CHECK(ev.totals[0] == doctest::Approx(0.29).epsilon(1e-12));
  CHECK(ev.components.count("unit") == 1);
  CHECK(ev.components.count("total_reward") == 1);
  CHECK(ev.components.count("step_penalty") == 1);
  CHECK(ev.components.at("step_penalty")[0] == 0.01);

  RewardProgram zero;
  zero.step_penalty = 0.02;
  const auto evz = eval_reward(zero, table);
  for (double v : evz.totals) CHECK(v == doctest::Approx(-0.02));

  // paper-shaped weights evaluate with those exact scales
  RewardProgram shaped;
  shaped.components.push_back({"dist_grasp_reward", parse_expr("1.0"), 0.15});
  shaped.components.push_back({"dist_to_target", parse_expr("1.0"), 0.25});
  shaped.components.push_back({"vel_reward", parse_expr("1.0"), 0.30});
  shaped.components.push_back({"final_position_reward", parse_expr("1.0"), 0.70});
  shaped.step_penalty = 0.01;
  const auto evs = eval_reward(shaped, table);
  CHECK(evs.totals[0] == doctest::Approx(0.15 + 0.25 + 0.30 + 0.70 - 0.01).epsilon(1e-12));
}

TEST_CASE("eval_reward is invariant under component reordering") {
  const SceneSpec scene = card_scene();
  const SimConfig config;
  auto state = reset(lift_task(scene).reset, scene, with_envs(config, 4), 5);
  const auto table = features(state);
  RewardProgram a;
  a.components.push_back({"reach", parse_expr("1 - tanh(4 * norm(card.pos - eef.pos))"), 0.4});
  a.components.push_back({"height", parse_expr("card.pos[2] - table.height"), 1.2});
  a.step_penalty = 0.01;
  RewardProgram b;
  b.components = {a.components[1], a.components[0]};
  b.step_penalty = a.step_penalty;
  const auto ea = eval_reward(a, table);
  const auto eb = eval_reward(b, table);
  for (int k = 0; k < 4; ++k) CHECK(ea.totals[k] == doctest::Approx(eb.totals[k]).epsilon(1e-12));
}

TEST_CASE("eval_success: lift rule on grounded and raised card") {
  const SceneSpec scene = card_scene();
  TaskSpec t = lift_task(scene);
  const SimConfig config;
  auto state = reset(t.reset, scene, with_envs(config, 2), 11);
  // env 1: raise the card by 1 m
  state.objects[0].pos[1 * 3 + 2] += 1.0;
  const auto table = features(state);
  const auto bits = eval_success(t.success, table);
  CHECK(bits[0] == 0);
  CHECK(bits[1] == 1);
  // determinism: same batch, same answer
  CHECK(eval_success(t.success, table) == bits);
}

TEST_CASE("eval_success: fork-in-box conjunction on a handcrafted state") {
  SceneSpec s;
  s.task_title = "insert fork into storage box";
  s.table_height = 0.4;
  ObjectSpec fork;
  fork.name = "fork";
  fork.size = {0.02, 0.15, 0.02};
  fork.mesh_diameter = 0.15;
  fork.scale_ratio = 1.0;
  fork.pose_track.samples = {{0, {0.4, 0, 0.41}, {1, 0, 0, 0}}};
  ObjectSpec box;
  box.name = "storage_box";
  box.size = {0.2, 0.2, 0.1};
  box.mesh_diameter = 0.3;
  box.scale_ratio = 1.0;
  box.pose_track.samples = {{0, {0.6, 0, 0.45}, {1, 0, 0, 0}}};
  s.objects = {fork, box};

  SuccessProgram prog{parse_expr(
      "norm((fork.pos - storage_box.pos)[0:2]) < 0.01 & "
      "(fork.pos[2] - fork.size[2] / 2) < (storage_box.pos[2] + storage_box.size[2] / 2) & "
      "(fork.pos[2] + fork.size[2] / 2) > (storage_box.pos[2] - storage_box.size[2] / 2)")};

  ResetSpec r;
  Placement pf;
  pf.object = "fork";
  pf.mode = PlaceMode::Fixed;
  pf.pos = {0.6, 0.0, 0.41};  // inside the box footprint
  Placement pb;
  pb.object = "storage_box";
  pb.mode = PlaceMode::Fixed;
  pb.pos = {0.6, 0.0, 0.45};
  r.placements = {pf, pb};
  SimConfig config;
  auto state = reset(r, s, with_envs(config, 1), 1);
  const auto bits = eval_success(prog, features(state));
  CHECK(bits[0] == 1);

  // moving the fork away breaks the xy conjunct
  state.objects[0].pos[0] = 0.7;
  CHECK(eval_success(prog, features(state))[0] == 0);
}

TEST_CASE("validate_task_spec: clean spec is runnable without flags") {
  const SceneSpec scene = card_scene();
  const auto rep = validate_task_spec(lift_task(scene), scene);
  CHECK(rep.runnable());
  CHECK(rep.flags() == 0);
}

TEST_CASE("validate_task_spec: trivially-true success is flagged, not fatal") {
  const SceneSpec scene = card_scene();
  TaskSpec t = lift_task(scene);
  t.success.expr = parse_expr("1.0 < 2.0");
  const auto rep = validate_task_spec(t, scene);
  CHECK(rep.runnable());
  CHECK(rep.flags() >= 1);
  bool found = false;
  for (const auto& i : rep.issues) found |= i.what.find("trivially true") != std::string::npos;
  CHECK(found);
}

TEST_CASE("validate_task_spec: unknown object is a hard failure with a span") {
  const SceneSpec scene = card_scene();
  TaskSpec t = lift_task(scene);
  t.reward.components[0].expr = parse_expr("1 - tanh(8.0 * norm(cupp.pos - eef.pos))");
  const auto rep = validate_task_spec(t, scene);
  CHECK(!rep.runnable());
  bool found = false;
  for (const auto& i : rep.issues)
    found |= i.hard && i.what.find("cupp") != std::string::npos &&
             i.what.find("[") != std::string::npos;
  CHECK(found);
}

TEST_CASE("validate_task_spec: structural failures") {
  const SceneSpec scene = card_scene();
  TaskSpec t = lift_task(scene);
  t.observation_dim = 5;
  CHECK(!validate_task_spec(t, scene).runnable());

  t = lift_task(scene);
  t.reset.placements.clear();
  CHECK(!validate_task_spec(t, scene).runnable());

  t = lift_task(scene);
  t.reset.placements[0].x_range = {0.0, 2.0};  // outside workspace
  CHECK(!validate_task_spec(t, scene).runnable());
  t.reset.placements[0].outside_reach = true;
  CHECK(validate_task_spec(t, scene).runnable());

  t = lift_task(scene);
  Placement rel;
  rel.object = "card";
  rel.mode = PlaceMode::Relative;
  rel.anchor = "card";
  t.reset.placements = {rel};
  CHECK(!validate_task_spec(t, scene).runnable());  // anchor must precede

  t = lift_task(scene);
  t.reward.components[0].weight = 0.0;
  const auto rep = validate_task_spec(t, scene);
  CHECK(rep.runnable());
  CHECK(rep.flags() >= 1);
}

TEST_CASE("task json round trip") {
  const SceneSpec scene = card_scene();
  const TaskSpec t = lift_task(scene);
  const auto dir = fs::temp_directory_path() / "v2p_task_test";
  fs::create_directories(dir);
  save_task(t, dir / "task.json");
  const TaskSpec u = load_task(dir / "task.json");
  CHECK(u.task_description == t.task_description);
  CHECK(u.observation_dim == t.observation_dim);
  REQUIRE(u.reward.components.size() == 2);
  CHECK(u.reward.components[0].name == "reach");
  CHECK(u.reward.components[0].weight == 0.5);
  CHECK(expr_equal(*u.success.expr, *t.success.expr));
  CHECK(u.reset.placements.size() == 1);
  CHECK(u.reset.placements[0].x_range.lo == 0.35);
  // byte stability
  save_task(u, dir / "task2.json");
  CHECK(read_text_file(dir / "task.json") == read_text_file(dir / "task2.json"));
  fs::remove_all(dir);
}
