#include "v2p/ppo.hpp"

#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "v2p/binio.hpp"

using namespace v2p;
namespace fs = std::filesystem;

namespace {

// O(T^2) oracle: A_t = sum_k (gamma*lambda)^k * delta_{t+k}, chain cut at dones.
std::vector<double> gae_oracle(const std::vector<double>& r, const std::vector<double>& v,
                               const std::vector<uint8_t>& d, double gamma, double lam) {
  const size_t T = r.size();
  std::vector<double> adv(T, 0.0);
  for (size_t t = 0; t < T; ++t) {
    double prod = 1.0;
    for (size_t k = t; k < T; ++k) {
      const double nonterm = d[k] ? 0.0 : 1.0;
      const double delta = r[k] + gamma * v[k + 1] * nonterm - v[k];
      adv[t] += prod * delta;
      if (d[k]) break;
      prod *= gamma * lam;
    }
  }
  return adv;
}

TaskSpec reach_task(const SceneSpec& scene) {
  TaskSpec t;
  t.task_description = "reach the block";
  Placement p;
  p.object = scene.objects[0].name;
  p.mode = PlaceMode::Fixed;
  p.pos = {0.45, 0.05, 0.0};
  t.reset.placements.push_back(p);
  t.success.expr = parse_expr("norm(block.pos - eef.pos) < 0.05");
  t.observation_dim = base_observation_dim(scene);
  t.reward.components.push_back(
      {"reach", parse_expr("0 - norm(block.pos - eef.pos)"), 1.0});
  t.reward.step_penalty = 0.0;
  return t;
}

}  // namespace

TEST_CASE("gae: lambda 0 collapses to one-step TD residuals") {
  std::vector<double> r = {1.0, 2.0, 3.0};
  std::vector<double> v = {0.5, 1.0, 1.5, 2.0};
  std::vector<uint8_t> d = {0, 0, 0};
  const auto adv = gae_advantages(r, v, d, 0.9, 0.0);
  for (size_t t = 0; t < 3; ++t) {
    CHECK(adv[t] == doctest::Approx(r[t] + 0.9 * v[t + 1] - v[t]).epsilon(1e-15));
  }
}

TEST_CASE("gae: lambda 1, gamma 1, zero values gives reward-to-go") {
  std::vector<double> r = {1.0, 2.0, 3.0, 4.0};
  std::vector<double> v(5, 0.0);
  std::vector<uint8_t> d = {0, 0, 0, 0};
  const auto adv = gae_advantages(r, v, d, 1.0, 1.0);
  CHECK(adv[0] == doctest::Approx(10.0));
  CHECK(adv[1] == doctest::Approx(9.0));
  CHECK(adv[3] == doctest::Approx(4.0));
}

TEST_CASE("gae matches the O(T^2) oracle on 200 random sequences") {
  Rng rng(1001);
  for (int trial = 0; trial < 200; ++trial) {
    const int T = 5 + rng.uniform_int(96);
    std::vector<double> r(T), v(T + 1);
    std::vector<uint8_t> d(T);
    for (int t = 0; t < T; ++t) {
      r[t] = rng.uniform(-2, 2);
      v[t] = rng.uniform(-1, 1);
      d[t] = rng.chance(0.07) ? 1 : 0;
    }
    v[T] = rng.uniform(-1, 1);
    const double gamma = rng.uniform(0.8, 1.0);
    const double lam = rng.uniform(0.0, 1.0);
    const auto got = gae_advantages(r, v, d, gamma, lam);
    const auto want = gae_oracle(r, v, d, gamma, lam);
    for (int t = 0; t < T; ++t) CHECK(std::abs(got[t] - want[t]) < 1e-8);
  }
}

TEST_CASE("policy_act: zero parameters give zero mean action; determinism") {
  Policy policy;
  policy.net = PolicyNet<float>(6, 7, 8, 8, 3);
  std::fill(policy.net.theta().begin(), policy.net.theta().end(), 0.0f);
  policy.norm.init(6);
  Eigen::MatrixXf obs = Eigen::MatrixXf::Random(4, 6);
  const auto a1 = policy_act(policy, obs, true);
  CHECK(a1.cwiseAbs().maxCoeff() == 0.0f);
  const auto a2 = policy_act(policy, obs, true);
  CHECK((a1 - a2).cwiseAbs().maxCoeff() == 0.0f);
  CHECK_THROWS_AS(policy_act(policy, Eigen::MatrixXf::Random(4, 5), true), ContractError);
}

TEST_CASE("policy_act: stochastic sample mean concentrates on the mean head") {
  Policy policy;
  policy.net = PolicyNet<float>(3, 7, 8, 8, 7);
  policy.norm.init(3);
  // widen the pre-clip range check by keeping actions interior: zero params
  std::fill(policy.net.theta().begin(), policy.net.theta().end(), 0.0f);
  policy.net.log_std().setConstant(std::log(0.1f));
  Eigen::MatrixXf obs = Eigen::MatrixXf::Zero(1, 3);
  Rng rng(5);
  const int n = 100000;
  double sum = 0;
  for (int k = 0; k < n; ++k) {
    Eigen::MatrixXf raw(1, 7);
    policy_act(policy, obs, false, &rng, &raw);
    sum += raw(0, 0);
  }
  const double mean = sum / n;
  CHECK(std::abs(mean - 0.0) < 3.0 * 0.1 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("ppo surrogate gradient matches central finite differences") {
  // Tiny 2x8 network in double precision on a frozen synthetic minibatch.
  PolicyNet<double> net(5, 3, 8, 8, 42);
  Rng rng(777);
  const int B = 16;
  PpoBatch<double> batch;
  batch.obs.resize(B, 5);
  batch.actions.resize(B, 3);
  batch.old_logp.resize(B);
  batch.advantages.resize(B);
  batch.returns.resize(B);
  for (int b = 0; b < B; ++b) {
    for (int k = 0; k < 5; ++k) batch.obs(b, k) = rng.uniform(-1, 1);
    for (int k = 0; k < 3; ++k) batch.actions(b, k) = rng.uniform(-1, 1);
    batch.advantages(b) = rng.uniform(-2, 2);
    batch.returns(b) = rng.uniform(-1, 1);
  }
  // old log-probs from a slightly perturbed net so ratios are non-trivial
  {
    PolicyNet<double> old_net = net;
    for (auto& p : old_net.theta()) p += rng.uniform(-0.01, 0.01);
    const auto fwd = old_net.forward(batch.obs);
    batch.old_logp = gaussian_logp(old_net, fwd.mean, batch.actions);
  }

  const double clip = 0.2, vcoef = 1.0;
  const auto analytic = ppo_loss_and_grad(net, batch, clip, vcoef);
  const size_t P = net.param_count();
  std::vector<double> fd(P);
  const double h = 1e-6;
  for (size_t k = 0; k < P; ++k) {
    PolicyNet<double> plus = net, minus = net;
    plus.theta()[k] += h;
    minus.theta()[k] -= h;
    fd[k] = (ppo_loss_value(plus, batch, clip, vcoef) -
             ppo_loss_value(minus, batch, clip, vcoef)) /
            (2 * h);
  }
  double num = 0, den = 0;
  for (size_t k = 0; k < P; ++k) {
    num += (analytic.grad[k] - fd[k]) * (analytic.grad[k] - fd[k]);
    den += fd[k] * fd[k];
  }
  const double rel = std::sqrt(num) / std::max(1e-12, std::sqrt(den));
  CHECK(rel < 1e-3);
}

TEST_CASE("zero advantages give an exactly zero policy surrogate gradient") {
  PolicyNet<double> net(4, 2, 8, 8, 9);
  Rng rng(4);
  const int B = 8;
  PpoBatch<double> batch;
  batch.obs = PolicyNet<double>::Mat::Random(B, 4);
  batch.actions = PolicyNet<double>::Mat::Random(B, 2);
  batch.old_logp.resize(B);
  const auto fwd = net.forward(batch.obs);
  batch.old_logp = gaussian_logp(net, fwd.mean, batch.actions);
  batch.advantages = PolicyNet<double>::Vec::Zero(B);
  batch.returns = fwd.value;  // also zero value error
  const auto loss = ppo_loss_and_grad(net, batch, 0.2, 1.0);
  for (double g : loss.grad) CHECK(g == 0.0);
}

TEST_CASE("training reward decomposition is exact over a captured rollout") {
  const auto scene = make_builtin_scene("push_right");
  TaskSpec task = reach_task(scene);
  task.reward.components.push_back({"bonus", parse_expr("clamp(block.pos[0], 0, 1)"), 0.25});
  task.reward.step_penalty = 0.01;
  TrainConfig config;
  config.sim = with_envs(SimConfig{}, 4);
  config.sim.horizon = 16;
  config.rollout_length = 16;
  config.total_env_steps = 64;  // one update
  config.capture_trace = true;
  config.seed = 12;
  const auto result = train(task, scene, config);
  REQUIRE(result.trace.has_value());
  const auto& tr = *result.trace;
  const size_t n = tr.train_reward.size();
  REQUIRE(n == 64);
  const float penalty = tr.step_penalty;
  for (size_t k = 0; k < n; ++k) {
    float acc = 0.0f;
    for (const auto& comp : tr.component_values) acc += comp[k];
    acc -= penalty;
    if (tr.success[k]) acc += tr.lambda_success;
    CHECK(acc == tr.train_reward[k]);
  }
}

TEST_CASE("a shaped step with success earns 100.29") {
  const auto scene = make_builtin_scene("push_right");
  TaskSpec task = reach_task(scene);
  task.reward.components[0] = {"shaped", parse_expr("0.3"), 1.0};
  task.reward.step_penalty = 0.01;
  task.success.expr = parse_expr("1.0 < 2.0");  // always true
  TrainConfig config;
  config.sim = with_envs(SimConfig{}, 2);
  config.sim.horizon = 4;
  config.rollout_length = 4;
  config.total_env_steps = 8;
  config.capture_trace = true;
  config.seed = 1;
  const auto result = train(task, scene, config);
  REQUIRE(result.trace.has_value());
  for (float r : result.trace->train_reward) {
    CHECK(r == doctest::Approx(100.29).epsilon(1e-6));
  }
}

TEST_CASE("zero-budget training returns the initialized policy and no updates") {
  const auto scene = make_builtin_scene("push_right");
  const TaskSpec task = reach_task(scene);
  TrainConfig config;
  config.sim = with_envs(SimConfig{}, 2);
  config.total_env_steps = 0;
  const auto result = train(task, scene, config);
  CHECK(result.logs.updates.empty());
  CHECK(result.logs.episodes.empty());
  CHECK(!result.logs.diverged);
  CHECK(result.policy.net.obs_dim() == base_observation_dim(scene));
}

TEST_CASE("training on a reach task improves the mean return") {
  const auto scene = make_builtin_scene("push_right");
  const TaskSpec task = reach_task(scene);
  TrainConfig config;
  config.sim = with_envs(SimConfig{}, 32);
  config.sim.horizon = 8;
  config.rollout_length = 8;
  config.total_env_steps = 32 * 8 * 50;  // 50 updates
  config.seed = 3;
  const auto result = train(task, scene, config);
  REQUIRE(result.logs.updates.size() == 50);
  CHECK(!result.logs.diverged);
  double first = 0, last = 0;
  for (int k = 0; k < 10; ++k) {
    first += result.logs.updates[k].mean_return;
    last += result.logs.updates[40 + k].mean_return;
  }
  CHECK(last / 10 > first / 10);
}

TEST_CASE("divergent training is flagged, not thrown") {
  const auto scene = make_builtin_scene("push_right");
  const TaskSpec task = reach_task(scene);
  TrainConfig config;
  config.sim = with_envs(SimConfig{}, 4);
  config.sim.horizon = 8;
  config.rollout_length = 8;
  config.total_env_steps = 4 * 8 * 10;
  config.learning_rate = 1e18;  // guaranteed blow-up
  config.grad_clip = 0;         // disable the safety net for this test
  const auto result = train(task, scene, config);
  CHECK(result.logs.diverged);
}

TEST_CASE("train rejects a non-runnable task") {
  const auto scene = make_builtin_scene("push_right");
  TaskSpec task = reach_task(scene);
  task.observation_dim = 3;
  CHECK_THROWS_AS(train(task, scene, TrainConfig{}), InputError);
}

TEST_CASE("collect_component_stats: split groups and absence") {
  std::vector<std::string> names = {"steady", "spiky"};
  std::vector<EpisodeStats> eps;
  // constant 0.1 over 10 steps -> accumulated 1.0 per episode in both groups
  for (int k = 0; k < 4; ++k) {
    EpisodeStats e;
    e.success = k % 2 == 0;
    e.steps = 10;
    e.component_sums = {1.0, k * 0.5};
    eps.push_back(e);
  }
  auto stats = collect_component_stats(names, eps);
  CHECK(stats["steady"].on_success.present);
  CHECK(stats["steady"].on_success.mean == doctest::Approx(1.0));
  CHECK(stats["steady"].on_failure.mean == doctest::Approx(1.0));
  CHECK(stats["spiky"].on_success.min == 0.0);
  CHECK(stats["spiky"].on_success.max == 1.0);
  CHECK(stats["spiky"].on_failure.last == 1.5);
  CHECK(stats["spiky"].on_failure.mean > stats["spiky"].on_success.mean);
  CHECK(stats["spiky"].success_exceeds_failure == false);

  // all episodes fail -> success-group stats absent
  for (auto& e : eps) e.success = false;
  stats = collect_component_stats(names, eps);
  CHECK(!stats["steady"].on_success.present);
  CHECK(stats["steady"].on_failure.present);
  CHECK(stats["steady"].success_exceeds_failure == false);
}

TEST_CASE("evaluate: protocol shape and always-true success") {
  const auto scene = make_builtin_scene("push_right");
  const TaskSpec task = reach_task(scene);
  TrainConfig config;
  config.sim = with_envs(SimConfig{}, 64);  // must not affect evaluation
  config.sim.horizon = 10;
  Policy policy;
  policy.net = PolicyNet<float>(base_observation_dim(scene), 7, 8, 8, 2);
  policy.norm.init(base_observation_dim(scene));
  SuccessProgram always{parse_expr("1.0 < 2.0")};
  const auto rep = evaluate(policy, task, always, scene, config, 99);
  CHECK(rep.per_seed.size() == 3);
  CHECK(rep.episodes_per_seed == 10);
  CHECK(rep.mean == 1.0);
}

TEST_CASE("evaluate is invariant to the configured env batch size") {
  const auto scene = make_builtin_scene("lift");
  const auto reset_spec = make_builtin_reset("lift", scene);
  const auto gt = builtin_ground_truth("lift", scene, reset_spec);
  TrainConfig a, b;
  a.sim = with_envs(SimConfig{}, 16);
  b.sim = with_envs(SimConfig{}, 256);
  a.sim.horizon = b.sim.horizon = 60;
  ScriptedActor actor_a("lift", scene, reset_spec, a.sim);
  ScriptedActor actor_b("lift", scene, reset_spec, b.sim);
  const auto ra = evaluate_actor(actor_a, reset_spec, gt, scene, a, 5);
  const auto rb = evaluate_actor(actor_b, reset_spec, gt, scene, b, 5);
  CHECK(ra.per_seed == rb.per_seed);
}

TEST_CASE("scripted lift scores high, random policy scores low under ground truth") {
  const auto scene = make_builtin_scene("lift");
  const auto reset_spec = make_builtin_reset("lift", scene);
  const auto gt = builtin_ground_truth("lift", scene, reset_spec);
  TrainConfig config;
  config.sim = with_envs(SimConfig{}, 10);
  ScriptedActor scripted("lift", scene, reset_spec, config.sim);
  const auto good = evaluate_actor(scripted, reset_spec, gt, scene, config, 17);
  CHECK(good.mean >= 0.9);
  RandomActor random(23);
  const auto bad = evaluate_actor(random, reset_spec, gt, scene, config, 17);
  CHECK(bad.mean < 0.1);
}

TEST_CASE("policy checkpoint round trip and compatibility gate") {
  const auto dir = fs::temp_directory_path() / "v2p_ppo_ckpt";
  fs::create_directories(dir);
  Policy policy;
  policy.net = PolicyNet<float>(12, 7, 16, 16, 77);
  Eigen::MatrixXf warm = Eigen::MatrixXf::Random(32, 12);
  policy.norm.init(12);
  policy.norm.update(warm);
  policy.frame_stack = 2;
  save_policy(policy, dir / "p.bin");
  const Policy loaded = load_policy(dir / "p.bin");
  CHECK(loaded.net.theta() == policy.net.theta());
  CHECK(loaded.frame_stack == 2);
  CHECK(loaded.norm.count() == policy.norm.count());
  CHECK((loaded.norm.mean() - policy.norm.mean()).norm() == 0.0);
  CHECK(fs::exists(dir / "p.bin.json"));

  // corrupt the magic
  auto bytes = read_text_file(dir / "p.bin");
  bytes[0] = 'X';
  write_text_file(dir / "p.bad", bytes);
  CHECK_THROWS_AS(load_policy(dir / "p.bad"), InputError);

  // incompatible observation layout version
  {
    auto os = open_out(dir / "p.vers");
    os.write("V2PPOLC1", 8);
    write_pod<int32_t>(os, 12);
    write_pod<int32_t>(os, 7);
    write_pod<int32_t>(os, 16);
    write_pod<int32_t>(os, 16);
    write_pod<int32_t>(os, 1);
    const std::string v = "someone-elses-layout";
    write_pod<uint32_t>(os, static_cast<uint32_t>(v.size()));
    os.write(v.data(), static_cast<std::streamsize>(v.size()));
  }
  CHECK_THROWS_AS(load_policy(dir / "p.vers"), CompatError);
  fs::remove_all(dir);
}

TEST_CASE("train logs serialize to jsonl with a summary line") {
  const auto scene = make_builtin_scene("push_right");
  const TaskSpec task = reach_task(scene);
  TrainConfig config;
  config.sim = with_envs(SimConfig{}, 4);
  config.sim.horizon = 8;
  config.rollout_length = 8;
  config.total_env_steps = 64;
  const auto result = train(task, scene, config);
  const auto dir = fs::temp_directory_path() / "v2p_ppo_logs";
  fs::create_directories(dir);
  save_train_logs_jsonl(result.logs, dir / "logs.jsonl");
  const auto text = read_text_file(dir / "logs.jsonl");
  CHECK(text.find("\"type\":\"update\"") != std::string::npos);
  CHECK(text.find("\"type\":\"summary\"") != std::string::npos);
  CHECK(text.find("\"reach\"") != std::string::npos);
  fs::remove_all(dir);
}
