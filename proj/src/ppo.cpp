#include "v2p/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "v2p/binio.hpp"

namespace v2p {

void ObsNormalizer::update(const Eigen::MatrixXf& batch) {
  const int n = static_cast<int>(batch.rows());
  if (n == 0) return;
  if (mean_.size() == 0) init(static_cast<int>(batch.cols()));
  if (batch.cols() != mean_.size()) throw ContractError("normalizer: dimension mismatch");
  Eigen::VectorXd bm = Eigen::VectorXd::Zero(mean_.size());
  for (int b = 0; b < n; ++b) bm += batch.row(b).cast<double>();
  bm /= n;
  Eigen::VectorXd bv = Eigen::VectorXd::Zero(mean_.size());
  for (int b = 0; b < n; ++b) {
    const Eigen::VectorXd d = batch.row(b).cast<double>().transpose() - bm;
    bv += d.cwiseProduct(d);
  }
  bv /= n;
  if (count_ <= 0) {
    mean_ = bm;
    var_ = bv;
    count_ = n;
    return;
  }
  const double total = count_ + n;
  const Eigen::VectorXd delta = bm - mean_;
  const Eigen::VectorXd m2 =
      var_ * count_ + bv * n + delta.cwiseProduct(delta) * (count_ * n / total);
  mean_ += delta * (n / total);
  var_ = m2 / total;
  count_ = total;
}

Eigen::MatrixXf ObsNormalizer::normalize(const Eigen::MatrixXf& obs) const {
  if (mean_.size() == 0 || count_ <= 0) return obs;
  if (obs.cols() != mean_.size()) throw ContractError("normalizer: dimension mismatch");
  Eigen::MatrixXf out(obs.rows(), obs.cols());
  for (int c = 0; c < obs.cols(); ++c) {
    const float m = static_cast<float>(mean_(c));
    const float s = static_cast<float>(1.0 / std::sqrt(var_(c) + 1e-8));
    for (int r = 0; r < obs.rows(); ++r) {
      out(r, c) = std::clamp((obs(r, c) - m) * s, -10.0f, 10.0f);
    }
  }
  return out;
}

ActionBatch policy_act(const Policy& policy, const Eigen::MatrixXf& obs, bool deterministic,
                       Rng* rng, Eigen::MatrixXf* raw_out) {
  if (obs.cols() != policy.net.obs_dim())
    throw ContractError("policy_act: observation width " + std::to_string(obs.cols()) +
                        " does not match policy input " + std::to_string(policy.net.obs_dim()));
  const auto obs_n = policy.norm.normalize(obs);
  const auto fwd = policy.net.forward(obs_n);
  const int B = static_cast<int>(obs.rows());
  const int D = policy.net.act_dim();
  ActionBatch out(B, D);
  const auto ls = policy.net.log_std();
  for (int b = 0; b < B; ++b) {
    for (int d = 0; d < D; ++d) {
      float a = fwd.mean(b, d);
      if (!deterministic) {
        if (!rng) throw ContractError("policy_act: stochastic mode needs an rng");
        a += std::exp(ls(d)) * static_cast<float>(rng->normal());
      }
      if (raw_out) (*raw_out)(b, d) = a;
      out(b, d) = std::clamp(a, -1.0f, 1.0f);
    }
  }
  return out;
}

std::vector<double> gae_advantages(const std::vector<double>& rewards,
                                   const std::vector<double>& values,
                                   const std::vector<uint8_t>& dones, double gamma,
                                   double gae_lambda) {
  const size_t T = rewards.size();
  if (values.size() != T + 1 || dones.size() != T)
    throw ContractError("gae_advantages: length mismatch (values must have T+1 entries)");
  std::vector<double> adv(T);
  double acc = 0.0;
  for (size_t t = T; t-- > 0;) {
    const double nonterminal = dones[t] ? 0.0 : 1.0;
    const double delta = rewards[t] + gamma * values[t + 1] * nonterminal - values[t];
    acc = delta + gamma * gae_lambda * nonterminal * acc;
    adv[t] = acc;
  }
  return adv;
}

std::map<std::string, ComponentStats> collect_component_stats(
    const std::vector<std::string>& component_names, const std::vector<EpisodeStats>& episodes) {
  std::map<std::string, ComponentStats> out;
  for (size_t c = 0; c < component_names.size(); ++c) {
    ComponentStats stats;
    for (int group = 0; group < 2; ++group) {
      const bool want_success = group == 0;
      ComponentGroupStats g;
      double sum = 0;
      for (const auto& ep : episodes) {
        if (ep.success != want_success) continue;
        const double v = ep.component_sums[c];
        if (!g.present) {
          g.present = true;
          g.min = g.max = v;
        } else {
          g.min = std::min(g.min, v);
          g.max = std::max(g.max, v);
        }
        g.last = v;
        sum += v;
        ++g.episodes;
      }
      if (g.present) g.mean = sum / g.episodes;
      (want_success ? stats.on_success : stats.on_failure) = g;
    }
    stats.success_exceeds_failure = stats.on_success.present && stats.on_failure.present &&
                                    stats.on_success.mean > stats.on_failure.mean;
    out[component_names[c]] = stats;
  }
  return out;
}

namespace {

uint64_t episode_seed(uint64_t base, int env, long counter) {
  return derive_seed(base, 0x7EA1u, static_cast<uint64_t>(env), static_cast<uint64_t>(counter));
}

}  // namespace

TrainResult train(const TaskSpec& task, const SceneSpec& scene, const TrainConfig& config) {
  const auto report = validate_task_spec(task, scene, config.sim.workspace);
  if (!report.runnable())
    throw InputError("train: task is not runnable:\n" + report.to_string());

  const int B = config.sim.num_envs;
  const int T = config.rollout_length;
  const int obs_dim = computed_observation_dim(task, scene);
  const int act_dim = 7;
  const int C = static_cast<int>(task.reward.components.size());

  TrainResult out;
  out.policy.net =
      PolicyNet<float>(obs_dim, act_dim, config.hidden0, config.hidden1, derive_seed(config.seed, 0x4e7));
  out.policy.norm.init(obs_dim);
  TrainLogs& logs = out.logs;
  for (const auto& comp : task.reward.components) logs.component_names.push_back(comp.name);

  EnvStateBatch state = reset(task.reset, scene, config.sim, derive_seed(config.seed, 0));
  std::vector<long> episode_counter(B, 1);
  for (int b = 0; b < B; ++b)
    reset_env(state, b, task.reset, scene, config.sim, episode_seed(config.seed, b, 0));

  std::vector<double> ep_return(B, 0.0);
  std::vector<uint8_t> ep_success(B, 0);
  std::vector<int> ep_steps(B, 0);
  std::vector<std::vector<double>> ep_comp(B, std::vector<double>(C, 0.0));

  const long steps_per_update = static_cast<long>(T) * B;
  const int num_updates =
      static_cast<int>((config.total_env_steps + steps_per_update - 1) / steps_per_update);

  Adam<float> adam(out.policy.net.param_count(), config.learning_rate, config.grad_clip);
  Rng action_rng(derive_seed(config.seed, 0xAC7));
  Rng shuffle_rng(derive_seed(config.seed, 0x5FF));

  const long N = steps_per_update;
  Eigen::MatrixXf obs_buf(N, obs_dim), raw_obs_buf(N, obs_dim), act_buf(N, act_dim);
  Eigen::VectorXf old_logp(N);
  std::vector<double> values(N), rewards(N);
  std::vector<uint8_t> dones(N);

  // Value targets are normalized by running return moments (frozen within an
  // update cycle); the head predicts in normalized space and real-space
  // values are recovered for GAE. Keeps the shared trunk stable when the
  // success bonus pushes returns into the thousands.
  double ret_mean = 0.0, ret_var = 1.0, ret_count = 0.0;
  auto ret_sigma = [&]() { return std::sqrt(ret_var + 1e-8); };

  if (config.capture_trace) {
    out.trace.emplace();
    out.trace->steps = T;
    out.trace->envs = B;
    out.trace->step_penalty = static_cast<float>(task.reward.step_penalty);
    out.trace->lambda_success = static_cast<float>(config.lambda_success);
    for (const auto& comp : task.reward.components)
      out.trace->weights.push_back(static_cast<float>(comp.weight));
    out.trace->component_values.resize(C);
  }

  const float lambda_f = static_cast<float>(config.lambda_success);
  EvalDiag diag;

  for (int update = 0; update < num_updates && !logs.diverged; ++update) {
    int episodes_this_update = 0, successes_this_update = 0;
    double return_this_update = 0;
    const bool tracing = config.capture_trace && update == 0;

    for (int t = 0; t < T; ++t) {
      const Eigen::MatrixXf raw_obs = observation_matrix(task.observation, scene, features(state), &diag);
      const Eigen::MatrixXf obs_n = out.policy.norm.normalize(raw_obs);
      const auto fwd = out.policy.net.forward(obs_n);
      ActionBatch actions(B, act_dim);
      const auto ls = out.policy.net.log_std();
      for (int b = 0; b < B; ++b)
        for (int d = 0; d < act_dim; ++d)
          actions(b, d) = fwd.mean(b, d) + std::exp(ls(d)) * static_cast<float>(action_rng.normal());
      const auto logp = gaussian_logp(out.policy.net, fwd.mean, actions);

      step(state, actions, config.sim);
      const FeatureTable table = features(state);
      const RewardEvalF rew = eval_reward_f(task.reward, table, &diag);
      const auto success_bits = eval_success(task.success, table);

      for (int b = 0; b < B; ++b) {
        const long row = static_cast<long>(t) * B + b;
        obs_buf.row(row) = obs_n.row(b);
        raw_obs_buf.row(row) = raw_obs.row(b);
        act_buf.row(row) = actions.row(b);
        old_logp(row) = logp(b);
        values[row] = static_cast<double>(fwd.value(b)) * ret_sigma() + ret_mean;

        const bool at_horizon = state.step_count[b] >= config.sim.horizon;
        const bool success_now =
            success_bits[b] && (!config.success_final_step_only || at_horizon);
        const float r = rew.totals[b] + (success_now ? lambda_f : 0.0f);
        rewards[row] = r;
        dones[row] = at_horizon ? 1 : 0;

        ep_return[b] += r;
        ep_success[b] |= success_now ? 1 : 0;
        ep_steps[b] += 1;
        for (int c = 0; c < C; ++c) ep_comp[b][c] += rew.components[c][b];

        if (tracing) {
          for (int c = 0; c < C; ++c) out.trace->component_values[c].push_back(rew.components[c][b]);
          out.trace->success.push_back(success_now ? 1 : 0);
          out.trace->train_reward.push_back(r);
        }

        if (at_horizon) {
          EpisodeStats ep;
          ep.success = ep_success[b] != 0;
          ep.total_return = ep_return[b];
          ep.steps = ep_steps[b];
          ep.component_sums = ep_comp[b];
          logs.episodes.push_back(std::move(ep));
          ++episodes_this_update;
          successes_this_update += ep_success[b] ? 1 : 0;
          return_this_update += ep_return[b];
          ep_return[b] = 0;
          ep_success[b] = 0;
          ep_steps[b] = 0;
          std::fill(ep_comp[b].begin(), ep_comp[b].end(), 0.0);
          reset_env(state, b, task.reset, scene, config.sim,
                    episode_seed(config.seed, b, episode_counter[b]));
          episode_counter[b] += 1;
        }
      }
    }

    // Bootstrap values and GAE in double precision.
    const Eigen::MatrixXf last_obs =
        out.policy.norm.normalize(observation_matrix(task.observation, scene, features(state), &diag));
    const auto last_fwd = out.policy.net.forward(last_obs);
    std::vector<double> adv(N), ret(N);
    for (int b = 0; b < B; ++b) {
      double acc = 0.0;
      double next_value = static_cast<double>(last_fwd.value(b)) * ret_sigma() + ret_mean;
      for (int t = T - 1; t >= 0; --t) {
        const long row = static_cast<long>(t) * B + b;
        const double nonterminal = dones[row] ? 0.0 : 1.0;
        const double delta =
            rewards[row] + config.discount * next_value * nonterminal - values[row];
        acc = delta + config.discount * config.gae_lambda * nonterminal * acc;
        adv[row] = acc;
        ret[row] = acc + values[row];
        next_value = values[row];
      }
    }
    double adv_mean = std::accumulate(adv.begin(), adv.end(), 0.0) / N;
    double adv_var = 0;
    for (double a : adv) adv_var += (a - adv_mean) * (a - adv_mean);
    const double adv_std = std::sqrt(adv_var / N);

    PpoBatch<float> full;
    full.obs = obs_buf;
    full.actions = act_buf;
    full.old_logp = old_logp;
    full.advantages.resize(N);
    full.returns.resize(N);
    for (long k = 0; k < N; ++k) {
      full.advantages(k) = static_cast<float>((adv[k] - adv_mean) / (adv_std + 1e-8));
      full.returns(k) = static_cast<float>((ret[k] - ret_mean) / ret_sigma());
    }

    std::vector<int> order(N);
    std::iota(order.begin(), order.end(), 0);
    double policy_loss = 0, value_loss = 0;
    int loss_count = 0;
    const long mb_size = (N + config.minibatches - 1) / config.minibatches;
    for (int epoch = 0; epoch < config.epochs_per_update && !logs.diverged; ++epoch) {
      // Fisher-Yates with the pinned rng.
      for (long k = N - 1; k > 0; --k) {
        const long j = shuffle_rng.uniform_int(static_cast<int>(k + 1));
        std::swap(order[k], order[j]);
      }
      for (int mb = 0; mb < config.minibatches && !logs.diverged; ++mb) {
        const long begin = mb * mb_size;
        const long end = std::min(N, begin + mb_size);
        if (begin >= end) continue;
        PpoBatch<float> batch;
        const long n = end - begin;
        batch.obs.resize(n, obs_dim);
        batch.actions.resize(n, act_dim);
        batch.old_logp.resize(n);
        batch.advantages.resize(n);
        batch.returns.resize(n);
        for (long k = 0; k < n; ++k) {
          const int src = order[begin + k];
          batch.obs.row(k) = full.obs.row(src);
          batch.actions.row(k) = full.actions.row(src);
          batch.old_logp(k) = full.old_logp(src);
          batch.advantages(k) = full.advantages(src);
          batch.returns(k) = full.returns(src);
        }
        auto loss = ppo_loss_and_grad(out.policy.net, batch, config.clip_ratio, config.value_coef);
        bool finite = std::isfinite(loss.total);
        for (float g : loss.grad)
          if (!std::isfinite(g)) {
            finite = false;
            break;
          }
        if (!finite) {
          logs.diverged = true;
          break;
        }
        adam.step(out.policy.net, loss.grad);
        policy_loss += loss.policy;
        value_loss += loss.value;
        ++loss_count;
      }
    }
    if (!out.policy.net.finite()) logs.diverged = true;

    // Normalizers absorb this rollout only after the optimization pass.
    out.policy.norm.update(raw_obs_buf);
    {
      double bm = 0;
      for (double r : ret) bm += r;
      bm /= N;
      double bv = 0;
      for (double r : ret) bv += (r - bm) * (r - bm);
      bv /= N;
      if (ret_count <= 0) {
        ret_mean = bm;
        ret_var = bv;
        ret_count = N;
      } else {
        const double total = ret_count + N;
        const double delta = bm - ret_mean;
        const double m2 = ret_var * ret_count + bv * N + delta * delta * (ret_count * N / total);
        ret_mean += delta * (N / total);
        ret_var = m2 / total;
        ret_count = total;
      }
    }

    UpdateLog ul;
    ul.update = update;
    ul.episodes = episodes_this_update;
    ul.mean_return = episodes_this_update > 0 ? return_this_update / episodes_this_update : 0.0;
    ul.success_rate =
        episodes_this_update > 0 ? static_cast<double>(successes_this_update) / episodes_this_update
                                 : 0.0;
    ul.policy_loss = loss_count > 0 ? policy_loss / loss_count : 0.0;
    ul.value_loss = loss_count > 0 ? value_loss / loss_count : 0.0;
    logs.updates.push_back(ul);
    logs.success_curve.push_back(ul.success_rate);
  }

  logs.component_stats = collect_component_stats(logs.component_names, logs.episodes);
  if (!logs.episodes.empty()) {
    const size_t tail = std::max<size_t>(1, logs.episodes.size() / 5);
    size_t wins = 0;
    for (size_t k = logs.episodes.size() - tail; k < logs.episodes.size(); ++k)
      wins += logs.episodes[k].success ? 1 : 0;
    logs.final_success_rate = static_cast<double>(wins) / tail;
  }
  return out;
}

ActionBatch PolicyActor::act(const EnvStateBatch& state, const Eigen::MatrixXf&,
                             bool deterministic) {
  Eigen::MatrixXf obs = observation_matrix(*obs_spec_, *scene_, features(state));
  if (policy_->frame_stack == 2) {
    if (!has_prev_) {
      prev_obs_ = obs;
      has_prev_ = true;
    }
    Eigen::MatrixXf stacked(obs.rows(), obs.cols() * 2);
    stacked << prev_obs_, obs;
    prev_obs_ = obs;
    return policy_act(*policy_, stacked, deterministic, &rng_);
  }
  return policy_act(*policy_, obs, deterministic, &rng_);
}

EvalReport evaluate_actor(Actor& actor, const ResetSpec& reset_spec, const SuccessProgram& success,
                          const SceneSpec& scene, const TrainConfig& config, uint64_t base_seed) {
  const int E = config.eval_episodes;
  const SimConfig sim = with_envs(config.sim, E);
  EvalReport rep;
  rep.episodes_per_seed = E;
  for (int s = 0; s < config.eval_seeds; ++s) {
    EnvStateBatch state = reset(reset_spec, scene, sim, derive_seed(base_seed, 0xE0A, s));
    for (int b = 0; b < E; ++b)
      reset_env(state, b, reset_spec, scene, sim,
                derive_seed(base_seed, 0xE0B, static_cast<uint64_t>(s), static_cast<uint64_t>(b)));
    actor.begin_rollout();
    std::vector<uint8_t> success_any(E, 0);
    for (int t = 0; t < sim.horizon; ++t) {
      const ActionBatch actions = actor.act(state, {}, true);
      step(state, actions, sim);
      const auto bits = eval_success(success, features(state));
      const bool at_horizon = t + 1 >= sim.horizon;
      for (int b = 0; b < E; ++b) {
        if (!config.success_final_step_only || at_horizon) success_any[b] |= bits[b];
      }
    }
    int wins = 0;
    for (uint8_t v : success_any) wins += v ? 1 : 0;
    rep.per_seed.push_back(static_cast<double>(wins) / E);
  }
  rep.mean = std::accumulate(rep.per_seed.begin(), rep.per_seed.end(), 0.0) / rep.per_seed.size();
  return rep;
}

EvalReport evaluate(const Policy& policy, const TaskSpec& task, const SuccessProgram& success,
                    const SceneSpec& scene, const TrainConfig& config, uint64_t base_seed) {
  PolicyActor actor(policy, task.observation, scene, derive_seed(base_seed, 0xAC7E));
  return evaluate_actor(actor, task.reset, success, scene, config, base_seed);
}

// --- logs serialization --------------------------------------------------------

static nlohmann::json group_json(const ComponentGroupStats& g) {
  if (!g.present) return nlohmann::json{{"present", false}};
  return nlohmann::json{{"present", true}, {"episodes", g.episodes}, {"min", g.min},
                        {"max", g.max},   {"mean", g.mean},          {"last", g.last}};
}

nlohmann::json train_logs_to_json(const TrainLogs& logs) {
  nlohmann::json j;
  j["diverged"] = logs.diverged;
  j["final_success_rate"] = logs.final_success_rate;
  j["success_curve"] = logs.success_curve;
  j["episodes"] = logs.episodes.size();
  nlohmann::json comps = nlohmann::json::object();
  for (const auto& [name, stats] : logs.component_stats) {
    comps[name] = {{"on_success", group_json(stats.on_success)},
                   {"on_failure", group_json(stats.on_failure)},
                   {"success_exceeds_failure", stats.success_exceeds_failure}};
  }
  j["components"] = std::move(comps);
  return j;
}

void save_train_logs_jsonl(const TrainLogs& logs, const std::filesystem::path& path) {
  auto os = open_out(path, false);
  for (const auto& u : logs.updates) {
    nlohmann::json j = {{"type", "update"},       {"update", u.update},
                        {"episodes", u.episodes}, {"mean_return", u.mean_return},
                        {"success_rate", u.success_rate}, {"policy_loss", u.policy_loss},
                        {"value_loss", u.value_loss}};
    os << j.dump() << "\n";
  }
  nlohmann::json summary = train_logs_to_json(logs);
  summary["type"] = "summary";
  os << summary.dump() << "\n";
}

// --- checkpoints ----------------------------------------------------------------

static constexpr char kPolicyMagic[8] = {'V', '2', 'P', 'P', 'O', 'L', 'C', '1'};

void save_policy(const Policy& policy, const std::filesystem::path& path) {
  auto os = open_out(path);
  os.write(kPolicyMagic, 8);
  write_pod<int32_t>(os, policy.net.obs_dim());
  write_pod<int32_t>(os, policy.net.act_dim());
  write_pod<int32_t>(os, policy.net.h0());
  write_pod<int32_t>(os, policy.net.h1());
  write_pod<int32_t>(os, policy.frame_stack);
  write_pod<uint32_t>(os, static_cast<uint32_t>(policy.obs_layout_version.size()));
  os.write(policy.obs_layout_version.data(),
           static_cast<std::streamsize>(policy.obs_layout_version.size()));
  write_array<float>(os, {static_cast<uint32_t>(policy.net.theta().size())},
                     policy.net.theta().data());
  const auto& mean = policy.norm.mean();
  const auto& var = policy.norm.var();
  write_array<double>(os, {static_cast<uint32_t>(mean.size())}, mean.data());
  write_array<double>(os, {static_cast<uint32_t>(var.size())}, var.data());
  write_pod<double>(os, policy.norm.count());
  os.close();

  nlohmann::json side = {{"obs_dim", policy.net.obs_dim()},
                         {"action_dim", policy.net.act_dim()},
                         {"hidden", {policy.net.h0(), policy.net.h1()}},
                         {"frame_stack", policy.frame_stack},
                         {"obs_layout_version", policy.obs_layout_version},
                         {"normalizer_count", policy.norm.count()}};
  write_text_file(path.string() + ".json", side.dump(2) + "\n");
}

Policy load_policy(const std::filesystem::path& path) {
  auto is = open_in(path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kPolicyMagic, 8) != 0)
    throw InputError("not a policy checkpoint: " + path.string());
  const int obs_dim = read_pod<int32_t>(is);
  const int act_dim = read_pod<int32_t>(is);
  const int h0 = read_pod<int32_t>(is);
  const int h1 = read_pod<int32_t>(is);
  const int frame_stack = read_pod<int32_t>(is);
  const uint32_t vlen = read_pod<uint32_t>(is);
  std::string version(vlen, '\0');
  is.read(version.data(), vlen);
  if (version != kObsLayoutVersion)
    throw CompatError("policy checkpoint has observation layout '" + version + "', expected '" +
                      kObsLayoutVersion + "'");
  Policy policy;
  policy.net = PolicyNet<float>(obs_dim, act_dim, h0, h1, 0);
  std::vector<uint32_t> dims;
  auto theta = read_array<float>(is, dims);
  if (theta.size() != policy.net.param_count())
    throw InputError("policy checkpoint parameter count mismatch");
  policy.net.theta() = std::move(theta);
  auto mean = read_array<double>(is, dims);
  auto var = read_array<double>(is, dims);
  const double count = read_pod<double>(is);
  policy.norm.set(Eigen::Map<Eigen::VectorXd>(mean.data(), mean.size()),
                  Eigen::Map<Eigen::VectorXd>(var.data(), var.size()), count);
  policy.frame_stack = frame_stack;
  policy.obs_layout_version = version;
  return policy;
}

}  // namespace v2p
