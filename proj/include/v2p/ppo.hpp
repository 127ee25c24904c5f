#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "v2p/mlp.hpp"
#include "v2p/sim.hpp"

namespace v2p {

inline constexpr const char* kObsLayoutVersion = "v2p-obs-1";

struct TrainConfig {
  double lambda_success = 100.0;  // training reward = shaped total + lambda * success
  double discount = 0.99;
  double gae_lambda = 0.95;
  double clip_ratio = 0.2;
  double learning_rate = 3e-4;
  int epochs_per_update = 5;
  int minibatches = 4;
  int rollout_length = 32;  // steps per env per update
  long total_env_steps = 200000;
  int eval_episodes = 10;
  int eval_seeds = 3;
  uint64_t seed = 0;
  SimConfig sim;
  int hidden0 = 256, hidden1 = 256;
  double value_coef = 1.0;
  double entropy_coef = 0.0;  // pinned off
  double grad_clip = 1.0;
  bool success_final_step_only = false;
  bool capture_trace = false;  // record the first update's rollout for audits
};

// Per-step record of the first training rollout (capture_trace). Component
// streams are the weighted values in program order.
struct RolloutTrace {
  int steps = 0, envs = 0;
  std::vector<float> weights;  // unused in the identity; kept for inspection
  float step_penalty = 0;
  float lambda_success = 0;
  std::vector<std::vector<float>> component_values;  // [component][step*envs + b]
  std::vector<uint8_t> success;                      // [step*envs + b]
  std::vector<float> train_reward;                   // [step*envs + b]
};

// Running observation moments; frozen during each rollout+update cycle and at
// evaluation.
class ObsNormalizer {
 public:
  void init(int dim) {
    mean_ = Eigen::VectorXd::Zero(dim);
    var_ = Eigen::VectorXd::Ones(dim);
    count_ = 0;
  }
  void update(const Eigen::MatrixXf& batch);
  Eigen::MatrixXf normalize(const Eigen::MatrixXf& obs) const;
  int dim() const { return static_cast<int>(mean_.size()); }
  double count() const { return count_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& var() const { return var_; }
  void set(Eigen::VectorXd mean, Eigen::VectorXd var, double count) {
    mean_ = std::move(mean);
    var_ = std::move(var);
    count_ = count;
  }

 private:
  Eigen::VectorXd mean_, var_;
  double count_ = 0;
};

// Checkpointable policy: network, frozen normalizer, frame stacking and the
// observation layout it was trained against.
struct Policy {
  PolicyNet<float> net;
  ObsNormalizer norm;
  int frame_stack = 1;
  std::string obs_layout_version = kObsLayoutVersion;

  int obs_dim() const { return net.obs_dim(); }
  int act_dim() const { return net.act_dim(); }
};

void save_policy(const Policy& policy, const std::filesystem::path& path);
Policy load_policy(const std::filesystem::path& path);

// Deterministic mode returns the clipped mean action; stochastic mode samples
// from the diagonal Gaussian (pre-clip sample returned via raw_out when
// needed for log-prob bookkeeping).
ActionBatch policy_act(const Policy& policy, const Eigen::MatrixXf& obs, bool deterministic,
                       Rng* rng = nullptr, Eigen::MatrixXf* raw_out = nullptr);

// --- GAE ---------------------------------------------------------------------

// Single-sequence form: values has T+1 entries (bootstrap last); dones[t]
// terminates the chain at step t.
std::vector<double> gae_advantages(const std::vector<double>& rewards,
                                   const std::vector<double>& values,
                                   const std::vector<uint8_t>& dones, double gamma,
                                   double gae_lambda);

// --- logging -----------------------------------------------------------------

struct ComponentGroupStats {
  bool present = false;
  int episodes = 0;
  double min = 0, max = 0, mean = 0, last = 0;
};

struct ComponentStats {
  ComponentGroupStats on_success;
  ComponentGroupStats on_failure;
  // mean accumulated reward on successful episodes exceeds the failures'
  bool success_exceeds_failure = false;
};

struct EpisodeStats {
  bool success = false;
  double total_return = 0;
  int steps = 0;
  std::vector<double> component_sums;  // per component, program order
};

struct UpdateLog {
  int update = 0;
  int episodes = 0;
  double mean_return = 0;
  double success_rate = 0;
  double policy_loss = 0;
  double value_loss = 0;
};

struct TrainLogs {
  std::vector<std::string> component_names;
  std::vector<UpdateLog> updates;
  std::vector<EpisodeStats> episodes;
  std::map<std::string, ComponentStats> component_stats;
  std::vector<double> success_curve;  // per update
  double final_success_rate = 0;
  bool diverged = false;
};

std::map<std::string, ComponentStats> collect_component_stats(
    const std::vector<std::string>& component_names, const std::vector<EpisodeStats>& episodes);

nlohmann::json train_logs_to_json(const TrainLogs& logs);
void save_train_logs_jsonl(const TrainLogs& logs, const std::filesystem::path& path);

// --- training / evaluation -----------------------------------------------------

struct TrainResult {
  Policy policy;
  TrainLogs logs;
  std::optional<RolloutTrace> trace;
};

TrainResult train(const TaskSpec& task, const SceneSpec& scene, const TrainConfig& config);

struct EvalReport {
  double mean = 0;
  std::vector<double> per_seed;
  int episodes_per_seed = 0;
};

EvalReport evaluate_actor(Actor& actor, const ResetSpec& reset, const SuccessProgram& success,
                          const SceneSpec& scene, const TrainConfig& config, uint64_t base_seed);

EvalReport evaluate(const Policy& policy, const TaskSpec& task, const SuccessProgram& success,
                    const SceneSpec& scene, const TrainConfig& config, uint64_t base_seed);

// Policy-backed actor (computes its own observations; supports frame stacking).
class PolicyActor : public Actor {
 public:
  PolicyActor(const Policy& policy, const ObservationSpec& obs_spec, const SceneSpec& scene,
              uint64_t seed)
      : policy_(&policy), obs_spec_(&obs_spec), scene_(&scene), rng_(seed) {}

  ActionBatch act(const EnvStateBatch& state, const Eigen::MatrixXf&, bool deterministic) override;
  void begin_episode() { has_prev_ = false; }

 private:
  const Policy* policy_;
  const ObservationSpec* obs_spec_;
  const SceneSpec* scene_;
  Rng rng_;
  Eigen::MatrixXf prev_obs_;
  bool has_prev_ = false;
};

// --- PPO loss ------------------------------------------------------------------

template <typename S>
struct PpoBatch {
  using Mat = typename PolicyNet<S>::Mat;
  using Vec = typename PolicyNet<S>::Vec;
  Mat obs;         // B x obs_dim (already normalized)
  Mat actions;     // B x act_dim (pre-clip samples)
  Vec old_logp;    // B
  Vec advantages;  // B
  Vec returns;     // B
};

template <typename S>
struct PpoLoss {
  double total = 0;
  double policy = 0;
  double value = 0;
  std::vector<S> grad;
};

template <typename S>
typename PolicyNet<S>::Vec gaussian_logp(const PolicyNet<S>& net,
                                         const typename PolicyNet<S>::Mat& mean,
                                         const typename PolicyNet<S>::Mat& actions) {
  using Vec = typename PolicyNet<S>::Vec;
  const auto ls = net.log_std();
  const int B = static_cast<int>(mean.rows());
  const int D = net.act_dim();
  Vec out(B);
  const S half_log_2pi = static_cast<S>(0.9189385332046727);  // 0.5*log(2*pi)
  for (int b = 0; b < B; ++b) {
    S acc = S(0);
    for (int d = 0; d < D; ++d) {
      const S sigma = std::exp(ls(d));
      const S z = (actions(b, d) - mean(b, d)) / sigma;
      acc += S(-0.5) * z * z - ls(d) - half_log_2pi;
    }
    out(b) = acc;
  }
  return out;
}

// Clipped-surrogate PPO loss with a value MSE term; entropy coefficient is
// zero by contract. Returns the analytic gradient over the flat parameters.
template <typename S>
PpoLoss<S> ppo_loss_and_grad(const PolicyNet<S>& net, const PpoBatch<S>& batch, double clip_ratio,
                             double value_coef) {
  using Mat = typename PolicyNet<S>::Mat;
  using Vec = typename PolicyNet<S>::Vec;
  const int B = static_cast<int>(batch.obs.rows());
  const int D = net.act_dim();
  auto fwd = net.forward(batch.obs);
  const Vec logp = gaussian_logp(net, fwd.mean, batch.actions);
  const auto ls = net.log_std();

  PpoLoss<S> out;
  Mat d_mean = Mat::Zero(B, D);
  Vec d_value(B);
  Vec d_log_std = Vec::Zero(D);

  const S lo = static_cast<S>(1.0 - clip_ratio);
  const S hi = static_cast<S>(1.0 + clip_ratio);
  double policy_loss = 0;
  for (int b = 0; b < B; ++b) {
    const S ratio = std::exp(logp(b) - batch.old_logp(b));
    const S clipped = std::clamp(ratio, lo, hi);
    const S adv = batch.advantages(b);
    const S s1 = ratio * adv;
    const S s2 = clipped * adv;
    const S f = std::min(s1, s2);
    policy_loss -= static_cast<double>(f);
    // d f / d ratio: the unclipped branch wins (or ties) => adv, else 0.
    const S dfdr = (s1 <= s2) ? adv : S(0);
    const S d_logp = -dfdr * ratio / static_cast<S>(B);  // d(-mean f)/d logp
    for (int d = 0; d < D; ++d) {
      const S sigma = std::exp(ls(d));
      const S diff = batch.actions(b, d) - fwd.mean(b, d);
      d_mean(b, d) += d_logp * (diff / (sigma * sigma));
      d_log_std(d) += d_logp * ((diff * diff) / (sigma * sigma) - S(1));
    }
  }
  policy_loss /= B;

  double value_loss = 0;
  for (int b = 0; b < B; ++b) {
    const S err = fwd.value(b) - batch.returns(b);
    value_loss += 0.5 * static_cast<double>(err) * static_cast<double>(err);
    d_value(b) = static_cast<S>(value_coef) * err / static_cast<S>(B);
  }
  value_loss /= B;

  out.policy = policy_loss;
  out.value = value_loss;
  out.total = policy_loss + value_coef * value_loss;
  out.grad.assign(net.param_count(), S(0));
  net.backward(fwd, d_mean, d_value, d_log_std, out.grad);
  return out;
}

// Loss-only evaluation, for finite-difference checks.
template <typename S>
double ppo_loss_value(const PolicyNet<S>& net, const PpoBatch<S>& batch, double clip_ratio,
                      double value_coef) {
  using Vec = typename PolicyNet<S>::Vec;
  const int B = static_cast<int>(batch.obs.rows());
  auto fwd = net.forward(batch.obs);
  const Vec logp = gaussian_logp(net, fwd.mean, batch.actions);
  const S lo = static_cast<S>(1.0 - clip_ratio);
  const S hi = static_cast<S>(1.0 + clip_ratio);
  double policy_loss = 0;
  for (int b = 0; b < B; ++b) {
    const S ratio = std::exp(logp(b) - batch.old_logp(b));
    const S s1 = ratio * batch.advantages(b);
    const S s2 = std::clamp(ratio, lo, hi) * batch.advantages(b);
    policy_loss -= static_cast<double>(std::min(s1, s2));
  }
  policy_loss /= B;
  double value_loss = 0;
  for (int b = 0; b < B; ++b) {
    const S err = fwd.value(b) - batch.returns(b);
    value_loss += 0.5 * static_cast<double>(err) * static_cast<double>(err);
  }
  value_loss /= B;
  return policy_loss + value_coef * value_loss;
}

}  // namespace v2p
