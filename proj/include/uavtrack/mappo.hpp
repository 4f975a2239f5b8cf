#pragma once

// MAPPO building blocks: shared decentralized actor over the hybrid
// (squashed Gaussian move, Bernoulli mode) action, centralized critic,
// rollout storage, GAE and the clipped PPO update.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "uavtrack/core.hpp"
#include "uavtrack/nn.hpp"
#include "uavtrack/predictor.hpp"
#include "uavtrack/scenario.hpp"

namespace uavtrack {

struct TrainConfig {
  double lr = 5e-5;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  int epochs_per_update = 4;
  int minibatch = 128;
  int rollout_len = 300;  // environment steps collected per update (whole episodes)
  int total_episodes = 2000;
  std::uint64_t seed = 1;
  int hidden_layers = 5;
  int hidden_units = 256;
  double ent_coef = 0.01;
  double value_coef = 1.0;
  double max_grad_norm = 10.0;
  double position_scale = 1e-3;  // network inputs in km
  double init_log_std = -0.5;

  void validate() const {
    auto fail = [](const char* what) { throw Error(ErrorCode::ConfigInvalid, what); };
    if (!(lr > 0.0)) fail("lr must be positive");
    if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must lie in (0, 1]");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) fail("gae_lambda must lie in [0, 1]");
    if (!(clip_eps >= 0.0)) fail("clip_eps must be >= 0");
    if (epochs_per_update < 1) fail("epochs_per_update must be >= 1");
    if (minibatch < 1) fail("minibatch must be >= 1");
    if (rollout_len < 1) fail("rollout_len must be >= 1");
    if (total_episodes < 0) fail("total_episodes must be >= 0");
    if (hidden_layers < 0 || hidden_units < 1) fail("invalid network shape");
    if (!(position_scale > 0.0)) fail("position_scale must be positive");
  }
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr int kPolicyOutputs = 5;  // mean x, mean y, log-std x, log-std y, mode logit

using Scalar = double;
using Mat = nn::Matrix<Scalar>;
using Vec = nn::Vector<Scalar>;

inline std::vector<int> mlp_sizes(int input, int output, const TrainConfig& cfg) {
  std::vector<int> sizes{input};
  for (int l = 0; l < cfg.hidden_layers; ++l) sizes.push_back(cfg.hidden_units);
  sizes.push_back(output);
  return sizes;
}

inline int policy_input_dim(int n_uav, int m_target) { return observation_length(n_uav, m_target) + n_uav; }
inline int value_input_dim(int n_uav, int m_target) { return 3 * n_uav + 3 * m_target + n_uav + 1; }

/// Actor input: the observation with positions rescaled, plus the agent's one-hot index.
inline Vec policy_features(std::span<const double> obs, int agent, int n_uav, int m_target, double position_scale) {
  const int n_pos = 2 * (n_uav - 1) + 2 * m_target;
  Vec f = Vec::Zero(static_cast<Eigen::Index>(obs.size()) + n_uav);
  for (std::size_t i = 0; i < obs.size(); ++i)
    f(static_cast<Eigen::Index>(i)) = static_cast<Scalar>(static_cast<int>(i) < n_pos ? obs[i] * position_scale : obs[i]);
  f(static_cast<Eigen::Index>(obs.size()) + agent) = 1;
  return f;
}

/// Critic input: absolute UAV positions and modes, predicted target positions
/// and jammer flags, the agent's one-hot index and episode progress.
inline Vec value_features(const WorldState& world, std::span<const TrackEstimate> predictions, int agent,
                          int horizon, double position_scale) {
  const int n = world.n_uav();
  const int m = world.m_target();
  Vec f = Vec::Zero(value_input_dim(n, m));
  Eigen::Index k = 0;
  for (const auto& u : world.uavs) {
    f(k++) = u.pos.x() * position_scale;
    f(k++) = u.pos.y() * position_scale;
    f(k++) = u.last_mode == RadarMode::Active ? 1.0 : 0.0;
  }
  for (int j = 0; j < m; ++j) {
    f(k++) = predictions[j].pos_pred.x() * position_scale;
    f(k++) = predictions[j].pos_pred.y() * position_scale;
    f(k++) = world.targets[j].has_jammer ? 1.0 : 0.0;
  }
  f(k + agent) = 1;
  f(k + n) = static_cast<double>(world.k) / std::max(horizon, 1);
  return f;
}

class PolicyNet {
 public:
  PolicyNet() = default;
  PolicyNet(int input_dim, const TrainConfig& cfg) : mlp_(mlp_sizes(input_dim, kPolicyOutputs, cfg)) {}

  void init(Rng& rng, double init_log_std) {
    mlp_.init(rng, 0.01);
    auto& out = mlp_.params().back();
    out.b(2) = out.b(3) = init_log_std;
  }

  nn::Mlp<Scalar>& mlp() { return mlp_; }
  const nn::Mlp<Scalar>& mlp() const { return mlp_; }
  int input_dim() const { return mlp_.input_dim(); }

 private:
  nn::Mlp<Scalar> mlp_;
};

class ValueNet {
 public:
  ValueNet() = default;
  ValueNet(int input_dim, const TrainConfig& cfg) : mlp_(mlp_sizes(input_dim, 1, cfg)) {}

  void init(Rng& rng) { mlp_.init(rng, 1.0); }

  nn::Mlp<Scalar>& mlp() { return mlp_; }
  const nn::Mlp<Scalar>& mlp() const { return mlp_; }
  int input_dim() const { return mlp_.input_dim(); }

 private:
  nn::Mlp<Scalar> mlp_;
};

/// Distribution parameters decoded from one policy output column.
struct PolicyHead {
  double mean[2];
  double log_std[2];
  double logit;
};

inline PolicyHead decode_head(const Eigen::Ref<const Vec>& out) {
  PolicyHead h{};
  for (int a = 0; a < 2; ++a) {
    h.mean[a] = out(a);
    h.log_std[a] = std::clamp(static_cast<double>(out(2 + a)), kLogStdMin, kLogStdMax);
  }
  h.logit = out(4);
  return h;
}

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
// log(1 - tanh(u)^2), stable for large |u|
inline double log_one_minus_tanh_sq(double u) { return 2.0 * (std::numbers::ln2 - u - softplus(-2.0 * u)); }

/// Log-density of the pre-squash sample u and the mode bit, including the tanh/d0 Jacobian.
inline double hybrid_log_prob(const PolicyHead& h, const double u[2], int mode_bit, double d0) {
  double lp = 0.0;
  for (int a = 0; a < 2; ++a) {
    const double sd = std::exp(h.log_std[a]);
    const double z = (u[a] - h.mean[a]) / sd;
    lp += -0.5 * z * z - h.log_std[a] - 0.5 * std::log(2.0 * std::numbers::pi);
    lp -= std::log(d0) + log_one_minus_tanh_sq(u[a]);
  }
  // log sigmoid(l) = -softplus(-l), log(1 - sigmoid(l)) = -softplus(l)
  lp += mode_bit == 1 ? -softplus(-h.logit) : -softplus(h.logit);
  return lp;
}

/// Maps a pre-squash sample to the executed move: d0 * tanh(u) boxed, then clamped to the d0 disk.
inline Vec2 squash_move(const double u[2], double d0) {
  Vec2 m(d0 * std::tanh(u[0]), d0 * std::tanh(u[1]));
  const double n = m.norm();
  if (n > d0) m *= d0 / n;
  return m;
}

struct SampledAction {
  ActionVec action;
  double u[2] = {0.0, 0.0};
  int mode_bit = 1;
  double log_prob = 0.0;
};

inline SampledAction sample_from_head(const PolicyHead& h, double d0, bool stochastic, Rng& rng) {
  SampledAction s;
  if (stochastic) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int a = 0; a < 2; ++a) s.u[a] = h.mean[a] + std::exp(h.log_std[a]) * gauss(rng);
    s.mode_bit = unit(rng) < sigmoid(h.logit) ? 1 : 0;
  } else {
    s.u[0] = h.mean[0];
    s.u[1] = h.mean[1];
    s.mode_bit = sigmoid(h.logit) >= 0.5 ? 1 : 0;
  }
  const Vec2 move = squash_move(s.u, d0);
  s.action = {move.x(), move.y(), s.mode_bit == 1 ? RadarMode::Active : RadarMode::Passive};
  s.log_prob = hybrid_log_prob(h, s.u, s.mode_bit, d0);
  return s;
}

/// Samples (or, if !stochastic, takes the mode of) the policy for a batch of
/// feature columns.
inline std::vector<SampledAction> act_batch(const PolicyNet& policy, const Mat& features, double d0, bool stochastic,
                                            Rng& rng) {
  const Mat out = policy.mlp().forward(features);
  std::vector<SampledAction> actions;
  actions.reserve(static_cast<std::size_t>(out.cols()));
  for (Eigen::Index c = 0; c < out.cols(); ++c) actions.push_back(sample_from_head(decode_head(out.col(c)), d0, stochastic, rng));
  return actions;
}

inline SampledAction act(const PolicyNet& policy, const Vec& features, double d0, bool stochastic, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return act_batch(policy, Mat(features), d0, stochastic, rng).front();
}

/// Uniform heading, uniform magnitude in [0, d0], fair-coin mode.
inline ActionVec random_policy(double d0, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double angle = 2.0 * std::numbers::pi * unit(rng);
  const double mag = d0 * unit(rng);
  const bool active = unit(rng) < 0.5;
  return {mag * std::cos(angle), mag * std::sin(angle), active ? RadarMode::Active : RadarMode::Passive};
}

inline ActionVec random_policy(double d0, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return random_policy(d0, rng);
}

/// Step-major storage: sample (t, agent) lives at index t * n_agents + agent.
struct RolloutBuffer {
  int n_agents = 0;
  int policy_dim = 0;
  int value_dim = 0;
  std::vector<Vec> policy_inputs;
  std::vector<Vec> value_inputs;
  std::vector<std::array<double, 2>> u;
  std::vector<int> mode_bit;
  std::vector<double> log_prob;
  std::vector<double> reward;
  std::vector<double> value;  // de-normalized critic estimate
  std::vector<char> done;     // episode ends after this step
  std::vector<double> last_value;  // bootstrap per agent if the final step is not terminal

  RolloutBuffer() = default;
  RolloutBuffer(int agents, int pdim, int vdim) : n_agents(agents), policy_dim(pdim), value_dim(vdim) {}

  int steps() const { return n_agents > 0 ? static_cast<int>(reward.size()) / n_agents : 0; }
  std::size_t size() const { return reward.size(); }

  void reserve(std::size_t samples) {
    policy_inputs.reserve(samples);
    value_inputs.reserve(samples);
    u.reserve(samples);
    mode_bit.reserve(samples);
    log_prob.reserve(samples);
    reward.reserve(samples);
    value.reserve(samples);
    done.reserve(samples);
  }

  void clear() {
    policy_inputs.clear();
    value_inputs.clear();
    u.clear();
    mode_bit.clear();
    log_prob.clear();
    reward.clear();
    value.clear();
    done.clear();
    last_value.clear();
  }

  void push(const Vec& pin, const Vec& vin, const SampledAction& a, double r, double v, bool terminal) {
    policy_inputs.push_back(pin);
    value_inputs.push_back(vin);
    u.push_back({a.u[0], a.u[1]});
    mode_bit.push_back(a.mode_bit);
    log_prob.push_back(a.log_prob);
    reward.push_back(r);
    value.push_back(v);
    done.push_back(terminal ? 1 : 0);
  }
};

struct GaeResult {
  std::vector<double> advantages;  // raw
  std::vector<double> returns;     // advantages + values
  std::vector<double> normalized;  // advantages standardized to mean 0, std 1
};

inline std::vector<double> normalize_advantages(std::span<const double> adv) {
  std::vector<double> out(adv.begin(), adv.end());
  if (out.empty()) return out;
  const double mean = std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(out.size());
  double var = 0.0;
  for (double a : out) var += (a - mean) * (a - mean);
  var /= static_cast<double>(out.size());
  const double sd = std::sqrt(var) + 1e-8;
  for (double& a : out) a = (a - mean) / sd;
  return out;
}

inline GaeResult gae(const RolloutBuffer& buf, double gamma, double lambda) {
  const int n = buf.n_agents;
  const int steps = buf.steps();
  GaeResult res;
  res.advantages.assign(buf.size(), 0.0);
  res.returns.assign(buf.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    double running = 0.0;
    for (int t = steps - 1; t >= 0; --t) {
      const std::size_t idx = static_cast<std::size_t>(t) * n + i;
      double next_value = 0.0;
      double nonterminal = 0.0;
      if (!buf.done[idx]) {
        nonterminal = 1.0;
        next_value = t + 1 < steps ? buf.value[idx + n]
                                   : (static_cast<int>(buf.last_value.size()) > i ? buf.last_value[i] : 0.0);
      }
      const double delta = buf.reward[idx] + gamma * next_value * nonterminal - buf.value[idx];
      running = delta + gamma * lambda * nonterminal * running;
      res.advantages[idx] = running;
      res.returns[idx] = running + buf.value[idx];
    }
  }
  res.normalized = normalize_advantages(res.advantages);
  return res;
}

/// Running mean/variance of value targets; the critic regresses normalized returns.
struct ValueNorm {
  double count = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  double stddev() const { return count > 1.0 ? std::sqrt(std::max(m2 / count, 1e-8)) : 1.0; }
  double normalize(double x) const { return (x - mean) / stddev(); }
  double denormalize(double y) const { return y * stddev() + mean; }

  void update(std::span<const double> xs) {
    // Chan et al. parallel merge of batch statistics.
    if (xs.empty()) return;
    const double nb = static_cast<double>(xs.size());
    const double mb = std::accumulate(xs.begin(), xs.end(), 0.0) / nb;
    double m2b = 0.0;
    for (double x : xs) m2b += (x - mb) * (x - mb);
    const double total = count + nb;
    const double delta = mb - mean;
    mean += delta * nb / total;
    m2 += m2b + delta * delta * count * nb / total;
    count = total;
  }
};

/// One minibatch in matrix form (columns are samples).
struct PpoBatch {
  Mat policy_inputs;
  Mat value_inputs;
  std::vector<std::array<double, 2>> u;
  std::vector<int> mode_bit;
  std::vector<double> old_log_prob;
  std::vector<double> advantages;
  std::vector<double> value_targets;  // normalized
  double d0 = 100.0;

  int size() const { return static_cast<int>(old_log_prob.size()); }
};

inline PpoBatch gather_batch(const RolloutBuffer& buf, std::span<const std::size_t> idx, std::span<const double> adv,
                             std::span<const double> returns, const ValueNorm& norm, double d0) {
  PpoBatch b;
  const auto n = static_cast<Eigen::Index>(idx.size());
  b.policy_inputs.resize(buf.policy_dim, n);
  b.value_inputs.resize(buf.value_dim, n);
  b.d0 = d0;
  for (Eigen::Index c = 0; c < n; ++c) {
    const std::size_t k = idx[static_cast<std::size_t>(c)];
    b.policy_inputs.col(c) = buf.policy_inputs[k];
    b.value_inputs.col(c) = buf.value_inputs[k];
    b.u.push_back(buf.u[k]);
    b.mode_bit.push_back(buf.mode_bit[k]);
    b.old_log_prob.push_back(buf.log_prob[k]);
    b.advantages.push_back(adv[k]);
    b.value_targets.push_back(norm.normalize(returns[k]));
  }
  return b;
}

struct PpoLoss {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double total = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

struct PpoGradients {
  nn::Params<Scalar> policy;
  nn::Params<Scalar> value;
};

/// Clipped-surrogate loss plus value MSE and entropy bonus:
/// total = policy_loss - ent_coef * entropy + value_coef * value_loss.
/// Gradients are written to `grads` when non-null.
inline PpoLoss ppo_loss(const PolicyNet& policy, const ValueNet& value, const PpoBatch& batch, const TrainConfig& cfg,
                        PpoGradients* grads = nullptr) {
  const int b = batch.size();
  const double inv_b = 1.0 / std::max(b, 1);
  PpoLoss loss;

  nn::Mlp<Scalar>::Cache pcache;
  const Mat out = policy.mlp().forward(batch.policy_inputs, pcache);
  Mat dout = Mat::Zero(out.rows(), out.cols());
  const double half_log_2pi_e = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);

  for (int c = 0; c < b; ++c) {
    const PolicyHead h = decode_head(out.col(c));
    const double u[2] = {batch.u[c][0], batch.u[c][1]};
    const double logp = hybrid_log_prob(h, u, batch.mode_bit[c], batch.d0);
    const double ratio = std::exp(logp - batch.old_log_prob[c]);
    const double adv = batch.advantages[c];
    const double lo = 1.0 - cfg.clip_eps;
    const double hi = 1.0 + cfg.clip_eps;
    const double surr1 = ratio * adv;
    const double surr2 = std::clamp(ratio, lo, hi) * adv;
    double dsurr_dratio;
    if (surr1 < surr2)
      dsurr_dratio = adv;
    else
      dsurr_dratio = (ratio > lo && ratio < hi) ? adv : 0.0;
    loss.policy_loss -= std::min(surr1, surr2) * inv_b;
    loss.approx_kl += (batch.old_log_prob[c] - logp) * inv_b;
    if (ratio < lo || ratio > hi) loss.clip_fraction += inv_b;

    const double p = sigmoid(h.logit);
    const double bern_entropy = softplus(h.logit) - p * h.logit;
    loss.entropy += (h.log_std[0] + h.log_std[1] + 2.0 * half_log_2pi_e + bern_entropy) * inv_b;

    if (grads) {
      const double dL_dlogp = -dsurr_dratio * ratio * inv_b;
      for (int a = 0; a < 2; ++a) {
        const double var = std::exp(2.0 * h.log_std[a]);
        const double diff = u[a] - h.mean[a];
        dout(a, c) = dL_dlogp * diff / var;
        const double raw = out(2 + a, c);
        if (raw > kLogStdMin && raw < kLogStdMax)
          dout(2 + a, c) = dL_dlogp * (diff * diff / var - 1.0) - cfg.ent_coef * inv_b;
      }
      const double dlogp_dlogit = batch.mode_bit[c] - p;
      const double dH_dlogit = -h.logit * p * (1.0 - p);
      dout(4, c) = dL_dlogp * dlogp_dlogit - cfg.ent_coef * inv_b * dH_dlogit;
    }
  }

  nn::Mlp<Scalar>::Cache vcache;
  const Mat vout = value.mlp().forward(batch.value_inputs, vcache);
  Mat dv = Mat::Zero(1, vout.cols());
  for (int c = 0; c < b; ++c) {
    const double err = vout(0, c) - batch.value_targets[c];
    loss.value_loss += 0.5 * err * err * inv_b;
    dv(0, c) = cfg.value_coef * err * inv_b;
  }
  loss.total = loss.policy_loss - cfg.ent_coef * loss.entropy + cfg.value_coef * loss.value_loss;

  if (grads) {
    grads->policy = policy.mlp().backward(pcache, dout);
    grads->value = value.mlp().backward(vcache, dv);
  }
  return loss;
}

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
  int minibatches = 0;
};

/// Optimizer state owned by the trainer: one Adam per network plus value normalization.
struct LearnerState {
  PolicyNet policy;
  ValueNet value;
  nn::Adam<Scalar> policy_opt;
  nn::Adam<Scalar> value_opt;
  ValueNorm value_norm;
};

/// PPO epochs over the buffer. On a non-finite loss or parameter the learner
/// is restored to its state on entry and NonFiniteLoss is thrown.
inline PpoStats ppo_update(LearnerState& learner, const RolloutBuffer& buf, const GaeResult& gae_res, double d0,
                           const TrainConfig& cfg, Rng& rng) {
  const LearnerState snapshot = learner;
  PpoStats stats;
  learner.value_norm.update(gae_res.returns);

  std::vector<std::size_t> order(buf.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto mb = static_cast<std::size_t>(cfg.minibatch);
  for (int epoch = 0; epoch < cfg.epochs_per_update; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += mb) {
      const std::size_t len = std::min(mb, order.size() - start);
      const PpoBatch batch = gather_batch(buf, std::span(order).subspan(start, len), gae_res.normalized,
                                          gae_res.returns, learner.value_norm, d0);
      PpoGradients g;
      const PpoLoss loss = ppo_loss(learner.policy, learner.value, batch, cfg, &g);
      if (!std::isfinite(loss.total) || !nn::all_finite(g.policy) || !nn::all_finite(g.value)) {
        learner = snapshot;
        throw Error(ErrorCode::NonFiniteLoss, "non-finite PPO loss; parameters restored");
      }
      stats.grad_norm = nn::clip_grad_norm<Scalar>({&g.policy, &g.value}, cfg.max_grad_norm);
      learner.policy_opt.step(learner.policy.mlp().params(), g.policy);
      learner.value_opt.step(learner.value.mlp().params(), g.value);
      stats.policy_loss += loss.policy_loss;
      stats.value_loss += loss.value_loss;
      stats.entropy += loss.entropy;
      stats.approx_kl += loss.approx_kl;
      stats.clip_fraction += loss.clip_fraction;
      ++stats.minibatches;
    }
  }
  if (!nn::all_finite(learner.policy.mlp().params()) || !nn::all_finite(learner.value.mlp().params())) {
    learner = snapshot;
    throw Error(ErrorCode::NonFiniteLoss, "non-finite parameters after update; parameters restored");
  }
  if (stats.minibatches > 0) {
    const double k = 1.0 / stats.minibatches;
    stats.policy_loss *= k;
    stats.value_loss *= k;
    stats.entropy *= k;
    stats.approx_kl *= k;
    stats.clip_fraction *= k;
  }
  return stats;
}

inline LearnerState make_learner(int n_uav, int m_target, const TrainConfig& cfg, std::uint64_t seed) {
  LearnerState l;
  l.policy = PolicyNet(policy_input_dim(n_uav, m_target), cfg);
  l.value = ValueNet(value_input_dim(n_uav, m_target), cfg);
  Rng rng = make_rng(seed);
  l.policy.init(rng, cfg.init_log_std);
  l.value.init(rng);
  l.policy_opt = nn::Adam<Scalar>(l.policy.mlp().params(), cfg.lr);
  l.value_opt = nn::Adam<Scalar>(l.value.mlp().params(), cfg.lr);
  return l;
}

}  // namespace uavtrack
