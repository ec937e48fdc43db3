#pragma once

// Independent PPO with a single parameter set shared by every agent. Rollouts
// run over N environments with their own random streams, so results do not
// depend on how environments are split across workers.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "slung/env.hpp"
#include "slung/parallel.hpp"
#include "slung/physics.hpp"
#include "slung/policy.hpp"
#include "slung/ppo.hpp"
#include "slung/random.hpp"

namespace slung {

struct TrainConfig {
  PpoHyperParams ppo;
  int num_envs = 16384;
  int rollout_len = 128;
  std::int64_t total_steps = 2'000'000'000;  // environment steps
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // updates; 0 keeps only the final checkpoint
  int num_workers = 1;
  // Timeout steps get γ·V(final observation) added to their reward.
  bool bootstrap_timeouts = true;

  std::int64_t steps_per_update() const {
    return static_cast<std::int64_t>(num_envs) * rollout_len;
  }

  void validate(int num_agents) const {
    if (num_envs < 1) throw std::invalid_argument("train.num_envs must be >= 1");
    if (rollout_len < 1)
      throw std::invalid_argument("train.rollout_len must be >= 1");
    if (total_steps < 1)
      throw std::invalid_argument("train.total_steps must be >= 1");
    if (!(ppo.gamma > 0.0 && ppo.gamma < 1.0))
      throw std::invalid_argument("train.gamma must be in (0, 1)");
    if (!(ppo.gae_lambda >= 0.0 && ppo.gae_lambda <= 1.0))
      throw std::invalid_argument("train.gae_lambda must be in [0, 1]");
    if (ppo.epochs < 1) throw std::invalid_argument("train.epochs must be >= 1");
    const std::int64_t samples = steps_per_update() * num_agents;
    if (ppo.minibatches < 1 || samples % ppo.minibatches != 0)
      throw std::invalid_argument(
          "train.minibatches must divide num_envs * rollout_len * num_agents");
    if (!(ppo.lr > 0.0)) throw std::invalid_argument("train.lr must be > 0");
    if (num_workers < 1)
      throw std::invalid_argument("train.num_workers must be >= 1");
  }
};

struct LearningCurveRow {
  std::int64_t update = 0;
  std::int64_t env_steps = 0;
  double mean_return = std::numeric_limits<double>::quiet_NaN();
  std::int64_t episodes = 0;
  double mean_step_reward = 0.0;
  LossStats loss;
  double grad_norm = 0.0;
  std::array<double, 16> reward_terms{};  // RewardBreakdown::kNames order
};

struct TrainCallbacks {
  std::function<void(const LearningCurveRow&)> on_update;
  std::function<void(const PolicyParams&, const OptimizerState&,
                     std::int64_t update, std::int64_t env_steps)>
      on_checkpoint;
};

struct TrainResult {
  PolicyParams params;
  OptimizerState optimizer;
  std::vector<LearningCurveRow> curve;
  std::int64_t env_steps = 0;
};


inline TrainResult train(const TrainConfig& cfg, const EnvConfig& env_cfg,
                         const PhysicalParams& params,
                         const TrainCallbacks& callbacks = {}) {
  env_cfg.validate();
  params.validate();
  cfg.validate(env_cfg.num_agents);

  const int N = cfg.num_envs;
  const int T = cfg.rollout_len;
  const int Q = env_cfg.num_agents;
  const int obs_dim = ObservationLayout::agent_dim(Q);
  const int A = kActionDim;
  const Eigen::Index per_step = static_cast<Eigen::Index>(N) * Q;
  const Eigen::Index samples = per_step * T;

  Rng trainer_rng(derive_seed(cfg.seed, 0));
  PolicyShape shape;
  shape.obs_dim = obs_dim;
  TrainResult result;
  result.params = make_policy(shape, trainer_rng);
  result.optimizer = OptimizerState(result.params.parameter_count());
  PolicyParams& policy = result.params;

  std::vector<Rng> rngs;
  std::vector<EnvState> envs(N);
  std::vector<std::vector<std::vector<double>>> obs(N);
  rngs.reserve(N);
  for (int e = 0; e < N; ++e) {
    rngs.emplace_back(derive_seed(cfg.seed, static_cast<std::uint64_t>(e) + 1));
    ResetResult r = reset(rngs[e], env_cfg, params);
    envs[e] = std::move(r.state);
    obs[e] = std::move(r.per_agent_obs);
  }
  std::vector<double> episode_return(N, 0.0);

  TrainingBatch batch;
  batch.obs.resize(obs_dim, samples);
  batch.actions.resize(A, samples);
  batch.log_prob.resize(samples);
  batch.advantages.resize(samples);
  batch.returns.resize(samples);
  ColVector<double> values(samples), rewards(samples);
  std::vector<std::uint8_t> dones(static_cast<std::size_t>(samples));

  ColMatrix<double> step_obs(obs_dim, per_step);
  std::vector<std::vector<std::vector<double>>> final_obs(N);
  const std::int64_t updates =
      std::max<std::int64_t>(1, cfg.total_steps / cfg.steps_per_update());

  for (std::int64_t update = 0; update < updates; ++update) {
    std::vector<double> finished_returns;
    std::vector<std::vector<double>> finished_by_env(N);
    std::vector<std::array<double, 16>> term_sums(N, std::array<double, 16>{});

    for (int t = 0; t < T; ++t) {
      for (int e = 0; e < N; ++e)
        for (int i = 0; i < Q; ++i)
          step_obs.col(e * Q + i) =
              Eigen::Map<const ColVector<double>>(obs[e][i].data(), obs_dim);
      const ColMatrix<double> means = policy.actor.forward(step_obs);
      const ColMatrix<double> vals = policy.critic.forward(step_obs);
      const Eigen::Index base = static_cast<Eigen::Index>(t) * per_step;
      batch.obs.middleCols(base, per_step) = step_obs;
      values.segment(base, per_step) = vals.row(0).transpose();

      detail::parallel_chunks(N, cfg.num_workers, [&](int begin, int end) {
        std::vector<MotorVec> joint(Q);
        for (int e = begin; e < end; ++e) {
          for (int i = 0; i < Q; ++i) {
            const Eigen::Index col = base + e * Q + i;
            const SampledAction s = sample_and_logprob(
                means.col(e * Q + i).data(), policy.log_std, rngs[e]);
            for (int j = 0; j < A; ++j) {
              batch.actions(j, col) = s.action[j];
              joint[i][j] = s.action[j];
            }
            batch.log_prob[col] = s.log_prob;
          }
          StepResult r;
          try {
            r = env_step(envs[e], joint, rngs[e], env_cfg, params);
          } catch (const std::exception& ex) {
            throw TrainingFault("environment " + std::to_string(e) + " failed at update " +
                                std::to_string(update) + ", step " +
                                std::to_string(t) + ": " + ex.what());
          }
          episode_return[e] += r.shared_reward;
          const auto terms = r.reward_breakdown.values();
          for (std::size_t k = 0; k < terms.size(); ++k) term_sums[e][k] += terms[k];
          for (int i = 0; i < Q; ++i) {
            const Eigen::Index col = base + e * Q + i;
            rewards[col] = r.shared_reward;
            dones[col] = r.done ? 1 : 0;
          }
          if (r.done) {
            if (cfg.bootstrap_timeouts && r.done_reason == DoneReason::kTimeout)
              final_obs[e] = std::move(r.per_agent_obs);
            finished_by_env[e].push_back(episode_return[e]);
            episode_return[e] = 0.0;
            ResetResult fresh = reset(rngs[e], env_cfg, params);
            envs[e] = std::move(fresh.state);
            obs[e] = std::move(fresh.per_agent_obs);
          } else {
            obs[e] = std::move(r.per_agent_obs);
          }
        }
      });

      std::vector<int> truncated;
      for (int e = 0; e < N; ++e)
        if (!final_obs[e].empty()) truncated.push_back(e);
      if (!truncated.empty()) {
        ColMatrix<double> last(obs_dim, static_cast<Eigen::Index>(truncated.size()) * Q);
        for (std::size_t k = 0; k < truncated.size(); ++k)
          for (int i = 0; i < Q; ++i)
            last.col(static_cast<Eigen::Index>(k) * Q + i) = Eigen::Map<const ColVector<double>>(
                final_obs[truncated[k]][i].data(), obs_dim);
        const ColMatrix<double> v_last = policy.critic.forward(last);
        for (std::size_t k = 0; k < truncated.size(); ++k) {
          const int e = truncated[k];
          for (int i = 0; i < Q; ++i)
            rewards[base + e * Q + i] +=
                cfg.ppo.gamma * v_last(0, static_cast<Eigen::Index>(k) * Q + i);
          final_obs[e].clear();
        }
      }
    }

    for (int e = 0; e < N; ++e)
      for (int i = 0; i < Q; ++i)
        step_obs.col(e * Q + i) =
            Eigen::Map<const ColVector<double>>(obs[e][i].data(), obs_dim);
    const ColMatrix<double> bootstrap = policy.critic.forward(step_obs);

    // GAE along each (env, agent) chain; chain stride is per_step.
    std::vector<double> r_seq(T), v_seq(T), a_seq(T), ret_seq(T);
    std::vector<std::uint8_t> d_seq(T);
    for (Eigen::Index c = 0; c < per_step; ++c) {
      for (int t = 0; t < T; ++t) {
        const Eigen::Index col = static_cast<Eigen::Index>(t) * per_step + c;
        r_seq[t] = rewards[col];
        v_seq[t] = values[col];
        d_seq[t] = dones[col];
      }
      compute_gae(r_seq, v_seq, d_seq, bootstrap(0, c), cfg.ppo.gamma,
                  cfg.ppo.gae_lambda, a_seq, ret_seq);
      for (int t = 0; t < T; ++t) {
        const Eigen::Index col = static_cast<Eigen::Index>(t) * per_step + c;
        batch.advantages[col] = a_seq[t];
        batch.returns[col] = ret_seq[t];
      }
    }

    const UpdateStats us =
        ppo_update(policy, result.optimizer, batch, cfg.ppo, trainer_rng);
    result.env_steps += cfg.steps_per_update();

    LearningCurveRow row;
    row.update = update;
    row.env_steps = result.env_steps;
    for (int e = 0; e < N; ++e)
      finished_returns.insert(finished_returns.end(), finished_by_env[e].begin(),
                              finished_by_env[e].end());
    row.episodes = static_cast<std::int64_t>(finished_returns.size());
    if (!finished_returns.empty()) {
      double sum = 0.0;
      for (double r : finished_returns) sum += r;
      row.mean_return = sum / static_cast<double>(finished_returns.size());
    }
    const double steps = static_cast<double>(N) * T;
    for (int e = 0; e < N; ++e)
      for (std::size_t k = 0; k < 16; ++k) row.reward_terms[k] += term_sums[e][k];
    for (double& v : row.reward_terms) v /= steps;
    row.mean_step_reward = row.reward_terms[15];
    row.loss = us.mean_loss;
    row.grad_norm = us.grad_norm;
    result.curve.push_back(row);
    if (callbacks.on_update) callbacks.on_update(row);

    const bool last = update + 1 == updates;
    const bool periodic =
        cfg.checkpoint_every > 0 && (update + 1) % cfg.checkpoint_every == 0;
    if (callbacks.on_checkpoint && (last || periodic))
      callbacks.on_checkpoint(policy, result.optimizer, update + 1,
                              result.env_steps);
  }
  return result;
}

}  // namespace slung
