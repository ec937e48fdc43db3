#include <gtest/gtest.h>

#include <cmath>

#include "slung/trainer.hpp"

using namespace slung;

namespace {

TrainConfig tiny_train() {
  TrainConfig c;
  c.num_envs = 4;
  c.rollout_len = 16;
  c.total_steps = 4 * 16 * 3;
  c.ppo.minibatches = 4;
  c.ppo.epochs = 2;
  c.seed = 3;
  return c;
}

EnvConfig short_env(int q) {
  EnvConfig e;
  e.num_agents = q;
  e.episode_length = 20;
  return e;
}

}  // namespace

TEST(Train, RunsRequestedUpdatesAndCountsSteps) {
  const TrainConfig c = tiny_train();
  int seen = 0;
  TrainCallbacks cb;
  cb.on_update = [&](const LearningCurveRow& row) {
    EXPECT_EQ(row.update, seen);
    EXPECT_EQ(row.env_steps, (seen + 1) * 64);
    ++seen;
  };
  const TrainResult r = train(c, short_env(2), PhysicalParams{}, cb);
  EXPECT_EQ(seen, 3);
  EXPECT_EQ(r.curve.size(), 3u);
  EXPECT_EQ(r.env_steps, 192);
  // 3 updates x 2 epochs x 4 minibatches
  EXPECT_EQ(r.optimizer.step, 24);
  EXPECT_EQ(r.params.obs_dim(), 31);
  std::int64_t episodes = 0;
  for (const auto& row : r.curve) {
    EXPECT_TRUE(std::isfinite(row.loss.total));
    EXPECT_EQ(std::isnan(row.mean_return), row.episodes == 0);
    EXPECT_DOUBLE_EQ(row.mean_step_reward, row.reward_terms[15]);
    episodes += row.episodes;
  }
  // 20-step episodes must finish within 48 steps per env
  EXPECT_GE(episodes, 4);
}

TEST(Train, SameSeedIsBitIdentical) {
  const TrainConfig c = tiny_train();
  const TrainResult a = train(c, short_env(2), PhysicalParams{});
  const TrainResult b = train(c, short_env(2), PhysicalParams{});
  EXPECT_EQ(flatten(a.params), flatten(b.params));
  for (std::size_t k = 0; k < a.curve.size(); ++k) {
    EXPECT_EQ(a.curve[k].loss.total, b.curve[k].loss.total);
    if (a.curve[k].episodes) EXPECT_EQ(a.curve[k].mean_return, b.curve[k].mean_return);
  }
  TrainConfig other = c;
  other.seed = 4;
  EXPECT_NE(flatten(train(other, short_env(2), PhysicalParams{}).params), flatten(a.params));
}

TEST(Train, WorkerCountDoesNotChangeResults) {
  TrainConfig c = tiny_train();
  const TrainResult one = train(c, short_env(3), PhysicalParams{});
  c.num_workers = 3;
  const TrainResult three = train(c, short_env(3), PhysicalParams{});
  EXPECT_EQ(flatten(one.params), flatten(three.params));
}

TEST(Train, CheckpointCallbackCadence) {
  TrainConfig c = tiny_train();
  c.total_steps = 64 * 5;
  c.checkpoint_every = 2;
  std::vector<std::int64_t> at;
  TrainCallbacks cb;
  cb.on_checkpoint = [&](const PolicyParams&, const OptimizerState&, std::int64_t u,
                         std::int64_t steps) {
    at.push_back(u);
    EXPECT_EQ(steps, u * 64);
  };
  train(c, short_env(1), PhysicalParams{}, cb);
  EXPECT_EQ(at, (std::vector<std::int64_t>{2, 4, 5}));
}

TEST(Train, ValidationRejectsBadMinibatching) {
  TrainConfig c = tiny_train();
  c.ppo.minibatches = 7;
  EXPECT_THROW(train(c, short_env(2), PhysicalParams{}), std::invalid_argument);
  c = tiny_train();
  c.num_envs = 0;
  EXPECT_THROW(train(c, short_env(2), PhysicalParams{}), std::invalid_argument);
  c = tiny_train();
  c.ppo.gamma = 1.0;
  EXPECT_THROW(c.validate(2), std::invalid_argument);
}

TEST(Train, EnvironmentFailureBecomesTrainingFault) {
  TrainConfig c = tiny_train();
  EnvConfig e = short_env(2);
  e.reward.lambda_s = 1e308;  // any action change overflows r_safe
  try {
    train(c, e, PhysicalParams{});
    FAIL() << "expected TrainingFault";
  } catch (const TrainingFault& err) {
    EXPECT_NE(std::string(err.what()).find("environment"), std::string::npos);
    EXPECT_NE(std::string(err.what()).find("r_safe"), std::string::npos);
  }
}

TEST(Train, TimeoutBootstrapOnlyMattersWhenEpisodesTimeOut) {
  TrainConfig c = tiny_train();
  TrainConfig off = c;
  off.bootstrap_timeouts = false;
  // 20-step episodes time out inside the 48-step budget
  EXPECT_NE(flatten(train(c, short_env(1), PhysicalParams{}).params),
            flatten(train(off, short_env(1), PhysicalParams{}).params));
  EnvConfig long_env = short_env(1);
  long_env.episode_length = 1000;
  EXPECT_EQ(flatten(train(c, long_env, PhysicalParams{}).params),
            flatten(train(off, long_env, PhysicalParams{}).params));
}
