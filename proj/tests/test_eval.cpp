#include <gtest/gtest.h>

#include <cmath>

#include "slung/eval.hpp"

using namespace slung;

namespace {

EnvConfig eval_env(int q) {
  EnvConfig e;
  e.num_agents = q;
  return e;
}

// Test double: puts the payload on the target at rest with level quads above
// it after every step.
void teleport(EnvState& s) {
  s.world.payload.position = s.target;
  s.world.payload.velocity.setZero();
  const int q = static_cast<int>(s.world.quads.size());
  for (int i = 0; i < q; ++i) {
    const double phi = 2.0 * kPi * i / q;
    QuadState& qs = s.world.quads[i];
    qs.position = s.target + Vec3(q > 1 ? 0.12 * std::cos(phi) : 0.0,
                                  q > 1 ? 0.12 * std::sin(phi) : 0.0, 0.25);
    qs.attitude = Quat::Identity();
    qs.linear_velocity.setZero();
    qs.body_rates.setZero();
  }
}

Controller hover_controller() {
  return [](const std::vector<std::vector<double>>& obs, const EnvState& s) {
    std::vector<MotorVec> a(obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i)
      a[i] = hover_action(s.world.motors[i].thrust_cap, PhysicalParams{});
    return a;
  };
}

}  // namespace

TEST(RunEpisode, SameSeedSameRecord) {
  Rng rng(1);
  PolicyShape shape;
  shape.obs_dim = 31;
  const PolicyParams p = make_policy(shape, rng);
  const Controller c = mean_action_controller(p);
  EnvConfig env = eval_env(2);
  env.episode_length = 300;
  const EpisodeRecord a = run_episode(c, env, PhysicalParams{}, 5);
  const EpisodeRecord b = run_episode(c, env, PhysicalParams{}, 5);
  ASSERT_EQ(a.steps(), b.steps());
  EXPECT_EQ(a.payload_position, b.payload_position);
  EXPECT_EQ(a.done_reason, b.done_reason);
  for (std::size_t k = 0; k < a.steps(); ++k) EXPECT_EQ(a.rewards[k].total, b.rewards[k].total);
}

TEST(RunEpisode, ObservationSizeMismatchIsUsageError) {
  Rng rng(2);
  PolicyShape shape;
  shape.obs_dim = 28;
  const PolicyParams p = make_policy(shape, rng);
  EXPECT_THROW(run_episode(mean_action_controller(p), eval_env(2), PhysicalParams{}, 1),
               std::invalid_argument);
}

TEST(RunEpisode, MotorsOffFallsOutOfTheSky) {
  EnvConfig env = eval_env(2);
  env.reset.ground_start_probability = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const EpisodeRecord r = run_episode(motors_off_controller(), env, PhysicalParams{}, seed);
    EXPECT_TRUE(r.done_reason == DoneReason::kOutOfBounds ||
                r.done_reason == DoneReason::kCollision)
        << to_string(r.done_reason);
    EXPECT_FALSE(r.success);
  }
}

TEST(RunEpisode, RecordLengthBoundedByEpisode) {
  const EpisodeRecord r =
      run_episode(hover_controller(), eval_env(1), PhysicalParams{}, 3, EvalConfig{});
  EXPECT_LE(r.time.size(), 3073u);
  EXPECT_EQ(r.time.size(), r.steps() + 1);
  EXPECT_EQ(r.actions.size(), r.steps());
  EXPECT_EQ(r.applied.size(), r.steps());
  if (r.done_reason == DoneReason::kTimeout) EXPECT_EQ(r.time.size(), 3073u);
}

TEST(RunEpisode, RecordStatesKeepsSnapshots) {
  EvalConfig e;
  e.record_states = true;
  EpisodeOptions o;
  o.max_steps = 10;
  const EpisodeRecord r = run_episode(hover_controller(), eval_env(2), PhysicalParams{}, 4, e, o);
  ASSERT_EQ(r.states.size(), r.time.size());
  EXPECT_EQ(r.states.back().step_count, static_cast<std::int64_t>(r.steps()));
}

TEST(Recovery, MotorsOffNeverRecovers) {
  EnvConfig env = eval_env(2);
  env.reset.ground_start_probability = 0.0;
  const RecoveryResult r = recovery_rate(motors_off_controller(), env, PhysicalParams{}, 10);
  EXPECT_EQ(r.rate, 0.0);
  EXPECT_EQ(r.trials.size(), 10u);
}

TEST(Recovery, TeleportOracleAlwaysRecovers) {
  const RecoveryResult r = recovery_rate(hover_controller(), eval_env(2), PhysicalParams{}, 8,
                                         EvalConfig{}, 0, teleport);
  EXPECT_EQ(r.rate, 1.0);
  for (const auto& t : r.trials) {
    EXPECT_TRUE(t.success);
    EXPECT_NEAR(t.time_to_recover, 0.004, 1e-12);
  }
}

TEST(Recovery, ScoringHoldAndTimeout) {
  EvalConfig cfg;
  EpisodeRecord rec;
  // enters the ball at t=2, leaves at 2.5, re-enters at 3 and stays
  for (int k = 0; k <= 2500; ++k) {
    const double t = k * 0.004;
    rec.time.push_back(t);
    const bool inside = (t >= 2.0 && t < 2.5) || t >= 3.0;
    rec.payload_position.push_back(Vec3(inside ? 0.05 : 0.5, 0, 0));
    rec.payload_velocity.push_back(Vec3(0.2, 0, 0));
    rec.target.push_back(Vec3::Zero());
  }
  score_recovery(rec, cfg);
  EXPECT_TRUE(rec.success);
  EXPECT_NEAR(rec.time_to_recover, 3.0, 1e-9);
  EXPECT_NEAR(rec.mean_speed, 0.2, 1e-12);
  rec.done_reason = DoneReason::kCollision;
  score_recovery(rec, cfg);
  EXPECT_FALSE(rec.success);
  rec.done_reason = DoneReason::kNone;
  cfg.timeout_s = 3.5;
  score_recovery(rec, cfg);
  EXPECT_FALSE(rec.success);
}

TEST(Recovery, LargerRadiusNeverLowersRate) {
  EnvConfig env = eval_env(1);
  env.reset.ground_start_probability = 0.0;
  double prev = -1.0;
  for (double radius : {0.05, 0.1, 0.3, 1.0, 3.0}) {
    EvalConfig e;
    e.success_radius = radius;
    e.timeout_s = 2.0;
    e.hold_s = 0.2;
    const double rate = recovery_rate(hover_controller(), env, PhysicalParams{}, 6, e, 1).rate;
    EXPECT_GE(rate, prev) << radius;
    prev = rate;
  }
}

TEST(Recovery, WorkerCountDoesNotChangeMetrics) {
  EvalConfig e;
  e.timeout_s = 1.0;
  const auto a = recovery_rate(hover_controller(), eval_env(2), PhysicalParams{}, 6, e, 9);
  e.num_workers = 3;
  const auto b = recovery_rate(hover_controller(), eval_env(2), PhysicalParams{}, 6, e, 9);
  EXPECT_EQ(a.rate, b.rate);
  EXPECT_EQ(a.mean_speed, b.mean_speed);
  EXPECT_THROW(recovery_rate(hover_controller(), eval_env(2), PhysicalParams{}, 0), std::invalid_argument);
}

TEST(FigureEight, StartAndPeriod) {
  const ReferenceTrajectory ref;
  EXPECT_LT((figure_eight_target(0.0, ref) - ref.center).norm(), 1e-15);
  EXPECT_LT((figure_eight_target(ref.period, ref) - ref.center).norm(), 1e-12);
  EXPECT_LT((figure_eight_target(3.3 + ref.period, ref) - figure_eight_target(3.3, ref)).norm(),
            1e-12);
  // quarter period is the far x lobe
  const Vec3 q = figure_eight_target(2.0, ref);
  EXPECT_NEAR(q.x(), 0.5, 1e-12);
  EXPECT_NEAR(q.y(), 0.0, 1e-12);
}

TEST(FigureEight, NumericSpeedMatchesAnalytic) {
  const ReferenceTrajectory ref;
  const double h = 1e-5;
  double max_num = 0, max_an = 0;
  for (double t = 0; t <= ref.period; t += 1e-3) {
    const Vec3 num =
        (figure_eight_target(t + h, ref) - figure_eight_target(t - h, ref)) / (2 * h);
    const Vec3 an = figure_eight_velocity(t, ref);
    EXPECT_LT((num - an).norm(), 1e-6);
    max_num = std::max(max_num, num.norm());
    max_an = std::max(max_an, an.norm());
  }
  EXPECT_NEAR(max_num, max_an, 1e-6);
}

TEST(FigureEight, DiscreteStepSpeedBounded) {
  const ReferenceTrajectory ref;
  double max_an = 0;
  for (double t = 0; t <= ref.period; t += 1e-3)
    max_an = std::max(max_an, figure_eight_velocity(t, ref).norm());
  for (int k = 0; k < 2000; ++k) {
    const double t = k * 0.004;
    const double v =
        (figure_eight_target(t + 0.004, ref) - figure_eight_target(t, ref)).norm() / 0.004;
    ASSERT_LT(v, 2.0 * max_an);
  }
}

TEST(FigureEight, EpisodeFollowsReferenceTargets) {
  const ReferenceTrajectory ref;
  EpisodeOptions o;
  o.reference = &ref;
  o.max_steps = 50;
  const EpisodeRecord r = run_episode(hover_controller(), eval_env(1), PhysicalParams{}, 2, {}, o);
  for (std::size_t k = 0; k < r.time.size(); ++k)
    EXPECT_LT((r.target[k] - figure_eight_target(r.time[k], ref)).norm(), 1e-12);
}

TEST(TrackingError, Examples) {
  const ReferenceTrajectory ref;
  EpisodeRecord rec;
  for (int k = 0; k < 100; ++k) {
    rec.time.push_back(k * 0.004);
    rec.payload_position.push_back(figure_eight_target(k * 0.004, ref));
  }
  TrackingError e = tracking_error(rec, ref);
  EXPECT_EQ(e.rmse, 0.0);
  EXPECT_EQ(e.max, 0.0);
  for (auto& p : rec.payload_position) p += Vec3(0, 0, 0.2);
  e = tracking_error(rec, ref);
  EXPECT_NEAR(e.rmse, 0.2, 1e-12);
  EXPECT_NEAR(e.max, 0.2, 1e-12);
}

TEST(TrackingError, MatchesBruteForce) {
  const ReferenceTrajectory ref;
  Rng rng(3);
  for (int n = 0; n < 50; ++n) {
    EpisodeRecord rec;
    const int len = 1 + static_cast<int>(rng.index(300));
    std::vector<double> d(len);
    for (int k = 0; k < len; ++k) {
      const double t = k * 0.004;
      rec.time.push_back(t);
      const Vec3 off(rng.normal(), rng.normal(), rng.normal());
      rec.payload_position.push_back(figure_eight_target(t, ref) + 0.1 * off);
      d[k] = 0.1 * off.norm();
    }
    double sq = 0, mx = 0;
    for (double x : d) sq += x * x, mx = std::max(mx, x);
    const TrackingError e = tracking_error(rec, ref);
    EXPECT_NEAR(e.rmse, std::sqrt(sq / len), 1e-12);
    EXPECT_NEAR(e.max, mx, 1e-12);
  }
}

TEST(Sweep, RowsPerValueAndValidation) {
  EvalConfig e;
  e.timeout_s = 0.2;
  const auto rows = generalization_sweep(hover_controller(), eval_env(1), PhysicalParams{},
                                         SweepAxis::kCableLength, {0.2, 0.3, 0.4}, 2, e);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1].axis, "cable_length");
  EXPECT_EQ(rows[2].value, 0.4);
  EXPECT_EQ(rows[0].n, 2);
  const auto single = generalization_sweep(hover_controller(), eval_env(1), PhysicalParams{},
                                           SweepAxis::kSeed, {7}, 3, e);
  const auto direct = recovery_rate(hover_controller(), eval_env(1), PhysicalParams{}, 3, e, 7);
  EXPECT_EQ(single[0].rate, direct.rate);
  EXPECT_EQ(single[0].mean_speed, direct.mean_speed);

  for (auto [axis, bad] : {std::pair{SweepAxis::kCableLength, 0.0},
                           std::pair{SweepAxis::kPayloadMass, -0.01},
                           std::pair{SweepAxis::kObsNoise, -1.0},
                           std::pair{SweepAxis::kSeed, 1.5}})
    EXPECT_THROW(generalization_sweep(hover_controller(), eval_env(1), PhysicalParams{}, axis,
                                      {bad}, 1, e),
                 std::invalid_argument);
  EXPECT_THROW(generalization_sweep(hover_controller(), eval_env(1), PhysicalParams{},
                                    SweepAxis::kSeed, {}, 1, e),
               std::invalid_argument);
}

TEST(Sweep, AxisNamesAndDefaults) {
  EXPECT_EQ(parse_sweep_axis("obs_noise"), SweepAxis::kObsNoise);
  try {
    parse_sweep_axis("wind");
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("payload_mass"), std::string::npos);
  }
  const auto noise = default_sweep_values(SweepAxis::kObsNoise);
  EXPECT_NE(std::find(noise.begin(), noise.end(), 0.0), noise.end());
  EXPECT_NE(std::find(noise.begin(), noise.end(), 1.0), noise.end());
}
