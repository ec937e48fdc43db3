#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "reward_oracle.hpp"
#include "slung/reward.hpp"

using namespace slung;
using slung::testing::random_reward_case;
using slung::testing::reward_oracle;

namespace {

// Q quads at height 1.5, each exactly L above its own payload point.
WorldState hover_world(int q, double L) {
  WorldState w;
  w.quads.resize(q);
  w.motors.resize(q);
  for (int i = 0; i < q; ++i) w.quads[i].position = Vec3(0.5 * i, 0, 1.5);
  w.payload.position = Vec3(0.5 * (q - 1) / 2.0, 0, 1.5 - L);
  if (q == 1) w.payload.position = Vec3(0, 0, 1.5 - L);
  return w;
}

std::vector<MotorVec> actions_of(int q, double a) {
  return std::vector<MotorVec>(q, MotorVec{a, a, a, a});
}

}  // namespace

TEST(ShapingPhi, Examples) {
  EXPECT_EQ(shaping_phi(2.0, 0.0), 1.0);
  EXPECT_EQ(shaping_phi(0.0, 7.0), 1.0);
  EXPECT_NEAR(shaping_phi(2.0, 0.5), std::exp(-1.0), 1e-15);
  EXPECT_EQ(shaping_phi(2.0, -0.5), shaping_phi(2.0, 0.5));
  double prev = 1.0;
  for (double x = 0.0; x < 5.0; x += 0.01) {
    EXPECT_LE(shaping_phi(2.0, x), prev);
    prev = shaping_phi(2.0, x);
  }
}

TEST(DistanceGate, Examples) {
  EXPECT_DOUBLE_EQ(distance_gate(0.0, 0.02), 0.02);
  EXPECT_DOUBLE_EQ(distance_gate(1.0, 0.02), 1.02);
  EXPECT_DOUBLE_EQ(distance_gate(1.0 / 3.0, 0.02), 1.02);
  EXPECT_DOUBLE_EQ(distance_gate(0.1, 0.02), 0.32);
}

TEST(RewardTrack, AtTargetAtRest) {
  const TrackTerms t = reward_track(Vec3::Zero(), Vec3::Zero(), RewardConstants{});
  EXPECT_EQ(t.r_pos, 1.0);
  EXPECT_EQ(t.r_dir, 1.0);
  EXPECT_EQ(t.r_track, 1.0);
}

TEST(RewardTrack, MovingStraightAtTarget) {
  const TrackTerms t = reward_track(Vec3(3, 0, 0), Vec3(1, 0, 0), RewardConstants{});
  EXPECT_NEAR(t.r_dir, 1.0, 1e-5);
  // moving away gets Φ_2(2)
  const TrackTerms away = reward_track(Vec3(3, 0, 0), Vec3(-1, 0, 0), RewardConstants{});
  EXPECT_NEAR(away.r_dir, std::exp(-4.0), 1e-5);
}

TEST(RewardTrack, HalfMetreError) {
  const TrackTerms t = reward_track(Vec3(0, 0.5, 0), Vec3::Zero(), RewardConstants{});
  EXPECT_NEAR(t.r_pos, 0.36788, 1e-5);
}

TEST(RewardTrack, AlignmentScaleSaturatesBeyondFiveCentimetres) {
  const RewardConstants k;
  const Vec3 v(0, 1, 0);  // perpendicular: 1 - dot = 1
  for (double d : {0.05, 0.06, 0.5, 3.0}) {
    const TrackTerms t = reward_track(Vec3(d, 0, 0), v, k);
    EXPECT_NEAR(t.r_dir, std::exp(-k.c_s), 1e-12) << d;
  }
  const TrackTerms inside = reward_track(Vec3(0.025, 0, 0), v, k);
  EXPECT_NEAR(inside.r_dir, std::exp(-1.0), 1e-12);
}

TEST(RewardStable, StillLevelHover) {
  const double L = 0.3;
  const WorldState w = hover_world(1, L);
  const StableTerms t = reward_stable(w, Vec3::Zero(), L, RewardConstants{});
  EXPECT_EQ(t.r_velP, 1.0);
  EXPECT_EQ(t.r_velQ, 1.0);
  EXPECT_EQ(t.r_yaw, 1.0);
  EXPECT_EQ(t.r_up, 1.0);
  EXPECT_NEAR(t.r_taut, 2.0, 1e-12);
  EXPECT_NEAR(t.r_stable, (1 + 1 + 10 + 5 + 2) / 5.0, 1e-12);
}

TEST(RewardStable, VelocitySoftWall) {
  const RewardConstants k;
  const double L = 0.3;
  for (const Vec3 e : {Vec3(0, 0, 0), Vec3(0.1, 0, 0), Vec3(1, 1, 0)}) {
    const double wall = k.c_swing * k.v_max * distance_gate(e.norm(), k.c_f);
    WorldState w = hover_world(1, L);
    w.payload.velocity = Vec3(0, wall, 0);
    EXPECT_NEAR(reward_stable(w, e, L, k).r_velP, std::exp(-1.0), 1e-12);
    double prev = 2.0;
    for (double s = 0.0; s < 2.0 * wall; s += wall / 50) {
      w.payload.velocity = Vec3(s, 0, 0);
      const double r = reward_stable(w, e, L, k).r_velP;
      if (s > 0.1 * wall && r > 1e-300) EXPECT_LT(r, prev);
      prev = r;
    }
  }
}

TEST(RewardSafe, SingleQuadDistanceTermIsOne) {
  const WorldState w = hover_world(1, 0.3);
  const auto a = actions_of(1, 0.0);
  EXPECT_EQ(reward_safe(w, a, a, {}, RewardConstants{}).r_dist, 1.0);
}

TEST(RewardSafe, MidpointCommandEnergy) {
  const WorldState w = hover_world(2, 0.3);
  const auto a = actions_of(2, 0.0);  // u = 0.5
  const SafeTerms t = reward_safe(w, a, a, {}, RewardConstants{});
  EXPECT_NEAR(t.r_energy, 2.0 * std::exp(-25.0), 1e-24);
  EXPECT_NEAR(t.r_energy, 2.8e-11, 1e-12);
  EXPECT_EQ(t.r_smooth, 0.0);
}

TEST(RewardSafe, CollisionCostsTwo) {
  const WorldState w = hover_world(2, 0.3);
  const auto a = actions_of(2, 0.0);
  RewardFlags f;
  const double base = reward_safe(w, a, a, f, RewardConstants{}).r_safe;
  f.collision = true;
  EXPECT_NEAR(reward_safe(w, a, a, f, RewardConstants{}).r_safe - base, -2.0, 1e-12);
  f.out_of_bounds = true;
  EXPECT_NEAR(reward_safe(w, a, a, f, RewardConstants{}).r_safe - base, -4.0, 1e-12);
}

TEST(RewardSafe, DistanceRampBetweenMinAndSafe) {
  WorldState w = hover_world(2, 0.3);
  const auto a = actions_of(2, 0.0);
  const RewardConstants k;
  w.quads[1].position = w.quads[0].position + Vec3(0.165, 0, 0);
  EXPECT_NEAR(reward_safe(w, a, a, {}, k).r_dist, 0.5, 1e-12);
  w.quads[1].position = w.quads[0].position + Vec3(0.1, 0, 0);
  EXPECT_EQ(reward_safe(w, a, a, {}, k).r_dist, 0.0);
  w.quads[1].position = w.quads[0].position + Vec3(0.2, 0, 0);
  EXPECT_EQ(reward_safe(w, a, a, {}, k).r_dist, 1.0);
}

TEST(RewardSafe, SmoothnessOnRawActions) {
  const WorldState w = hover_world(1, 0.3);
  const std::vector<MotorVec> a{{1.0, -1.0, 0.0, 0.0}}, prev{{0.0, 0.0, 0.0, 0.0}};
  // temporal = 2, balance = 2
  EXPECT_NEAR(reward_safe(w, a, prev, {}, RewardConstants{}).r_smooth, 2.0, 1e-15);
}

TEST(RewardTotal, HoverMatchesOracle) {
  const double L = 0.3;
  const WorldState w = hover_world(1, L);
  const Vec3 target = w.payload.position;
  const auto a = actions_of(1, 0.1);
  const RewardBreakdown b = reward_total(w, target, a, a, {}, RewardConstants{}, L);

  slung::testing::OracleInput in;
  for (int k = 0; k < 3; ++k) {
    in.target[k] = target[k];
    in.pP[k] = w.payload.position[k];
    in.vP[k] = 0;
  }
  slung::testing::OracleQuad q{};
  q.p[0] = 0, q.p[1] = 0, q.p[2] = 1.5;
  q.q[0] = 1;
  for (int j = 0; j < 4; ++j) q.a[j] = q.a_prev[j] = 0.1;
  in.quads.push_back(q);
  EXPECT_NEAR(b.total, reward_oracle(in), 1e-12);
  EXPECT_GT(b.total, 3.0);
}

TEST(RewardTotal, FlagsDominate) {
  std::mt19937_64 gen(11);
  for (int n = 0; n < 2000; ++n) {
    auto c = random_reward_case(gen);
    c.flags.collision = c.flags.out_of_bounds = true;
    // bound the positive part: keep quads level and within one cable length
    for (auto& q : c.world.quads) {
      q.attitude = Quat::Identity();
      q.body_rates.setZero();
      q.position = c.world.payload.position + Vec3(0, 0, 0.3);
    }
    EXPECT_LT(reward_total(c.world, c.target, c.actions, c.prev_actions, c.flags,
                           RewardConstants{}, 0.3)
                  .total,
              0.0);
  }
}

TEST(RewardTotal, ZeroTrackingLeavesSafetyExactly) {
  std::mt19937_64 gen(5);
  auto c = random_reward_case(gen);
  RewardConstants k;
  k.s = 1e6;  // r_pos -> 0
  c.world.payload.velocity = Vec3::Zero();
  c.target = c.world.payload.position + Vec3(5, 0, 0);
  const auto b = reward_total(c.world, c.target, c.actions, c.prev_actions, c.flags, k, 0.3);
  // r_dir = 1 with zero velocity, r_pos = 0 so r_track = 0.5; scale it away
  const TrackTerms t = reward_track(c.target - c.world.payload.position,
                                    c.world.payload.velocity, k);
  EXPECT_EQ(t.r_pos, 0.0);
  EXPECT_EQ(b.total, t.r_track * b.r_stable + b.r_safe);

  RewardBreakdown zero = b;
  zero.r_track = 0.0;
  EXPECT_EQ(zero.r_track * zero.r_stable + zero.r_safe, b.r_safe);
}

TEST(RewardTotal, NonFiniteTermNamesIt) {
  WorldState w = hover_world(1, 0.3);
  w.payload.velocity = Vec3(std::nan(""), 0, 0);
  const auto a = actions_of(1, 0.0);
  try {
    reward_total(w, Vec3::Zero(), a, a, {}, RewardConstants{}, 0.3);
    FAIL() << "expected RewardFault";
  } catch (const RewardFault& e) {
    EXPECT_EQ(e.term(), "r_dir");
  }
}

TEST(RewardTotal, ActionCountMismatchThrows) {
  const WorldState w = hover_world(2, 0.3);
  const auto a = actions_of(1, 0.0);
  EXPECT_THROW(reward_total(w, Vec3::Zero(), a, a, {}, RewardConstants{}, 0.3),
               std::invalid_argument);
}

TEST(RewardTotal, InvariantUnderAgentRelabeling) {
  std::mt19937_64 gen(9);
  for (int n = 0; n < 500; ++n) {
    auto c = random_reward_case(gen);
    const RewardConstants k;
    const double base =
        reward_total(c.world, c.target, c.actions, c.prev_actions, c.flags, k, 0.3).total;
    std::vector<int> perm(c.world.quads.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    WorldState w2 = c.world;
    std::vector<MotorVec> a2, p2;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      w2.quads[i] = c.world.quads[perm[i]];
      a2.push_back(c.actions[perm[i]]);
      p2.push_back(c.prev_actions[perm[i]]);
    }
    EXPECT_NEAR(reward_total(w2, c.target, a2, p2, c.flags, k, 0.3).total, base, 1e-12);
  }
}

TEST(RewardTotal, MatchesOracleOnRandomStates) {
  std::mt19937_64 gen(2024);
  for (int n = 0; n < 10000; ++n) {
    const auto c = random_reward_case(gen);
    RewardBreakdown ref;
    reward_oracle(c.oracle, &ref);
    const RewardBreakdown b = reward_total(c.world, c.target, c.actions, c.prev_actions,
                                           c.flags, RewardConstants{}, c.oracle.L);
    const auto got = b.values(), want = ref.values();
    for (std::size_t i = 0; i < got.size(); ++i)
      ASSERT_NEAR(got[i], want[i], 1e-12) << RewardBreakdown::kNames[i] << " case " << n;
  }
}

TEST(RewardTotal, BoundedTermsStayInRange) {
  std::mt19937_64 gen(77);
  for (int n = 0; n < 100000; ++n) {
    const auto c = random_reward_case(gen);
    const RewardBreakdown b = reward_total(c.world, c.target, c.actions, c.prev_actions,
                                           c.flags, RewardConstants{}, 0.3);
    for (double v : {b.r_pos, b.r_dir, b.r_velP, b.r_velQ, b.r_yaw, b.r_up, b.r_dist}) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
    ASSERT_GE(b.r_energy, 0.0);
    ASSERT_LE(b.r_energy, 2.0);
    ASSERT_GE(b.r_smooth, 0.0);
    double reach = 0.0;
    for (const auto& q : c.world.quads)
      reach = std::max(reach, (q.position - c.world.payload.position).norm());
    ASSERT_GE(b.r_taut, 0.0);
    ASSERT_LE(b.r_taut, 2.0 * reach / 0.3 + 1e-12);
    ASSERT_TRUE(std::isfinite(b.total));
  }
}
