#pragma once

// Decentralized multi-quadrotor payload environment: randomized resets,
// domain randomization, disturbances, observations, termination, and the
// composed step.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "slung/math.hpp"
#include "slung/physics.hpp"
#include "slung/random.hpp"
#include "slung/reward.hpp"

namespace slung {

inline constexpr int kActionDim = 4;

struct Bounds {
  Vec3 lo = Vec3(-3.0, -3.0, -0.02);
  Vec3 hi = Vec3(3.0, 3.0, 4.0);

  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
};

struct DRConfig {
  double base_thrust_lo = 0.105;  // N
  double base_thrust_hi = 0.15;
  double motor_offset_std = 0.008;
  double thrust_clip_lo = 0.095;
  double thrust_clip_hi = 0.16;
  double tau_lo = 0.004;  // s
  double tau_hi = 0.05;
  bool rpm_jump_enabled = true;
  double rpm_jump_probability = 0.002;  // per step
  double rpm_jump_scale = 0.05;         // fraction of sqrt(thrust cap)
  double reset_filtered_state_perturbation_std = 0.01;  // sqrt(N)

  void validate() const {
    if (!(base_thrust_lo <= base_thrust_hi && thrust_clip_lo <= thrust_clip_hi &&
          tau_lo <= tau_hi))
      throw std::invalid_argument("env.dr: ranges must be ordered");
    if (!(thrust_clip_lo > 0.0 && tau_lo > 0.0))
      throw std::invalid_argument("env.dr: thrust clip and tau must be > 0");
    if (!(motor_offset_std >= 0.0 && rpm_jump_scale >= 0.0 &&
          reset_filtered_state_perturbation_std >= 0.0))
      throw std::invalid_argument("env.dr: standard deviations must be >= 0");
    if (!(rpm_jump_probability >= 0.0 && rpm_jump_probability <= 1.0))
      throw std::invalid_argument("env.dr.rpm_jump_probability not in [0,1]");
  }
};

struct DisturbanceConfig {
  double quad_force_max = 0.05;    // N
  double quad_torque_max = 0.03;   // N m
  double payload_force_max = 5.0;  // N
  double per_step_probability = 0.01;
  double z_bias_weight = 2.0;

  void validate() const {
    if (!(quad_force_max >= 0.0 && quad_torque_max >= 0.0 &&
          payload_force_max >= 0.0 && z_bias_weight >= 0.0))
      throw std::invalid_argument("env.disturbance: maxima must be >= 0");
    if (!(per_step_probability >= 0.0 && per_step_probability <= 1.0))
      throw std::invalid_argument(
          "env.disturbance.per_step_probability not in [0,1]");
  }
};

struct ResetConfig {
  double ground_start_probability = 0.2;
  double payload_offset = 0.5;       // m, half-extent of the box around target
  double shell_inner_fraction = 0.5;  // shell radius in [f L, L]
  double max_polar_angle = 2.0 * kPi / 3.0;  // quad direction from +z, rad
  double max_tilt = kPi / 3.0;               // rad
  double max_speed = 1.0;                    // m/s
  double max_body_rate = 2.0;                // rad/s
  int max_attempts = 100;

  void validate() const {
    if (!(ground_start_probability >= 0.0 && ground_start_probability <= 1.0))
      throw std::invalid_argument("env.reset.ground_start_probability");
    if (!(shell_inner_fraction > 0.0 && shell_inner_fraction <= 1.0))
      throw std::invalid_argument("env.reset.shell_inner_fraction");
    if (!(payload_offset >= 0.0 && max_tilt >= 0.0 && max_speed >= 0.0 &&
          max_body_rate >= 0.0 && max_polar_angle >= 0.0))
      throw std::invalid_argument("env.reset: ranges must be >= 0");
    if (max_attempts < 1)
      throw std::invalid_argument("env.reset.max_attempts must be >= 1");
  }
};

struct TargetRandomization {
  bool enabled = false;
  double half_extent = 0.5;          // m
  double update_probability = 0.001;  // per step
};

// Per-block diagonal noise scale Λ.
struct NoiseScaling {
  double position = 0.002;
  double velocity = 0.01;
  double rotation = 0.01;
  double body_rate = 0.05;
  double action = 0.0;
};

struct EnvConfig {
  int num_agents = 2;
  Vec3 target_position = Vec3(0.0, 0.0, 1.5);
  std::int64_t episode_length = 3072;
  Bounds bounds;
  double obs_noise_std = 1.0;
  NoiseScaling noise_scaling;
  DRConfig dr;
  DisturbanceConfig disturbance;
  ResetConfig reset;
  TargetRandomization target_randomization;
  RewardConstants reward;

  void validate() const {
    if (num_agents < 1) throw std::invalid_argument("env.num_agents must be >= 1");
    if (episode_length < 1)
      throw std::invalid_argument("env.episode_length must be >= 1");
    if (!(obs_noise_std >= 0.0))
      throw std::invalid_argument("env.obs_noise_std must be >= 0");
    if (!((bounds.hi.array() > bounds.lo.array()).all()))
      throw std::invalid_argument("env.bounds must be non-empty");
    dr.validate();
    disturbance.validate();
    reset.validate();
    reward.validate();
  }
};

// ============================================================================
// Observation layout
// ============================================================================
//
// Global:  [e^P(3) v^P(3) {δ^i(3) vec(R^i)(9) v^i(3) ω^i(3) a^i_prev(4)}_i]
// Agent i: [e^P v^P δ^i vec(R^i) v^i ω^i a^i_prev {δ^j}_{j≠i, ascending j}]
// vec(R) stacks the columns of R.

struct ObservationLayout {
  static constexpr int kCommon = 6;
  static constexpr int kPerAgent = 22;
  static constexpr int kOwn = 28;
  static constexpr int kPeer = 3;

  static int global_dim(int q) { return kCommon + kPerAgent * q; }
  static int agent_dim(int q) { return kOwn + kPeer * (q - 1); }
  static int agent_block(int i) { return kCommon + kPerAgent * i; }

  // Indices into the global vector, in agent-observation order.
  static std::vector<int> agent_gather(int i, int q) {
    std::vector<int> idx;
    idx.reserve(agent_dim(q));
    for (int k = 0; k < kCommon; ++k) idx.push_back(k);
    for (int k = 0; k < kPerAgent; ++k) idx.push_back(agent_block(i) + k);
    for (int j = 0; j < q; ++j) {
      if (j == i) continue;
      for (int k = 0; k < kPeer; ++k) idx.push_back(agent_block(j) + k);
    }
    return idx;
  }
};

inline std::vector<double> noise_scale_vector(int q, const NoiseScaling& s) {
  std::vector<double> scale(ObservationLayout::global_dim(q));
  auto fill = [&](int offset, int n, double v) {
    std::fill_n(scale.begin() + offset, n, v);
  };
  fill(0, 3, s.position);
  fill(3, 3, s.velocity);
  for (int i = 0; i < q; ++i) {
    const int b = ObservationLayout::agent_block(i);
    fill(b, 3, s.position);
    fill(b + 3, 9, s.rotation);
    fill(b + 12, 3, s.velocity);
    fill(b + 15, 3, s.body_rate);
    fill(b + 18, 4, s.action);
  }
  return scale;
}

inline std::vector<double> build_global_observation(
    const WorldState& world, const Vec3& target,
    std::span<const MotorVec> prev_actions) {
  const int q = static_cast<int>(world.quads.size());
  std::vector<double> o(ObservationLayout::global_dim(q));
  const Vec3 e = target - world.payload.position;
  for (int k = 0; k < 3; ++k) {
    o[k] = e[k];
    o[3 + k] = world.payload.velocity[k];
  }
  for (int i = 0; i < q; ++i) {
    const QuadState& s = world.quads[i];
    double* b = o.data() + ObservationLayout::agent_block(i);
    const Vec3 delta = s.position - world.payload.position;
    const Mat3 R = rotation_matrix(s.attitude);
    for (int k = 0; k < 3; ++k) b[k] = delta[k];
    for (int c = 0; c < 3; ++c)
      for (int r = 0; r < 3; ++r) b[3 + 3 * c + r] = R(r, c);
    for (int k = 0; k < 3; ++k) {
      b[12 + k] = s.linear_velocity[k];
      b[15 + k] = s.body_rates[k];
    }
    for (int k = 0; k < 4; ++k) b[18 + k] = prev_actions[i][k];
  }
  return o;
}

inline std::vector<double> gather_agent_observation(
    std::span<const double> global_obs, int i, int q) {
  const std::vector<int> idx = ObservationLayout::agent_gather(i, q);
  std::vector<double> o(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) o[k] = global_obs[idx[k]];
  return o;
}

inline std::vector<double> build_agent_observation(
    int i, const WorldState& world, const Vec3& target,
    std::span<const MotorVec> prev_actions) {
  const int q = static_cast<int>(world.quads.size());
  if (i < 0 || i >= q)
    throw std::out_of_range("build_agent_observation: agent index");
  return gather_agent_observation(
      build_global_observation(world, target, prev_actions), i, q);
}

inline void add_observation_noise(std::span<double> obs, double sigma,
                                  std::span<const double> scale, Rng& rng) {
  if (scale.size() != obs.size())
    throw std::invalid_argument("add_observation_noise: scale length mismatch");
  if (sigma == 0.0) return;
  for (std::size_t k = 0; k < obs.size(); ++k)
    obs[k] += sigma * scale[k] * rng.normal();
}

// ============================================================================
// Randomization
// ============================================================================

struct DomainDraw {
  MotorVec thrust_cap{};
  double lag_time_constant = 0.0;
};

inline DomainDraw sample_domain_randomization(Rng& rng, const DRConfig& dr) {
  DomainDraw d;
  const double base = rng.uniform(dr.base_thrust_lo, dr.base_thrust_hi);
  for (double& cap : d.thrust_cap)
    cap = std::clamp(rng.normal(base, dr.motor_offset_std), dr.thrust_clip_lo,
                     dr.thrust_clip_hi);
  d.lag_time_constant = rng.uniform(dr.tau_lo, dr.tau_hi);
  return d;
}

inline MotorVec map_action(const MotorVec& a, const MotorVec& f_max) {
  MotorVec f{};
  for (std::size_t j = 0; j < 4; ++j)
    f[j] = 0.5 * (std::clamp(a[j], -1.0, 1.0) + 1.0) * f_max[j];
  return f;
}

struct InitialState {
  WorldState world;
  bool ground_start = false;
};

namespace detail {

inline bool formation_ok(const std::vector<QuadState>& quads, double d_min) {
  for (std::size_t i = 0; i < quads.size(); ++i)
    for (std::size_t j = i + 1; j < quads.size(); ++j)
      if ((quads[i].position - quads[j].position).norm() < d_min) return false;
  return true;
}

inline Quat random_attitude(Rng& rng, double max_tilt) {
  const double yaw = rng.uniform(-kPi, kPi);
  const double tilt = rng.uniform(0.0, max_tilt);
  const double heading = rng.uniform(-kPi, kPi);
  const Vec3 axis(std::cos(heading), std::sin(heading), 0.0);
  return (Quat(Eigen::AngleAxisd(tilt, axis)) *
          Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ())))
      .normalized();
}

inline Vec3 random_ball(Rng& rng, double radius) {
  return rng.unit_vector() * rng.uniform(0.0, radius);
}

// Evenly spaced ring above the payload with every cable slightly slack.
inline std::vector<QuadState> nominal_formation(const Vec3& payload, int q,
                                                double length, double d_min) {
  std::vector<QuadState> quads(q);
  double rho = 0.0;
  if (q > 1)
    rho = std::min(0.95 * length,
                   std::max(0.5 * length,
                            1.05 * d_min / (2.0 * std::sin(kPi / q))));
  const double reach = 0.95 * length;
  const double up = std::sqrt(std::max(0.0, reach * reach - rho * rho));
  for (int i = 0; i < q; ++i) {
    const double phi = 2.0 * kPi * i / q;
    quads[i].position =
        payload + Vec3(rho * std::cos(phi), rho * std::sin(phi), up);
  }
  return quads;
}

}  // namespace detail

inline InitialState sample_initial_state(Rng& rng, const EnvConfig& config,
                                         const PhysicalParams& params) {
  const ResetConfig& rc = config.reset;
  const int q = config.num_agents;
  const double L = params.cable_length;
  const double d_min = config.reward.d_min;

  InitialState out;
  WorldState& w = out.world;
  w.quads.assign(q, QuadState{});
  w.motors.assign(q, MotorBank{});
  out.ground_start = rng.bernoulli(rc.ground_start_probability);

  const Vec3 offset(rng.uniform(-rc.payload_offset, rc.payload_offset),
                    rng.uniform(-rc.payload_offset, rc.payload_offset),
                    rng.uniform(-rc.payload_offset, rc.payload_offset));

  if (out.ground_start) {
    Vec3 payload = config.target_position + offset;
    payload.z() = params.payload_radius;
    w.payload.position = payload;
    const double dz = params.quad_collision_radius - params.payload_radius;
    const double rho_max = std::sqrt(std::max(0.0, L * L - dz * dz));
    const double rho_min = std::min(rc.shell_inner_fraction * L, rho_max);
    bool ok = false;
    for (int attempt = 0; attempt < rc.max_attempts && !ok; ++attempt) {
      for (QuadState& s : w.quads) {
        const double rho = rng.uniform(rho_min, rho_max);
        const double phi = rng.uniform(-kPi, kPi);
        s = QuadState{};
        s.position = Vec3(payload.x() + rho * std::cos(phi),
                          payload.y() + rho * std::sin(phi),
                          params.quad_collision_radius);
        s.attitude = Quat(Eigen::AngleAxisd(rng.uniform(-kPi, kPi),
                                            Vec3::UnitZ()));
      }
      ok = detail::formation_ok(w.quads, d_min);
    }
    if (!ok) {
      w.quads = detail::nominal_formation(payload, q, L, d_min);
      for (QuadState& s : w.quads) s.position.z() = params.quad_collision_radius;
    }
    return out;
  }

  Vec3 payload = config.target_position + offset;
  payload.z() = std::max(payload.z(), L + params.quad_collision_radius);
  w.payload.position = payload;
  w.payload.velocity = detail::random_ball(rng, rc.max_speed);

  const double cos_min = std::cos(std::min(rc.max_polar_angle, kPi));
  bool ok = false;
  for (int attempt = 0; attempt < rc.max_attempts && !ok; ++attempt) {
    for (QuadState& s : w.quads) {
      const double radius = rng.uniform(rc.shell_inner_fraction * L, L);
      const double cz = rng.uniform(cos_min, 1.0);
      const double sz = std::sqrt(std::max(0.0, 1.0 - cz * cz));
      const double phi = rng.uniform(-kPi, kPi);
      s.position = payload + radius * Vec3(sz * std::cos(phi),
                                           sz * std::sin(phi), cz);
      s.attitude = detail::random_attitude(rng, rc.max_tilt);
      s.linear_velocity = detail::random_ball(rng, rc.max_speed);
      s.body_rates = detail::random_ball(rng, rc.max_body_rate);
    }
    ok = detail::formation_ok(w.quads, d_min);
    for (const QuadState& s : w.quads)
      ok = ok && s.position.z() >= params.quad_collision_radius &&
           (s.position - payload).norm() >= params.quad_collision_radius;
  }
  if (!ok) w.quads = detail::nominal_formation(payload, q, L, d_min);
  return out;
}

inline std::vector<ExternalWrench> apply_random_disturbances(
    Rng& rng, const DisturbanceConfig& cfg, const WorldState& world) {
  std::vector<ExternalWrench> out;
  if (rng.bernoulli(cfg.per_step_probability)) {
    const int i = static_cast<int>(rng.index(world.quads.size()));
    const Vec3 body_z = body_z_axis(world.quads[i].attitude);
    Vec3 dir = rng.unit_vector() + cfg.z_bias_weight * body_z;
    if (dir.norm() < 1e-12) dir = body_z;
    ExternalWrench w;
    w.target = i;
    w.force = dir.normalized() * rng.uniform(0.0, cfg.quad_force_max);
    w.torque = rng.unit_vector() * rng.uniform(0.0, cfg.quad_torque_max);
    out.push_back(w);
  }
  if (rng.bernoulli(cfg.per_step_probability)) {
    ExternalWrench w;
    w.target = ExternalWrench::kPayload;
    w.force = rng.unit_vector() * rng.uniform(0.0, cfg.payload_force_max);
    out.push_back(w);
  }
  return out;
}

inline Vec3 sample_target_update(Rng& rng, const Vec3& target,
                                 const EnvConfig& config) {
  const TargetRandomization& tr = config.target_randomization;
  if (!tr.enabled) return target;
  const double h = tr.half_extent;
  return config.target_position +
         Vec3(rng.uniform(-h, h), rng.uniform(-h, h), rng.uniform(-h, h));
}

// ============================================================================
// Termination and stepping
// ============================================================================

enum class DoneReason { kNone, kCollision, kOutOfBounds, kTimeout };

inline const char* to_string(DoneReason r) {
  switch (r) {
    case DoneReason::kCollision: return "collision";
    case DoneReason::kOutOfBounds: return "out_of_bounds";
    case DoneReason::kTimeout: return "timeout";
    case DoneReason::kNone: break;
  }
  return "none";
}

struct Termination {
  bool done = false;
  DoneReason reason = DoneReason::kNone;
};

inline bool out_of_bounds(const WorldState& world, const Bounds& b) {
  if (!b.contains(world.payload.position)) return true;
  for (const QuadState& q : world.quads)
    if (!b.contains(q.position)) return true;
  return false;
}

inline Termination check_termination(const WorldState& world,
                                     const EnvConfig& config, bool collided) {
  if (collided) return {true, DoneReason::kCollision};
  if (out_of_bounds(world, config.bounds)) return {true, DoneReason::kOutOfBounds};
  if (world.step_count >= config.episode_length)
    return {true, DoneReason::kTimeout};
  return {};
}

struct EnvState {
  WorldState world;
  Vec3 target = Vec3::Zero();
  std::vector<MotorVec> prev_actions;
  bool terminal = false;
};

struct StepResult {
  std::vector<std::vector<double>> per_agent_obs;
  double shared_reward = 0.0;
  RewardBreakdown reward_breakdown;
  bool done = false;
  DoneReason done_reason = DoneReason::kNone;
  WorldState world;
  std::vector<MotorVec> commanded;  // N, after action mapping
  std::vector<MotorVec> applied;    // N, after motor lag and clip
};

struct ResetResult {
  EnvState state;
  std::vector<std::vector<double>> per_agent_obs;
  bool ground_start = false;
};

inline std::vector<std::vector<double>> observe(const EnvState& s,
                                                const EnvConfig& config,
                                                Rng& rng) {
  const int q = static_cast<int>(s.world.quads.size());
  std::vector<double> global =
      build_global_observation(s.world, s.target, s.prev_actions);
  if (config.obs_noise_std > 0.0) {
    const std::vector<double> scale = noise_scale_vector(q, config.noise_scaling);
    add_observation_noise(global, config.obs_noise_std, scale, rng);
  }
  std::vector<std::vector<double>> obs(q);
  for (int i = 0; i < q; ++i) obs[i] = gather_agent_observation(global, i, q);
  return obs;
}

inline MotorVec hover_action(const MotorVec& thrust_cap,
                             const PhysicalParams& params) {
  const double hover = params.quad_mass * params.gravity / 4.0;
  MotorVec a{};
  for (std::size_t j = 0; j < 4; ++j)
    a[j] = std::clamp(2.0 * hover / thrust_cap[j] - 1.0, -1.0, 1.0);
  return a;
}

inline ResetResult reset(Rng& rng, const EnvConfig& config,
                         const PhysicalParams& params) {
  const int q = config.num_agents;
  std::vector<DomainDraw> draws(q);
  for (DomainDraw& d : draws) d = sample_domain_randomization(rng, config.dr);

  InitialState init = sample_initial_state(rng, config, params);
  ResetResult out;
  out.ground_start = init.ground_start;
  EnvState& s = out.state;
  s.world = std::move(init.world);
  s.target = config.target_position;
  s.prev_actions.resize(q);

  const double hover_proxy = std::sqrt(params.quad_mass * params.gravity / 4.0);
  for (int i = 0; i < q; ++i) {
    MotorBank& m = s.world.motors[i];
    m.thrust_cap = draws[i].thrust_cap;
    m.lag_time_constant = draws[i].lag_time_constant;
    for (std::size_t j = 0; j < 4; ++j) {
      double proxy = 0.0;
      if (!out.ground_start)
        proxy = rng.normal(hover_proxy,
                           config.dr.reset_filtered_state_perturbation_std);
      m.filtered_speed_proxy[j] =
          std::clamp(proxy, 0.0, std::sqrt(m.thrust_cap[j]));
    }
    s.prev_actions[i] = hover_action(m.thrust_cap, params);
  }
  out.per_agent_obs = observe(s, config, rng);
  return out;
}

inline StepResult env_step(EnvState& s, std::span<const MotorVec> joint_action,
                           Rng& rng, const EnvConfig& config,
                           const PhysicalParams& params) {
  if (s.terminal) throw std::logic_error("env_step: episode already terminated");
  const int q = static_cast<int>(s.world.quads.size());
  if (static_cast<int>(joint_action.size()) != q)
    throw std::invalid_argument("env_step: joint action size != num agents");

  StepResult out;
  std::vector<MotorVec> actions(q);
  out.commanded.resize(q);
  out.applied.resize(q);

  if (config.dr.rpm_jump_enabled && rng.bernoulli(config.dr.rpm_jump_probability)) {
    MotorBank& m = s.world.motors[rng.index(q)];
    const std::size_t j = rng.index(4);
    const double cap = std::sqrt(m.thrust_cap[j]);
    const double jump = rng.uniform(-1.0, 1.0) * config.dr.rpm_jump_scale * cap;
    m.filtered_speed_proxy[j] =
        std::clamp(m.filtered_speed_proxy[j] + jump, 0.0, cap);
  }

  for (int i = 0; i < q; ++i) {
    for (std::size_t j = 0; j < 4; ++j)
      actions[i][j] = std::clamp(joint_action[i][j], -1.0, 1.0);
    out.commanded[i] = map_action(actions[i], s.world.motors[i].thrust_cap);
    MotorLagResult lag =
        motor_lag_step(s.world.motors[i], out.commanded[i], params.dt);
    s.world.motors[i] = lag.motors;
    out.applied[i] = lag.applied;
  }

  const std::vector<ExternalWrench> wrenches =
      apply_random_disturbances(rng, config.disturbance, s.world);
  s.world = step_dynamics(s.world, out.applied, wrenches, params);

  const bool collided = check_collision(s.world, config.reward.d_min, params);
  const Termination term = check_termination(s.world, config, collided);
  RewardFlags flags;
  flags.collision = term.reason == DoneReason::kCollision;
  flags.out_of_bounds = term.reason == DoneReason::kOutOfBounds;

  out.reward_breakdown = reward_total(s.world, s.target, actions, s.prev_actions,
                                      flags, config.reward, params.cable_length);
  out.shared_reward = out.reward_breakdown.total;
  out.done = term.done;
  out.done_reason = term.reason;
  s.terminal = term.done;
  s.prev_actions = actions;

  if (config.target_randomization.enabled &&
      rng.bernoulli(config.target_randomization.update_probability))
    s.target = sample_target_update(rng, s.target, config);

  out.per_agent_obs = observe(s, config, rng);
  out.world = s.world;
  return out;
}

}  // namespace slung
