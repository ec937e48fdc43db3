#pragma once

// Deterministic evaluation: mean-action rollouts, recovery metrics,
// figure-eight tracking and one-parameter generalization sweeps.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "slung/env.hpp"
#include "slung/math.hpp"
#include "slung/parallel.hpp"
#include "slung/physics.hpp"
#include "slung/policy.hpp"
#include "slung/random.hpp"

namespace slung {

// Maps per-agent observations (and, for test doubles, the full state) to a
// joint action in [-1, 1].
using Controller = std::function<std::vector<MotorVec>(
    const std::vector<std::vector<double>>& obs, const EnvState& state)>;

inline Controller mean_action_controller(const PolicyParams& policy) {
  return [&policy](const std::vector<std::vector<double>>& obs, const EnvState&) {
    const int q = static_cast<int>(obs.size());
    const int dim = policy.obs_dim();
    ColMatrix<double> x(dim, q);
    for (int i = 0; i < q; ++i) {
      if (static_cast<int>(obs[i].size()) != dim)
        throw std::invalid_argument("policy expects obs_dim " + std::to_string(dim) +
                                    ", got " + std::to_string(obs[i].size()));
      x.col(i) = Eigen::Map<const ColVector<double>>(obs[i].data(), dim);
    }
    const ColMatrix<double> mean = policy.actor.forward(x);
    std::vector<MotorVec> joint(q);
    for (int i = 0; i < q; ++i)
      for (int j = 0; j < 4; ++j) joint[i][j] = mean(j, i);
    return joint;
  };
}

// All motors commanded to zero thrust.
inline Controller motors_off_controller() {
  return [](const std::vector<std::vector<double>>& obs, const EnvState&) {
    return std::vector<MotorVec>(obs.size(), MotorVec{-1.0, -1.0, -1.0, -1.0});
  };
}

struct ReferenceTrajectory {
  Vec3 center = Vec3(0.0, 0.0, 1.5);
  double amplitude_x = 0.5;  // m
  double amplitude_y = 0.25;
  double period = 8.0;  // s

  void validate() const {
    if (!(period > 0.0)) throw std::invalid_argument("reference period must be > 0");
  }
};

// Lemniscate of Gerono in the horizontal plane.
inline Vec3 figure_eight_target(double t, const ReferenceTrajectory& ref) {
  const double w = 2.0 * kPi / ref.period;
  return ref.center + Vec3(ref.amplitude_x * std::sin(w * t),
                           0.5 * ref.amplitude_y * std::sin(2.0 * w * t), 0.0);
}

inline Vec3 figure_eight_velocity(double t, const ReferenceTrajectory& ref) {
  const double w = 2.0 * kPi / ref.period;
  return Vec3(ref.amplitude_x * w * std::cos(w * t),
              ref.amplitude_y * w * std::cos(2.0 * w * t), 0.0);
}

struct EvalConfig {
  double timeout_s = 10.0;
  double success_radius = 0.10;  // m
  double hold_s = 1.0;
  bool observation_noise = false;
  bool record_states = false;  // keep full WorldState snapshots
  int num_workers = 1;
};

struct EpisodeRecord {
  std::vector<double> time;             // one entry per snapshot
  std::vector<Vec3> payload_position;
  std::vector<Vec3> payload_velocity;
  std::vector<Vec3> target;
  std::vector<WorldState> states;       // only with EvalConfig::record_states
  std::vector<std::vector<MotorVec>> actions;    // per step
  std::vector<std::vector<MotorVec>> commanded;  // per step, N
  std::vector<std::vector<MotorVec>> applied;    // per step, N
  std::vector<RewardBreakdown> rewards;          // per step
  DoneReason done_reason = DoneReason::kNone;
  bool ground_start = false;
  bool success = false;
  double time_to_recover = std::numeric_limits<double>::quiet_NaN();
  double mean_speed = 0.0;  // m/s

  std::size_t steps() const { return rewards.size(); }
  double final_distance() const {
    return (payload_position.back() - target.back()).norm();
  }
};

// Fills success, time_to_recover and mean_speed from the recorded series.
inline void score_recovery(EpisodeRecord& rec, const EvalConfig& cfg) {
  rec.success = false;
  rec.time_to_recover = std::numeric_limits<double>::quiet_NaN();
  double entered = -1.0;
  for (std::size_t k = 0; k < rec.time.size(); ++k) {
    const double t = rec.time[k];
    if (t > cfg.timeout_s + 1e-9) break;
    if ((rec.payload_position[k] - rec.target[k]).norm() <= cfg.success_radius) {
      if (entered < 0.0) entered = t;
      if (t - entered >= cfg.hold_s - 1e-9) {
        rec.success = true;
        rec.time_to_recover = entered;
        break;
      }
    } else {
      entered = -1.0;
    }
  }
  if (rec.done_reason == DoneReason::kCollision) rec.success = false;
  double speed = 0.0;
  for (const Vec3& v : rec.payload_velocity) speed += v.norm();
  rec.mean_speed = rec.payload_velocity.empty()
                       ? 0.0
                       : speed / static_cast<double>(rec.payload_velocity.size());
}

struct EpisodeOptions {
  std::int64_t max_steps = 0;  // 0 uses env.episode_length
  const ReferenceTrajectory* reference = nullptr;
  // Called after every step; test doubles may rewrite the state.
  std::function<void(EnvState&)> after_step;
};

inline EpisodeRecord run_episode(const Controller& controller,
                                 const EnvConfig& env_config,
                                 const PhysicalParams& params, std::uint64_t seed,
                                 const EvalConfig& eval = {},
                                 const EpisodeOptions& options = {}) {
  EnvConfig cfg = env_config;
  if (!eval.observation_noise) cfg.obs_noise_std = 0.0;
  if (options.reference) {
    options.reference->validate();
    cfg.target_randomization.enabled = false;
  }
  cfg.validate();
  params.validate();

  Rng rng(seed);
  ResetResult r = reset(rng, cfg, params);
  EnvState state = std::move(r.state);
  std::vector<std::vector<double>> obs = std::move(r.per_agent_obs);
  if (options.reference) {
    state.target = figure_eight_target(0.0, *options.reference);
    obs = observe(state, cfg, rng);
  }

  EpisodeRecord rec;
  rec.ground_start = r.ground_start;
  auto snapshot = [&] {
    rec.time.push_back(state.world.time);
    rec.payload_position.push_back(state.world.payload.position);
    rec.payload_velocity.push_back(state.world.payload.velocity);
    rec.target.push_back(state.target);
    if (eval.record_states) rec.states.push_back(state.world);
  };
  snapshot();

  const std::int64_t limit = options.max_steps > 0
                                 ? std::min(options.max_steps, cfg.episode_length)
                                 : cfg.episode_length;
  for (std::int64_t k = 0; k < limit; ++k) {
    std::vector<MotorVec> joint = controller(obs, state);
    if (options.reference)
      state.target = figure_eight_target(static_cast<double>(k + 1) * params.dt,
                                         *options.reference);
    StepResult step = env_step(state, joint, rng, cfg, params);
    if (options.after_step) options.after_step(state);
    rec.actions.push_back(std::move(joint));
    rec.commanded.push_back(std::move(step.commanded));
    rec.applied.push_back(std::move(step.applied));
    rec.rewards.push_back(step.reward_breakdown);
    snapshot();
    obs = std::move(step.per_agent_obs);
    if (step.done) {
      rec.done_reason = step.done_reason;
      break;
    }
  }
  score_recovery(rec, eval);
  return rec;
}

// ============================================================================
// Recovery
// ============================================================================

struct RecoveryResult {
  double rate = 0.0;
  double mean_speed = 0.0;
  std::vector<EpisodeRecord> trials;  // series dropped, summaries kept
};

inline std::uint64_t trial_seed(std::uint64_t seed, int trial) {
  return derive_seed(seed, 0x7e57000000000000ULL + static_cast<std::uint64_t>(trial));
}

// Trials start from the environment's harsh reset distribution and run until
// timeout_s or termination.
inline RecoveryResult recovery_rate(const Controller& controller,
                                    const EnvConfig& env_config,
                                    const PhysicalParams& params, int n_trials,
                                    const EvalConfig& eval = {},
                                    std::uint64_t seed = 0,
                                    std::function<void(EnvState&)> after_step = {}) {
  if (n_trials < 1) throw std::invalid_argument("n_trials must be >= 1");
  EpisodeOptions opts;
  opts.after_step = std::move(after_step);
  opts.max_steps = static_cast<std::int64_t>(std::ceil(eval.timeout_s / params.dt - 1e-9));
  RecoveryResult out;
  out.trials.resize(n_trials);
  detail::parallel_chunks(n_trials, eval.num_workers, [&](int begin, int end) {
    for (int k = begin; k < end; ++k) {
      EpisodeRecord rec = run_episode(controller, env_config, params,
                                      trial_seed(seed, k), eval, opts);
      EpisodeRecord summary;
      summary.done_reason = rec.done_reason;
      summary.ground_start = rec.ground_start;
      summary.success = rec.success;
      summary.time_to_recover = rec.time_to_recover;
      summary.mean_speed = rec.mean_speed;
      summary.time.push_back(rec.time.back());
      summary.payload_position.push_back(rec.payload_position.back());
      summary.payload_velocity.push_back(rec.payload_velocity.back());
      summary.target.push_back(rec.target.back());
      out.trials[k] = std::move(summary);
    }
  });
  int successes = 0;
  double speed = 0.0;
  for (const EpisodeRecord& t : out.trials) {
    successes += t.success ? 1 : 0;
    speed += t.mean_speed;
  }
  out.rate = static_cast<double>(successes) / n_trials;
  out.mean_speed = speed / n_trials;
  return out;
}

// ============================================================================
// Tracking
// ============================================================================

struct TrackingError {
  double rmse = 0.0;
  double max = 0.0;
};

inline TrackingError tracking_error(const EpisodeRecord& rec,
                                    const ReferenceTrajectory& ref) {
  TrackingError e;
  if (rec.time.empty()) return e;
  double sq = 0.0;
  for (std::size_t k = 0; k < rec.time.size(); ++k) {
    const double d = (rec.payload_position[k] - figure_eight_target(rec.time[k], ref)).norm();
    sq += d * d;
    e.max = std::max(e.max, d);
  }
  e.rmse = std::sqrt(sq / static_cast<double>(rec.time.size()));
  return e;
}

// ============================================================================
// Generalization sweeps
// ============================================================================

enum class SweepAxis { kCableLength, kPayloadMass, kObsNoise, kSeed };

inline const char* to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::kCableLength: return "cable_length";
    case SweepAxis::kPayloadMass: return "payload_mass";
    case SweepAxis::kObsNoise: return "obs_noise";
    case SweepAxis::kSeed: return "seed";
  }
  return "?";
}

inline SweepAxis parse_sweep_axis(const std::string& name) {
  for (SweepAxis a : {SweepAxis::kCableLength, SweepAxis::kPayloadMass,
                      SweepAxis::kObsNoise, SweepAxis::kSeed})
    if (name == to_string(a)) return a;
  throw std::invalid_argument(
      "unknown sweep axis '" + name +
      "' (valid: cable_length, payload_mass, obs_noise, seed)");
}

inline std::vector<double> default_sweep_values(SweepAxis a) {
  switch (a) {
    case SweepAxis::kCableLength: return {0.2, 0.25, 0.3, 0.4, 0.5};
    case SweepAxis::kPayloadMass: return {0.005, 0.01, 0.015, 0.02, 0.03};
    case SweepAxis::kObsNoise: return {0.0, 0.5, 1.0, 1.5, 2.0};
    case SweepAxis::kSeed: return {0, 1, 2, 3, 4};
  }
  return {};
}

struct SweepRow {
  std::string axis;
  double value = 0.0;
  double rate = 0.0;
  double mean_speed = 0.0;
  int n = 0;
};

inline std::vector<SweepRow> generalization_sweep(
    const Controller& controller, const EnvConfig& env_config,
    const PhysicalParams& params, SweepAxis axis, const std::vector<double>& values,
    int n_trials, const EvalConfig& eval = {}, std::uint64_t seed = 0) {
  if (values.empty()) throw std::invalid_argument("sweep values must be non-empty");
  for (double v : values) {
    const bool bad =
        !std::isfinite(v) ||
        ((axis == SweepAxis::kCableLength || axis == SweepAxis::kPayloadMass) &&
         v <= 0.0) ||
        (axis == SweepAxis::kObsNoise && v < 0.0) ||
        (axis == SweepAxis::kSeed && (v < 0.0 || v != std::floor(v)));
    if (bad)
      throw std::invalid_argument(std::string("non-physical ") + to_string(axis) +
                                  " value " + std::to_string(v));
  }
  std::vector<SweepRow> rows;
  for (double v : values) {
    EnvConfig env = env_config;
    PhysicalParams p = params;
    EvalConfig e = eval;
    std::uint64_t s = seed;
    switch (axis) {
      case SweepAxis::kCableLength: p.cable_length = v; break;
      case SweepAxis::kPayloadMass: p.payload_mass = v; break;
      case SweepAxis::kObsNoise:
        env.obs_noise_std = v;
        e.observation_noise = true;
        break;
      case SweepAxis::kSeed: s = static_cast<std::uint64_t>(v); break;
    }
    const RecoveryResult r = recovery_rate(controller, env, p, n_trials, e, s);
    rows.push_back({to_string(axis), v, r.rate, r.mean_speed, n_trials});
  }
  return rows;
}

}  // namespace slung
