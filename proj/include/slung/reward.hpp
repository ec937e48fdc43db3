#pragma once

// Composite team reward r = r_track * r_stable + r_safe.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

#include "slung/math.hpp"
#include "slung/physics.hpp"

namespace slung {

struct RewardConstants {
  double s = 2.0;
  double c_f = 0.02;
  double c_g = 40.0;
  double c_s = 2.0;
  double c_exp = 8.0;
  double c_swing = 0.75;
  double c_coll = 10.0;
  double c_oob = 10.0;
  double c_b = 50.0;
  double d_min = 0.15;   // m
  double d_safe = 0.18;  // m
  double lambda_yaw = 10.0;
  double lambda_up = 5.0;
  double lambda_s = 10.0;
  double v_max = 1.5;  // m/s
  double eps = 1e-6;

  void validate() const {
    if (!(d_safe > d_min && d_min > 0.0))
      throw std::invalid_argument("reward: require d_safe > d_min > 0");
    if (!(v_max > 0.0)) throw std::invalid_argument("reward.v_max must be > 0");
    if (!(s > 0.0 && c_exp > 0.0 && c_swing > 0.0 && c_g > 0.0 &&
          c_s > 0.0 && c_b > 0.0 && eps > 0.0))
      throw std::invalid_argument("reward: scales must be positive");
  }
};

struct RewardBreakdown {
  double r_pos = 0, r_dir = 0, r_track = 0;
  double r_velP = 0, r_velQ = 0, r_yaw = 0, r_up = 0, r_taut = 0,
         r_stable = 0;
  double r_dist = 0, r_coll = 0, r_oob = 0, r_smooth = 0, r_energy = 0,
         r_safe = 0;
  double total = 0;

  // Column order used by every CSV export.
  static constexpr std::array<const char*, 16> kNames = {
      "r_pos",   "r_dir",   "r_track", "r_velP",  "r_velQ", "r_yaw",
      "r_up",    "r_taut",  "r_stable", "r_dist", "r_coll", "r_oob",
      "r_smooth", "r_energy", "r_safe", "total"};

  std::array<double, 16> values() const {
    return {r_pos,  r_dir,  r_track, r_velP,   r_velQ,   r_yaw,
            r_up,   r_taut, r_stable, r_dist,  r_coll,   r_oob,
            r_smooth, r_energy, r_safe, total};
  }
};

class RewardFault : public std::runtime_error {
 public:
  explicit RewardFault(const std::string& term)
      : std::runtime_error("non-finite reward term: " + term), term_(term) {}
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

struct RewardFlags {
  bool collision = false;
  bool out_of_bounds = false;
};

inline double shaping_phi(double s, double x) { return std::exp(-s * std::abs(x)); }

inline double distance_gate(double d, double c_f) {
  return std::min(3.0 * d, 1.0) + c_f;
}

struct TrackTerms {
  double r_track, r_pos, r_dir;
};

inline TrackTerms reward_track(const Vec3& payload_error,
                               const Vec3& payload_velocity,
                               const RewardConstants& k) {
  const double dist = payload_error.norm();
  const double r_pos = shaping_phi(k.s, dist);
  const Vec3 v_dir = payload_velocity / (payload_velocity.norm() + k.eps);
  const Vec3 e_dir = payload_error / (dist + k.eps);
  const double s_align = std::min(k.c_g * dist, k.c_s);
  const double r_dir = shaping_phi(s_align, 1.0 - v_dir.dot(e_dir));
  return {0.5 * (r_pos + r_dir), r_pos, r_dir};
}

struct StableTerms {
  double r_stable, r_velP, r_velQ, r_yaw, r_up, r_taut;
};

inline StableTerms reward_stable(const WorldState& world,
                                 const Vec3& payload_error, double cable_length,
                                 const RewardConstants& k) {
  const double gate = distance_gate(payload_error.norm(), k.c_f);
  const double n = static_cast<double>(world.quads.size());

  const double swing_cap = k.c_swing * k.v_max * gate;
  const double r_velP =
      std::exp(-std::pow(world.payload.velocity.norm() / swing_cap, k.c_exp));

  double vel_q = 0, yaw = 0, up = 0, radial = 0, vertical = 0;
  for (const QuadState& q : world.quads) {
    vel_q += std::exp(
        -std::pow(q.linear_velocity.norm() / (k.v_max * gate), k.c_exp));
    yaw += shaping_phi(k.s, q.body_rates.z());
    up += shaping_phi(k.s, tilt_angle(q.attitude));
    radial += (q.position - world.payload.position).norm();
    vertical += q.position.z() - world.payload.position.z();
  }
  StableTerms t{};
  t.r_velP = r_velP;
  t.r_velQ = vel_q / n;
  t.r_yaw = yaw / n;
  t.r_up = up / n;
  t.r_taut = (radial / n + vertical / n) / cable_length;
  t.r_stable = (t.r_velP + t.r_velQ + k.lambda_yaw * t.r_yaw +
                k.lambda_up * t.r_up + t.r_taut) /
               5.0;
  return t;
}

struct SafeTerms {
  double r_safe, r_dist, r_coll, r_oob, r_smooth, r_energy;
};

// Smoothness uses the raw actions in [-1, 1]; the saturation barrier uses the
// normalized command u = (a + 1) / 2 whose limits are 0 and 1.
inline SafeTerms reward_safe(const WorldState& world,
                             std::span<const MotorVec> actions,
                             std::span<const MotorVec> prev_actions,
                             const RewardFlags& flags,
                             const RewardConstants& k) {
  const std::size_t nq = world.quads.size();
  SafeTerms t{};
  if (nq == 1) {
    t.r_dist = 1.0;
  } else {
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < nq; ++i)
      for (std::size_t j = i + 1; j < nq; ++j) {
        const double d =
            (world.quads[i].position - world.quads[j].position).norm();
        sum += std::clamp((d - k.d_min) / (k.d_safe - k.d_min), 0.0, 1.0);
        ++pairs;
      }
    t.r_dist = sum / static_cast<double>(pairs);
  }
  t.r_coll = flags.collision ? k.c_coll : 0.0;
  t.r_oob = flags.out_of_bounds ? k.c_oob : 0.0;

  double temporal = 0.0, balance = 0.0, energy = 0.0;
  for (std::size_t i = 0; i < nq; ++i) {
    const MotorVec& a = actions[i];
    const double mean = (a[0] + a[1] + a[2] + a[3]) / 4.0;
    for (std::size_t j = 0; j < 4; ++j) {
      temporal += std::abs(a[j] - prev_actions[i][j]);
      balance += std::abs(a[j] - mean);
      const double u = 0.5 * (a[j] + 1.0);
      energy += std::exp(-k.c_b * std::abs(u)) + std::exp(k.c_b * (u - 1.0));
    }
  }
  const double n = static_cast<double>(nq);
  t.r_smooth = 0.5 * (temporal / n + balance / n);
  t.r_energy = energy / (4.0 * n);
  t.r_safe =
      (-t.r_coll - t.r_oob - k.lambda_s * t.r_smooth - t.r_energy + t.r_dist) /
      5.0;
  return t;
}

inline RewardBreakdown reward_total(const WorldState& world, const Vec3& target,
                                    std::span<const MotorVec> actions,
                                    std::span<const MotorVec> prev_actions,
                                    const RewardFlags& flags,
                                    const RewardConstants& k,
                                    double cable_length) {
  if (actions.size() != world.quads.size() ||
      prev_actions.size() != world.quads.size())
    throw std::invalid_argument("reward_total: action count != quad count");
  const Vec3 e = target - world.payload.position;
  const TrackTerms tr = reward_track(e, world.payload.velocity, k);
  const StableTerms st = reward_stable(world, e, cable_length, k);
  const SafeTerms sf = reward_safe(world, actions, prev_actions, flags, k);

  RewardBreakdown b;
  b.r_pos = tr.r_pos;
  b.r_dir = tr.r_dir;
  b.r_track = tr.r_track;
  b.r_velP = st.r_velP;
  b.r_velQ = st.r_velQ;
  b.r_yaw = st.r_yaw;
  b.r_up = st.r_up;
  b.r_taut = st.r_taut;
  b.r_stable = st.r_stable;
  b.r_dist = sf.r_dist;
  b.r_coll = sf.r_coll;
  b.r_oob = sf.r_oob;
  b.r_smooth = sf.r_smooth;
  b.r_energy = sf.r_energy;
  b.r_safe = sf.r_safe;
  b.total = b.r_track * b.r_stable + b.r_safe;

  const auto values = b.values();
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!std::isfinite(values[i])) throw RewardFault(RewardBreakdown::kNames[i]);
  return b;
}

}  // namespace slung
