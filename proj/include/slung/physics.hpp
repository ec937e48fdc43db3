#pragma once

// Rigid-body simulation of Q quadrotors tied to a point-mass payload by
// unilateral cables. Everything here is a pure state-transition function:
// no globals, no hidden caches, so independent worlds may be stepped from
// any thread.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "slung/math.hpp"

namespace slung {

using MotorVec = std::array<double, 4>;

struct PhysicalParams {
  double quad_mass = 0.034;                         // kg
  Vec3 quad_inertia = Vec3(1.7e-5, 1.7e-5, 2.9e-5);  // kg m^2, diagonal
  // X configuration, motors ordered front-right, back-right, back-left,
  // front-left (body x forward, z up).
  std::array<Vec3, 4> motor_positions = {
      Vec3(0.0325, -0.0325, 0.0), Vec3(-0.0325, -0.0325, 0.0),
      Vec3(-0.0325, 0.0325, 0.0), Vec3(0.0325, 0.0325, 0.0)};
  MotorVec rotor_spin_signs = {1.0, -1.0, 1.0, -1.0};
  double thrust_to_torque = 0.006;
  double payload_mass = 0.01;        // kg
  double cable_length = 0.3;         // m
  double cable_stiffness = 500.0;    // N/m
  double cable_damping = 5.0;        // N s/m
  double ground_stiffness = 1.0e4;   // N/m
  double ground_damping = 50.0;      // N s/m
  double friction_coefficient = 0.5;
  double quad_collision_radius = 0.05;  // m
  double payload_radius = 0.01;         // m
  double gravity = 9.81;                // m/s^2, set to 0 for free-space tests
  double dt = 0.004;                    // s

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v))
        throw std::invalid_argument(std::string("physics.") + name +
                                    " must be positive and finite");
    };
    auto non_negative = [](double v, const char* name) {
      if (!(v >= 0.0) || !std::isfinite(v))
        throw std::invalid_argument(std::string("physics.") + name +
                                    " must be non-negative and finite");
    };
    positive(quad_mass, "quad_mass");
    for (int k = 0; k < 3; ++k) positive(quad_inertia[k], "quad_inertia");
    positive(thrust_to_torque, "thrust_to_torque");
    positive(payload_mass, "payload_mass");
    positive(cable_length, "cable_length");
    positive(cable_stiffness, "cable_stiffness");
    non_negative(cable_damping, "cable_damping");
    positive(ground_stiffness, "ground_stiffness");
    non_negative(ground_damping, "ground_damping");
    non_negative(friction_coefficient, "friction_coefficient");
    non_negative(quad_collision_radius, "quad_collision_radius");
    non_negative(payload_radius, "payload_radius");
    non_negative(gravity, "gravity");
    positive(dt, "dt");
    for (double s : rotor_spin_signs)
      if (s != 1.0 && s != -1.0)
        throw std::invalid_argument("physics.rotor_spin_signs must be +1/-1");
  }
};

struct QuadState {
  Vec3 position = Vec3::Zero();
  Quat attitude = Quat::Identity();  // world <- body
  Vec3 linear_velocity = Vec3::Zero();
  Vec3 body_rates = Vec3::Zero();
};

struct PayloadState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
};

// First-order actuator lag on the square-root-of-thrust proxy.
struct MotorBank {
  MotorVec filtered_speed_proxy = {0.0, 0.0, 0.0, 0.0};  // sqrt(N)
  MotorVec thrust_cap = {0.12, 0.12, 0.12, 0.12};         // N
  double lag_time_constant = 0.02;                        // s
};

struct WorldState {
  std::vector<QuadState> quads;
  PayloadState payload;
  std::vector<MotorBank> motors;
  double time = 0.0;
  std::int64_t step_count = 0;

  std::size_t num_agents() const { return quads.size(); }
};

struct ExternalWrench {
  static constexpr int kPayload = -1;
  Vec3 force = Vec3::Zero();   // N, world frame
  Vec3 torque = Vec3::Zero();  // N m, body frame (ignored for the payload)
  int target = kPayload;       // quad index or kPayload
};

class IntegrationFault : public std::runtime_error {
 public:
  explicit IntegrationFault(std::string quantity)
      : std::runtime_error("non-finite state after integration: " + quantity),
        quantity_(std::move(quantity)) {}
  const std::string& quantity() const { return quantity_; }

 private:
  std::string quantity_;
};

inline Vec3 gravity_vector(const PhysicalParams& p) {
  return Vec3(0.0, 0.0, -p.gravity);
}

// ============================================================================
// Actuation
// ============================================================================

struct MotorLagResult {
  MotorBank motors;
  MotorVec applied{};  // N
};

inline MotorLagResult motor_lag_step(const MotorBank& motors,
                                     const MotorVec& f_cmd, double dt) {
  if (!(dt > 0.0)) throw std::domain_error("motor_lag_step: dt must be > 0");
  const double alpha = std::min(1.0, dt / motors.lag_time_constant);
  MotorLagResult out{motors, {}};
  for (std::size_t j = 0; j < 4; ++j) {
    if (!(f_cmd[j] >= 0.0))
      throw std::domain_error("motor_lag_step: negative thrust command");
    const double target = std::sqrt(f_cmd[j]);
    double& proxy = out.motors.filtered_speed_proxy[j];
    proxy += alpha * (target - proxy);
    proxy = std::clamp(proxy, 0.0, std::sqrt(motors.thrust_cap[j]));
    out.applied[j] = std::clamp(proxy * proxy, 0.0, motors.thrust_cap[j]);
  }
  return out;
}

struct BodyWrench {
  Vec3 force = Vec3::Zero();   // body frame
  Vec3 torque = Vec3::Zero();  // body frame
};

inline BodyWrench body_wrench_from_thrusts(const MotorVec& f,
                                           const PhysicalParams& p) {
  BodyWrench w;
  for (std::size_t j = 0; j < 4; ++j) {
    const Vec3 thrust(0.0, 0.0, f[j]);
    w.force += thrust;
    w.torque += p.motor_positions[j].cross(thrust);
    w.torque.z() += p.rotor_spin_signs[j] * p.thrust_to_torque * f[j];
  }
  return w;
}

// ============================================================================
// Interaction forces
// ============================================================================

struct CableForces {
  Vec3 on_quad = Vec3::Zero();
  Vec3 on_payload = Vec3::Zero();
};

// Unilateral spring-damper: pulls only while stretched beyond the rest length.
inline CableForces cable_force(const QuadState& quad,
                               const PayloadState& payload,
                               const PhysicalParams& p) {
  const Vec3 r = quad.position - payload.position;
  const double d = r.norm();
  if (d <= p.cable_length || d == 0.0) return {};
  const Vec3 u = r / d;
  const double separation_speed = u.dot(quad.linear_velocity - payload.velocity);
  const double tension =
      std::max(0.0, p.cable_stiffness * (d - p.cable_length) +
                        p.cable_damping * std::max(0.0, separation_speed));
  return {-tension * u, tension * u};
}

inline double ground_normal_force(double z, double vz, double radius,
                                  const PhysicalParams& p) {
  const double penetration = radius - z;
  if (penetration <= 0.0) return 0.0;
  return std::max(0.0, p.ground_stiffness * penetration +
                           p.ground_damping * std::max(0.0, -vz));
}

// Penalty normal force plus Coulomb-capped viscous friction.
inline Vec3 ground_contact_force(const Vec3& position, const Vec3& velocity,
                                 double radius, const PhysicalParams& p) {
  const double normal =
      ground_normal_force(position.z(), velocity.z(), radius, p);
  if (normal == 0.0) return Vec3::Zero();
  Vec3 force(0.0, 0.0, normal);
  const Vec3 vt(velocity.x(), velocity.y(), 0.0);
  const double speed = vt.norm();
  if (speed > 0.0) {
    const double mag =
        std::min(p.friction_coefficient * normal, p.ground_damping * speed);
    force -= mag * vt / speed;
  }
  return force;
}

// ============================================================================
// Integration
// ============================================================================

namespace detail {

// A stiff penalty interaction linearized at the start of the step. Cables join
// a quad to the payload (body_b = payload); ground contacts act on one body
// along world z (body_b < 0).
struct StiffLink {
  int body_a = 0;
  int body_b = -1;
  Vec3 dir = Vec3::UnitZ();   // force on body_b is +dir * magnitude
  double predicted = 0.0;     // magnitude with Δ = 0
  double gain = 0.0;          // d magnitude / d (Δ_a - Δ_b)·dir
  bool active = true;
};

}  // namespace detail

// Advances the world by one step of size p.dt.
//
// Velocities update first and positions use the trapezoidal average of old and
// new velocity, so constant accelerations integrate exactly. The cable and
// ground penalty forces are stiff at 250 Hz (ω·dt > 1), so they are linearized
// and solved implicitly together with the velocity update; any link whose
// end-of-step force would pull (cable) or stick (ground) is dropped and the
// system re-solved.
inline WorldState step_dynamics(const WorldState& world,
                                std::span<const MotorVec> applied,
                                std::span<const ExternalWrench> external,
                                const PhysicalParams& p) {
  const int nq = static_cast<int>(world.quads.size());
  if (nq < 1) throw std::invalid_argument("step_dynamics: no quads");
  if (static_cast<int>(applied.size()) != nq)
    throw std::invalid_argument("step_dynamics: thrust count != quad count");

  const int nb = nq + 1;
  const int payload = nq;
  const double h = p.dt;
  const Vec3 g = gravity_vector(p);

  std::vector<double> mass(nb, p.quad_mass);
  mass[payload] = p.payload_mass;
  std::vector<Vec3> x(nb), v(nb), f_explicit(nb, Vec3::Zero());
  std::vector<double> radius(nb, p.quad_collision_radius);
  radius[payload] = p.payload_radius;
  std::vector<Vec3> torque(nq, Vec3::Zero());

  for (int i = 0; i < nq; ++i) {
    const QuadState& q = world.quads[i];
    x[i] = q.position;
    v[i] = q.linear_velocity;
    const BodyWrench w = body_wrench_from_thrusts(applied[i], p);
    f_explicit[i] = attitude_rotate(q.attitude, w.force);
    torque[i] = w.torque;
  }
  x[payload] = world.payload.position;
  v[payload] = world.payload.velocity;

  for (int b = 0; b < nb; ++b) f_explicit[b] += mass[b] * g;

  for (const ExternalWrench& e : external) {
    if (e.target == ExternalWrench::kPayload) {
      f_explicit[payload] += e.force;
    } else if (e.target >= 0 && e.target < nq) {
      f_explicit[e.target] += e.force;
      torque[e.target] += e.torque;
    } else {
      throw std::invalid_argument("step_dynamics: wrench target out of range");
    }
  }

  std::vector<detail::StiffLink> links;
  links.reserve(2 * nb);

  for (int i = 0; i < nq; ++i) {
    const Vec3 r = x[i] - x[payload];
    const double d = r.norm();
    if (d <= p.cable_length || d == 0.0) continue;
    const Vec3 u = r / d;
    const double sep = u.dot(v[i] - v[payload]);
    const double damping = sep > 0.0 ? p.cable_damping : 0.0;
    detail::StiffLink link;
    link.body_a = i;
    link.body_b = payload;
    link.dir = u;
    // Tension at the end of the step, with the stretch predicted from the
    // current relative velocity; gain couples the unknown velocity change.
    link.predicted = p.cable_stiffness * (d - p.cable_length) +
                     damping * sep + p.cable_stiffness * h * sep;
    link.gain = p.cable_stiffness * h / 2.0 + damping;
    links.push_back(link);
  }

  for (int b = 0; b < nb; ++b) {
    const double penetration = radius[b] - x[b].z();
    if (penetration <= 0.0) continue;
    const double vz = v[b].z();
    const double damping = vz < 0.0 ? p.ground_damping : 0.0;
    // Friction stays explicit but may not reverse the tangential velocity.
    const double normal_now = ground_normal_force(x[b].z(), vz, radius[b], p);
    const Vec3 vt(v[b].x(), v[b].y(), 0.0);
    const double speed = vt.norm();
    if (speed > 0.0 && normal_now > 0.0) {
      const double mag =
          std::min({p.friction_coefficient * normal_now,
                    p.ground_damping * speed, mass[b] * speed / h});
      f_explicit[b] -= mag * vt / speed;
    }
    detail::StiffLink link;
    link.body_a = b;
    link.body_b = -1;
    link.dir = Vec3::UnitZ();
    // Ground pushes body_a along +z; store with body_a as the receiver.
    link.predicted = p.ground_stiffness * penetration - damping * vz -
                     p.ground_stiffness * h * vz;
    link.gain = p.ground_stiffness * h / 2.0 + damping;
    links.push_back(link);
  }

  const int n = 3 * nb;
  Eigen::VectorXd delta(n);

  auto solve = [&]() {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd rhs(n);
    for (int b = 0; b < nb; ++b) {
      A.block<3, 3>(3 * b, 3 * b).diagonal().setConstant(mass[b]);
      rhs.segment<3>(3 * b) = h * f_explicit[b];
    }
    bool coupled = false;
    for (const auto& link : links) {
      if (!link.active) continue;
      coupled = true;
      const Mat3 P = h * link.gain * link.dir * link.dir.transpose();
      const Vec3 f0 = h * link.predicted * link.dir;
      if (link.body_b >= 0) {
        // Cable: tension T' = predicted + gain * u·(Δ_a - Δ_b); the quad
        // (body_a) is pulled by -T'u and the payload by +T'u.
        const int a = 3 * link.body_a, c = 3 * link.body_b;
        A.block<3, 3>(a, a) += P;
        A.block<3, 3>(c, c) += P;
        A.block<3, 3>(a, c) -= P;
        A.block<3, 3>(c, a) -= P;
        rhs.segment<3>(a) -= f0;
        rhs.segment<3>(c) += f0;
      } else {
        // Ground: N' = predicted - gain * Δ_z on body_a.
        const int a = 3 * link.body_a;
        A.block<3, 3>(a, a) += P;
        rhs.segment<3>(a) += f0;
      }
    }
    if (!coupled) {
      for (int b = 0; b < nb; ++b)
        delta.segment<3>(3 * b) = rhs.segment<3>(3 * b) / mass[b];
    } else {
      delta = A.llt().solve(rhs);
    }
  };

  auto end_force = [&](const detail::StiffLink& link) {
    const Vec3 da = delta.segment<3>(3 * link.body_a);
    if (link.body_b >= 0) {
      const Vec3 dc = delta.segment<3>(3 * link.body_b);
      return link.predicted + link.gain * link.dir.dot(da - dc);
    }
    return link.predicted - link.gain * da.z();
  };

  solve();
  for (std::size_t pass = 0; pass < links.size(); ++pass) {
    bool changed = false;
    for (auto& link : links) {
      if (link.active && end_force(link) < 0.0) {
        link.active = false;
        changed = true;
      }
    }
    if (!changed) break;
    solve();
  }

  WorldState next = world;
  for (int b = 0; b < nb; ++b) {
    const Vec3 v_new = v[b] + delta.segment<3>(3 * b);
    const Vec3 x_new = x[b] + 0.5 * h * (v[b] + v_new);
    if (b == payload) {
      next.payload.position = x_new;
      next.payload.velocity = v_new;
    } else {
      next.quads[b].position = x_new;
      next.quads[b].linear_velocity = v_new;
    }
  }

  for (int i = 0; i < nq; ++i) {
    QuadState& q = next.quads[i];
    const Vec3& w = world.quads[i].body_rates;
    const Vec3 angular_momentum = p.quad_inertia.cwiseProduct(w);
    const Vec3 w_dot =
        (torque[i] - w.cross(angular_momentum)).cwiseQuotient(p.quad_inertia);
    q.body_rates = w + h * w_dot;
    q.attitude = integrate_attitude(world.quads[i].attitude, q.body_rates, h);
  }

  next.step_count = world.step_count + 1;
  next.time = static_cast<double>(next.step_count) * h;

  for (int i = 0; i < nq; ++i) {
    const QuadState& q = next.quads[i];
    const std::string tag = "quad[" + std::to_string(i) + "].";
    if (!q.position.allFinite()) throw IntegrationFault(tag + "position");
    if (!q.linear_velocity.allFinite())
      throw IntegrationFault(tag + "linear_velocity");
    if (!q.body_rates.allFinite()) throw IntegrationFault(tag + "body_rates");
    if (!q.attitude.coeffs().allFinite())
      throw IntegrationFault(tag + "attitude");
  }
  if (!next.payload.position.allFinite())
    throw IntegrationFault("payload.position");
  if (!next.payload.velocity.allFinite())
    throw IntegrationFault("payload.velocity");
  return next;
}

// ============================================================================
// Collision queries
// ============================================================================

inline constexpr double kCrashTilt = kPi / 3.0;  // 60 degrees

inline bool check_collision(const WorldState& world, double d_min,
                            const PhysicalParams& p) {
  const std::size_t nq = world.quads.size();
  for (std::size_t i = 0; i < nq; ++i) {
    const QuadState& qi = world.quads[i];
    for (std::size_t j = i + 1; j < nq; ++j)
      if ((qi.position - world.quads[j].position).norm() < d_min) return true;
    if ((qi.position - world.payload.position).norm() < p.quad_collision_radius)
      return true;
    const bool touching = qi.position.z() - p.quad_collision_radius < 0.0;
    if (touching && tilt_angle(qi.attitude) > kCrashTilt) return true;
  }
  return false;
}

}  // namespace slung
