#pragma once

// JSON run configuration. Unknown keys are rejected with their full path so a
// misspelled hyperparameter never falls back to a default silently.
//
// {
//   "physics": { PhysicalParams fields },
//   "env":     { num_agents*, target_position, episode_length, obs_noise_std,
//                bounds{}, noise_scaling{}, dr{}, disturbance{}, reset{},
//                target_randomization{}, reward{} },
//   "train":   { num_envs*, total_steps*, rollout_len, seed, lr, clip, ... },
//   "eval":    { timeout_s, success_radius, hold_s, observation_noise,
//                num_workers, reference{} }
// }
// Fields marked * are required.

#include <array>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>

#include "json.hpp"
#include "slung/env.hpp"
#include "slung/eval.hpp"
#include "slung/physics.hpp"
#include "slung/trainer.hpp"

namespace slung {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  PhysicalParams physics;
  EnvConfig env;
  TrainConfig train;
  EvalConfig eval;
  ReferenceTrajectory reference;

  void validate() const {
    physics.validate();
    env.validate();
    train.validate(env.num_agents);
    reference.validate();
    if (!(eval.timeout_s > 0.0 && eval.success_radius > 0.0 && eval.hold_s >= 0.0))
      throw ConfigError("eval: timeout_s and success_radius must be > 0, hold_s >= 0");
  }
};

namespace detail {

using nlohmann::json;

template <typename T>
void read_value(const json& j, T& out, const std::string& path) {
  try {
    if constexpr (std::is_same_v<T, Vec3>) {
      if (!j.is_array() || j.size() != 3) throw ConfigError(path + ": expected 3 numbers");
      for (int k = 0; k < 3; ++k) out[k] = j.at(k).get<double>();
    } else if constexpr (std::is_same_v<T, MotorVec>) {
      if (!j.is_array() || j.size() != 4) throw ConfigError(path + ": expected 4 numbers");
      for (std::size_t k = 0; k < 4; ++k) out[k] = j.at(k).get<double>();
    } else if constexpr (std::is_same_v<T, std::array<Vec3, 4>>) {
      if (!j.is_array() || j.size() != 4)
        throw ConfigError(path + ": expected 4 positions");
      for (std::size_t k = 0; k < 4; ++k)
        read_value(j.at(k), out[k], path + "[" + std::to_string(k) + "]");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!j.is_boolean()) throw ConfigError(path + ": expected true or false");
      out = j.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!j.is_number_integer()) throw ConfigError(path + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>)
        if (j.get<std::int64_t>() < 0) throw ConfigError(path + ": must be >= 0");
      out = j.get<T>();
    } else {
      if (!j.is_number()) throw ConfigError(path + ": expected a number");
      out = j.get<T>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

template <typename T>
json write_value(const T& v) {
  if constexpr (std::is_same_v<T, Vec3>) {
    return json::array({v[0], v[1], v[2]});
  } else if constexpr (std::is_same_v<T, MotorVec>) {
    return json::array({v[0], v[1], v[2], v[3]});
  } else if constexpr (std::is_same_v<T, std::array<Vec3, 4>>) {
    json a = json::array();
    for (const Vec3& p : v) a.push_back(write_value(p));
    return a;
  } else {
    return json(v);
  }
}

// Strict reader over one JSON object.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(label() + ": expected an object");
  }

  template <typename T>
  void operator()(const char* key, T& out, bool required = false) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) {
      if (required) throw ConfigError("missing required field " + child(key));
      return;
    }
    read_value(*it, out, child(key));
  }

  template <typename F>
  void section(const char* key, F&& body) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    ObjectReader sub(*it, child(key));
    body(sub);
    sub.finish();
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + child(it.key()));
  }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }
  std::string child(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

class ObjectWriter {
 public:
  template <typename T>
  void operator()(const char* key, const T& v, bool = false) {
    j_[key] = write_value(v);
  }

  template <typename F>
  void section(const char* key, F&& body) {
    ObjectWriter sub;
    body(sub);
    j_[key] = std::move(sub.j_);
  }

  json& get() { return j_; }

 private:
  json j_ = json::object();
};

// One field list serves both reading and writing.
template <typename V, typename P>
void visit_physics(V& v, P& p) {
  v("quad_mass", p.quad_mass);
  v("quad_inertia", p.quad_inertia);
  v("motor_positions", p.motor_positions);
  v("rotor_spin_signs", p.rotor_spin_signs);
  v("thrust_to_torque", p.thrust_to_torque);
  v("payload_mass", p.payload_mass);
  v("cable_length", p.cable_length);
  v("cable_stiffness", p.cable_stiffness);
  v("cable_damping", p.cable_damping);
  v("ground_stiffness", p.ground_stiffness);
  v("ground_damping", p.ground_damping);
  v("friction_coefficient", p.friction_coefficient);
  v("quad_collision_radius", p.quad_collision_radius);
  v("payload_radius", p.payload_radius);
  v("gravity", p.gravity);
  v("dt", p.dt);
}

template <typename V, typename E>
void visit_env(V& v, E& e) {
  v("num_agents", e.num_agents, true);
  v("target_position", e.target_position);
  v("episode_length", e.episode_length);
  v("obs_noise_std", e.obs_noise_std);
  v.section("bounds", [&](auto& s) {
    s("lo", e.bounds.lo);
    s("hi", e.bounds.hi);
  });
  v.section("noise_scaling", [&](auto& s) {
    s("position", e.noise_scaling.position);
    s("velocity", e.noise_scaling.velocity);
    s("rotation", e.noise_scaling.rotation);
    s("body_rate", e.noise_scaling.body_rate);
    s("action", e.noise_scaling.action);
  });
  v.section("dr", [&](auto& s) {
    s("base_thrust_lo", e.dr.base_thrust_lo);
    s("base_thrust_hi", e.dr.base_thrust_hi);
    s("motor_offset_std", e.dr.motor_offset_std);
    s("thrust_clip_lo", e.dr.thrust_clip_lo);
    s("thrust_clip_hi", e.dr.thrust_clip_hi);
    s("tau_lo", e.dr.tau_lo);
    s("tau_hi", e.dr.tau_hi);
    s("rpm_jump_enabled", e.dr.rpm_jump_enabled);
    s("rpm_jump_probability", e.dr.rpm_jump_probability);
    s("rpm_jump_scale", e.dr.rpm_jump_scale);
    s("reset_filtered_state_perturbation_std",
      e.dr.reset_filtered_state_perturbation_std);
  });
  v.section("disturbance", [&](auto& s) {
    s("quad_force_max", e.disturbance.quad_force_max);
    s("quad_torque_max", e.disturbance.quad_torque_max);
    s("payload_force_max", e.disturbance.payload_force_max);
    s("per_step_probability", e.disturbance.per_step_probability);
    s("z_bias_weight", e.disturbance.z_bias_weight);
  });
  v.section("reset", [&](auto& s) {
    s("ground_start_probability", e.reset.ground_start_probability);
    s("payload_offset", e.reset.payload_offset);
    s("shell_inner_fraction", e.reset.shell_inner_fraction);
    s("max_polar_angle", e.reset.max_polar_angle);
    s("max_tilt", e.reset.max_tilt);
    s("max_speed", e.reset.max_speed);
    s("max_body_rate", e.reset.max_body_rate);
    s("max_attempts", e.reset.max_attempts);
  });
  v.section("target_randomization", [&](auto& s) {
    s("enabled", e.target_randomization.enabled);
    s("half_extent", e.target_randomization.half_extent);
    s("update_probability", e.target_randomization.update_probability);
  });
  v.section("reward", [&](auto& s) {
    auto& k = e.reward;
    s("s", k.s);
    s("c_f", k.c_f);
    s("c_g", k.c_g);
    s("c_s", k.c_s);
    s("c_exp", k.c_exp);
    s("c_swing", k.c_swing);
    s("c_coll", k.c_coll);
    s("c_oob", k.c_oob);
    s("c_b", k.c_b);
    s("d_min", k.d_min);
    s("d_safe", k.d_safe);
    s("lambda_yaw", k.lambda_yaw);
    s("lambda_up", k.lambda_up);
    s("lambda_s", k.lambda_s);
    s("v_max", k.v_max);
    s("eps", k.eps);
  });
}

template <typename V, typename T>
void visit_train(V& v, T& t) {
  v("num_envs", t.num_envs, true);
  v("total_steps", t.total_steps, true);
  v("rollout_len", t.rollout_len);
  v("seed", t.seed);
  v("checkpoint_every", t.checkpoint_every);
  v("num_workers", t.num_workers);
  v("bootstrap_timeouts", t.bootstrap_timeouts);
  v("lr", t.ppo.lr);
  v("clip", t.ppo.clip);
  v("entropy_coef", t.ppo.entropy_coef);
  v("value_coef", t.ppo.value_coef);
  v("grad_norm_clip", t.ppo.grad_norm_clip);
  v("gamma", t.ppo.gamma);
  v("gae_lambda", t.ppo.gae_lambda);
  v("minibatches", t.ppo.minibatches);
  v("epochs", t.ppo.epochs);
  v("normalize_advantages", t.ppo.normalize_advantages);
}

template <typename V, typename R>
void visit_eval(V& v, R& r) {
  v("timeout_s", r.eval.timeout_s);
  v("success_radius", r.eval.success_radius);
  v("hold_s", r.eval.hold_s);
  v("observation_noise", r.eval.observation_noise);
  v("num_workers", r.eval.num_workers);
  v.section("reference", [&](auto& s) {
    s("center", r.reference.center);
    s("amplitude_x", r.reference.amplitude_x);
    s("amplitude_y", r.reference.amplitude_y);
    s("period", r.reference.period);
  });
}

}  // namespace detail

inline RunConfig parse_run_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  detail::ObjectReader root(j, "");
  root.section("physics", [&](auto& s) { detail::visit_physics(s, c.physics); });
  root.section("env", [&](auto& s) { detail::visit_env(s, c.env); });
  root.section("train", [&](auto& s) { detail::visit_train(s, c.train); });
  root.section("eval", [&](auto& s) { detail::visit_eval(s, c); });
  root.finish();
  if (!j.contains("env")) throw ConfigError("missing required field env.num_agents");
  if (!j.contains("train")) throw ConfigError("missing required field train.num_envs");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

inline nlohmann::json run_config_to_json(const RunConfig& c) {
  detail::ObjectWriter root;
  root.section("physics", [&](auto& s) { detail::visit_physics(s, c.physics); });
  root.section("env", [&](auto& s) { detail::visit_env(s, c.env); });
  root.section("train", [&](auto& s) { detail::visit_train(s, c.train); });
  root.section("eval", [&](auto& s) { detail::visit_eval(s, c); });
  return root.get();
}

// Physical parameters as a flat key-value object.
inline nlohmann::json physical_params_to_json(const PhysicalParams& p) {
  detail::ObjectWriter w;
  detail::visit_physics(w, p);
  return w.get();
}

inline PhysicalParams physical_params_from_json(const nlohmann::json& j) {
  PhysicalParams p;
  detail::ObjectReader r(j, "physics");
  detail::visit_physics(r, p);
  r.finish();
  p.validate();
  return p;
}

}  // namespace slung
