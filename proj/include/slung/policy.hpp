#pragma once

// Shared actor-critic parameters and the diagonal Gaussian action head.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "slung/nn.hpp"
#include "slung/random.hpp"

namespace slung {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

struct PolicyShape {
  int obs_dim = 28;
  int action_dim = 4;
  std::vector<int> actor_hidden = {64, 64, 64};
  std::vector<int> critic_hidden = {128, 128, 128};
};

struct PolicyParams {
  Mlp<double> actor;
  ColVector<double> log_std;
  Mlp<double> critic;

  int obs_dim() const { return actor.in_dim(); }
  int action_dim() const { return actor.out_dim(); }

  std::size_t parameter_count() const {
    return actor.parameter_count() + static_cast<std::size_t>(log_std.size()) +
           critic.parameter_count();
  }
};

// Zero-valued parameters with the given topology.
inline PolicyParams make_zero_policy(const PolicyShape& shape) {
  PolicyParams p;
  p.actor = Mlp<double>(shape.obs_dim, shape.actor_hidden, shape.action_dim);
  p.critic = Mlp<double>(shape.obs_dim, shape.critic_hidden, 1);
  p.log_std = ColVector<double>::Zero(shape.action_dim);
  return p;
}

// Orthogonal init: sqrt(2) on hidden layers, 0.01 on the mean head, 1.0 on
// the value head; zero biases; log_std = 0.
inline PolicyParams make_policy(const PolicyShape& shape, Rng& rng) {
  PolicyParams p = make_zero_policy(shape);
  p.actor.init_orthogonal(std::sqrt(2.0), 0.01, rng);
  p.critic.init_orthogonal(std::sqrt(2.0), 1.0, rng);
  return p;
}

// Visits every parameter tensor in a fixed order (actor layers, log_std,
// critic layers) as (pointer, length). Used for flattening, optimizer state,
// checkpoints, and gradient norms.
template <typename Params, typename F>
void for_each_tensor(Params& p, F&& f) {
  for (auto& l : p.actor.layers()) {
    f(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    f(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  f(p.log_std.data(), static_cast<std::size_t>(p.log_std.size()));
  for (auto& l : p.critic.layers()) {
    f(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    f(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
}

inline std::vector<double> flatten(const PolicyParams& p) {
  std::vector<double> out;
  out.reserve(p.parameter_count());
  for_each_tensor(p, [&](const double* d, std::size_t n) {
    out.insert(out.end(), d, d + n);
  });
  return out;
}

inline void unflatten(const std::vector<double>& flat, PolicyParams& p) {
  std::size_t off = 0;
  for_each_tensor(p, [&](double* d, std::size_t n) {
    std::copy(flat.begin() + off, flat.begin() + off + n, d);
    off += n;
  });
}

// ============================================================================
// Diagonal Gaussian
// ============================================================================

inline double gaussian_log_prob(const double* action, const double* mean,
                                const ColVector<double>& log_std) {
  double lp = 0.0;
  for (Eigen::Index j = 0; j < log_std.size(); ++j) {
    const double z = (action[j] - mean[j]) * std::exp(-log_std[j]);
    lp += -log_std[j] - 0.5 * kLog2Pi - 0.5 * z * z;
  }
  return lp;
}

inline double gaussian_entropy(const ColVector<double>& log_std) {
  return log_std.sum() +
         0.5 * (kLog2Pi + 1.0) * static_cast<double>(log_std.size());
}

struct SampledAction {
  std::vector<double> action;
  double log_prob = 0.0;
};

// Training mode samples mean + σ·η; evaluation mode returns the mean.
inline SampledAction sample_and_logprob(const double* mean,
                                        const ColVector<double>& log_std,
                                        Rng& rng, bool deterministic = false) {
  SampledAction s;
  s.action.resize(static_cast<std::size_t>(log_std.size()));
  for (Eigen::Index j = 0; j < log_std.size(); ++j)
    s.action[j] =
        deterministic ? mean[j] : mean[j] + std::exp(log_std[j]) * rng.normal();
  s.log_prob = gaussian_log_prob(s.action.data(), mean, log_std);
  return s;
}

}  // namespace slung
