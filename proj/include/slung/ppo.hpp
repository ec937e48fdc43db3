#pragma once

// PPO building blocks: GAE, the clipped surrogate with value and entropy
// terms, its analytic gradient, and a bias-corrected moment-adaptive
// optimizer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "slung/policy.hpp"

namespace slung {

struct PpoHyperParams {
  double lr = 4e-4;
  double clip = 0.2;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double grad_norm_clip = 0.5;
  double gamma = 0.997;
  double gae_lambda = 0.95;
  int minibatches = 256;
  int epochs = 8;
  bool normalize_advantages = true;
};

// ============================================================================
// GAE
// ============================================================================

// dones[t] marks that the episode ended after step t, so V_{t+1} is masked.
inline void compute_gae(std::span<const double> rewards,
                        std::span<const double> values,
                        std::span<const std::uint8_t> dones, double bootstrap,
                        double gamma, double lambda, std::span<double> advantages,
                        std::span<double> returns) {
  const std::size_t T = rewards.size();
  if (values.size() != T || dones.size() != T || advantages.size() != T ||
      returns.size() != T)
    throw std::invalid_argument("compute_gae: misaligned sequences");
  double next_value = bootstrap;
  double next_adv = 0.0;
  for (std::size_t t = T; t-- > 0;) {
    const double live = dones[t] ? 0.0 : 1.0;
    const double delta = rewards[t] + gamma * next_value * live - values[t];
    next_adv = delta + gamma * lambda * live * next_adv;
    advantages[t] = next_adv;
    returns[t] = next_adv + values[t];
    next_value = values[t];
  }
}

// ============================================================================
// Optimizer
// ============================================================================

struct OptimizerState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  explicit OptimizerState(std::size_t n = 0)
      : first_moment(n, 0.0), second_moment(n, 0.0) {}
};

// Returns the parameter delta for one bias-corrected update.
inline std::vector<double> optimizer_step(OptimizerState& s,
                                          std::span<const double> grads,
                                          double lr) {
  if (grads.size() != s.first_moment.size())
    throw std::invalid_argument("optimizer_step: gradient size mismatch");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  std::vector<double> delta(grads.size());
  for (std::size_t k = 0; k < grads.size(); ++k) {
    double& m = s.first_moment[k];
    double& v = s.second_moment[k];
    m = s.beta1 * m + (1.0 - s.beta1) * grads[k];
    v = s.beta2 * v + (1.0 - s.beta2) * grads[k] * grads[k];
    const double m_hat = m / c1;
    const double v_hat = v / c2;
    delta[k] = -lr * m_hat / (std::sqrt(v_hat) + s.epsilon);
  }
  return delta;
}

// ============================================================================
// Loss
// ============================================================================

struct Minibatch {
  ColMatrix<double> obs;      // obs_dim x B
  ColMatrix<double> actions;  // action_dim x B (unclipped samples)
  ColVector<double> old_log_prob;
  ColVector<double> advantages;
  ColVector<double> returns;

  Eigen::Index size() const { return obs.cols(); }
};

struct LossStats {
  double total = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

class TrainingFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void normalize_advantages(ColVector<double>& adv) {
  const double n = static_cast<double>(adv.size());
  if (adv.size() == 0) return;
  const double mean = adv.mean();
  const double var = (adv.array() - mean).square().sum() / n;
  adv = ((adv.array() - mean) / (std::sqrt(var) + 1e-8)).matrix();
}

namespace detail {

// Shared forward pass; fills the per-sample d loss / d log_prob and the
// value residual when gradients are requested.
inline LossStats ppo_forward(const PolicyParams& p, const Minibatch& mb,
                             const PpoHyperParams& hp,
                             Mlp<double>::Cache* actor_cache,
                             Mlp<double>::Cache* critic_cache,
                             ColMatrix<double>* mean_out,
                             ColVector<double>* dlogp_out,
                             ColVector<double>* dvalue_out) {
  const Eigen::Index B = mb.size();
  if (B == 0) throw std::invalid_argument("ppo loss: empty minibatch");
  const double inv_b = 1.0 / static_cast<double>(B);
  const ColMatrix<double> mean =
      actor_cache ? p.actor.forward(mb.obs, *actor_cache) : p.actor.forward(mb.obs);
  const ColMatrix<double> value =
      critic_cache ? p.critic.forward(mb.obs, *critic_cache)
                   : p.critic.forward(mb.obs);

  LossStats s;
  if (dlogp_out) dlogp_out->resize(B);
  if (dvalue_out) dvalue_out->resize(B);
  double clipped = 0.0;
  for (Eigen::Index b = 0; b < B; ++b) {
    const double lp =
        gaussian_log_prob(mb.actions.col(b).data(), mean.col(b).data(), p.log_std);
    const double log_ratio = lp - mb.old_log_prob[b];
    const double ratio = std::exp(log_ratio);
    const double adv = mb.advantages[b];
    const double surr1 = ratio * adv;
    const double surr2 = std::clamp(ratio, 1.0 - hp.clip, 1.0 + hp.clip) * adv;
    const bool unclipped = surr1 <= surr2;
    s.policy_loss -= std::min(surr1, surr2) * inv_b;
    s.approx_kl += ((ratio - 1.0) - log_ratio) * inv_b;
    if (std::abs(ratio - 1.0) > hp.clip) clipped += 1.0;
    const double residual = value(0, b) - mb.returns[b];
    s.value_loss += residual * residual * inv_b;
    if (dlogp_out) (*dlogp_out)[b] = unclipped ? -adv * ratio * inv_b : 0.0;
    if (dvalue_out) (*dvalue_out)[b] = hp.value_coef * 2.0 * residual * inv_b;
  }
  s.clip_fraction = clipped * inv_b;
  s.entropy = gaussian_entropy(p.log_std);
  s.total = s.policy_loss + hp.value_coef * s.value_loss - hp.entropy_coef * s.entropy;
  if (mean_out) *mean_out = mean;
  return s;
}

}  // namespace detail

inline LossStats ppo_loss(const PolicyParams& p, const Minibatch& mb,
                          const PpoHyperParams& hp) {
  return detail::ppo_forward(p, mb, hp, nullptr, nullptr, nullptr, nullptr,
                             nullptr);
}

// Loss plus its exact gradient, written into `grads` (overwritten).
inline LossStats ppo_loss_and_grad(const PolicyParams& p, const Minibatch& mb,
                                   const PpoHyperParams& hp,
                                   PolicyParams& grads) {
  Mlp<double>::Cache actor_cache, critic_cache;
  ColMatrix<double> mean;
  ColVector<double> dlogp, dvalue;
  const LossStats s = detail::ppo_forward(p, mb, hp, &actor_cache, &critic_cache,
                                          &mean, &dlogp, &dvalue);

  grads.actor.set_zero();
  grads.critic.set_zero();
  grads.log_std.setZero();

  const ColVector<double> inv_var = (-2.0 * p.log_std.array()).exp().matrix();
  const ColVector<double> inv_std = (-p.log_std.array()).exp().matrix();
  ColMatrix<double> d_mean(mean.rows(), mean.cols());
  for (Eigen::Index b = 0; b < mb.size(); ++b) {
    for (Eigen::Index j = 0; j < mean.rows(); ++j) {
      const double diff = mb.actions(j, b) - mean(j, b);
      d_mean(j, b) = dlogp[b] * diff * inv_var[j];
      const double z = diff * inv_std[j];
      grads.log_std[j] += dlogp[b] * (z * z - 1.0);
    }
  }
  grads.log_std.array() -= hp.entropy_coef;

  p.actor.backward(actor_cache, d_mean, grads.actor);
  p.critic.backward(critic_cache, dvalue.transpose(), grads.critic);
  return s;
}

inline double global_norm(const PolicyParams& g) {
  double sq = 0.0;
  for_each_tensor(g, [&](const double* d, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) sq += d[k] * d[k];
  });
  return std::sqrt(sq);
}

// Scales gradients to at most max_norm; returns the pre-clip norm.
inline double clip_grad_norm(PolicyParams& g, double max_norm) {
  const double norm = global_norm(g);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for_each_tensor(g, [&](double* d, std::size_t n) {
      for (std::size_t k = 0; k < n; ++k) d[k] *= scale;
    });
  }
  return norm;
}

// ============================================================================
// Update
// ============================================================================

// Flat training batch after GAE, one column per (step, env, agent) sample.
struct TrainingBatch {
  ColMatrix<double> obs;
  ColMatrix<double> actions;
  ColVector<double> log_prob;
  ColVector<double> advantages;
  ColVector<double> returns;

  Eigen::Index size() const { return obs.cols(); }
};

struct UpdateStats {
  LossStats mean_loss;
  double grad_norm = 0.0;  // mean pre-clip norm
  std::int64_t gradient_steps = 0;
};

inline void apply_delta(PolicyParams& p, const std::vector<double>& delta) {
  std::size_t off = 0;
  for_each_tensor(p, [&](double* d, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) d[k] += delta[off + k];
    off += n;
  });
}

// Epochs of shuffled minibatch updates on a shared parameter set.
inline UpdateStats ppo_update(PolicyParams& params, OptimizerState& opt,
                              const TrainingBatch& batch, const PpoHyperParams& hp,
                              Rng& rng) {
  const Eigen::Index n = batch.size();
  if (hp.minibatches < 1 || n % hp.minibatches != 0)
    throw std::invalid_argument("ppo_update: minibatches must divide batch size");
  const Eigen::Index mb_size = n / hp.minibatches;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  PolicyParams grads = params;
  UpdateStats stats;
  Minibatch mb;
  mb.obs.resize(batch.obs.rows(), mb_size);
  mb.actions.resize(batch.actions.rows(), mb_size);
  mb.old_log_prob.resize(mb_size);
  mb.advantages.resize(mb_size);
  mb.returns.resize(mb_size);

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.index(i)]);

    for (int m = 0; m < hp.minibatches; ++m) {
      for (Eigen::Index k = 0; k < mb_size; ++k) {
        const Eigen::Index src = order[m * mb_size + k];
        mb.obs.col(k) = batch.obs.col(src);
        mb.actions.col(k) = batch.actions.col(src);
        mb.old_log_prob[k] = batch.log_prob[src];
        mb.advantages[k] = batch.advantages[src];
        mb.returns[k] = batch.returns[src];
      }
      if (hp.normalize_advantages) normalize_advantages(mb.advantages);

      const LossStats s = ppo_loss_and_grad(params, mb, hp, grads);
      if (!std::isfinite(s.total))
        throw TrainingFault("non-finite PPO loss (policy " +
                            std::to_string(s.policy_loss) + ", value " +
                            std::to_string(s.value_loss) + ") at epoch " +
                            std::to_string(epoch) + ", minibatch " +
                            std::to_string(m));
      const double norm = clip_grad_norm(grads, hp.grad_norm_clip);
      apply_delta(params, optimizer_step(opt, flatten(grads), hp.lr));

      stats.mean_loss.total += s.total;
      stats.mean_loss.policy_loss += s.policy_loss;
      stats.mean_loss.value_loss += s.value_loss;
      stats.mean_loss.entropy += s.entropy;
      stats.mean_loss.approx_kl += s.approx_kl;
      stats.mean_loss.clip_fraction += s.clip_fraction;
      stats.grad_norm += norm;
      ++stats.gradient_steps;
    }
  }
  const double k = static_cast<double>(std::max<std::int64_t>(1, stats.gradient_steps));
  stats.mean_loss.total /= k;
  stats.mean_loss.policy_loss /= k;
  stats.mean_loss.value_loss /= k;
  stats.mean_loss.entropy /= k;
  stats.mean_loss.approx_kl /= k;
  stats.mean_loss.clip_fraction /= k;
  stats.grad_norm /= k;
  return stats;
}

}  // namespace slung
