#pragma once

// CSV writers for learning curves, rollouts and evaluation metrics. Numbers
// use the shortest round-trip decimal form, so identical runs give identical
// bytes; NaN is written as "nan".

#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "slung/eval.hpp"
#include "slung/reward.hpp"
#include "slung/trainer.hpp"

namespace slung {

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  CsvWriter& operator<<(double v) { return cell(format_number(v)); }
  CsvWriter& operator<<(int v) { return cell(std::to_string(v)); }
  CsvWriter& operator<<(std::int64_t v) { return cell(std::to_string(v)); }
  CsvWriter& operator<<(std::uint64_t v) { return cell(std::to_string(v)); }
  CsvWriter& operator<<(const std::string& v) { return cell(v); }
  CsvWriter& operator<<(const char* v) { return cell(v); }

  void end_row() {
    out_ << '\n';
    first_ = true;
  }

  void header(const std::vector<std::string>& names) {
    for (const auto& n : names) cell(n);
    end_row();
  }

 private:
  CsvWriter& cell(const std::string& s) {
    if (!first_) out_ << ',';
    out_ << s;
    first_ = false;
    return *this;
  }

  std::ostream& out_;
  bool first_ = true;
};

// ---- learning curve -------------------------------------------------------

inline std::vector<std::string> learning_curve_columns() {
  std::vector<std::string> c = {"update",      "env_steps",   "mean_return",
                                "episodes",    "loss_total",  "loss_policy",
                                "loss_value",  "entropy",     "approx_kl",
                                "clip_fraction", "grad_norm"};
  for (const char* n : RewardBreakdown::kNames) c.push_back(std::string("mean_") + n);
  return c;
}

inline void write_learning_curve_row(CsvWriter& w, const LearningCurveRow& r) {
  w << r.update << r.env_steps << r.mean_return << r.episodes << r.loss.total
    << r.loss.policy_loss << r.loss.value_loss << r.loss.entropy << r.loss.approx_kl
    << r.loss.clip_fraction << r.grad_norm;
  for (double v : r.reward_terms) w << v;
  w.end_row();
}

// ---- rollout --------------------------------------------------------------

inline std::vector<std::string> rollout_columns(int q) {
  std::vector<std::string> c = {"step", "time", "done_reason"};
  for (const char* a : {"x", "y", "z"}) c.push_back(std::string("payload_p") + a);
  for (const char* a : {"x", "y", "z"}) c.push_back(std::string("payload_v") + a);
  for (const char* a : {"x", "y", "z"}) c.push_back(std::string("target_") + a);
  for (int i = 0; i < q; ++i) {
    const std::string p = "q" + std::to_string(i) + "_";
    for (const char* a : {"px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz",
                          "wx", "wy", "wz"})
      c.push_back(p + a);
    for (int m = 0; m < 4; ++m) c.push_back(p + "cmd" + std::to_string(m));
    for (int m = 0; m < 4; ++m) c.push_back(p + "thrust" + std::to_string(m));
  }
  for (const char* n : RewardBreakdown::kNames) c.push_back(n);
  return c;
}

// One row per step; the record must carry full states.
inline void write_rollout(std::ostream& out, const EpisodeRecord& rec) {
  const int q = static_cast<int>(rec.states.front().quads.size());
  CsvWriter w(out);
  w.header(rollout_columns(q));
  for (std::size_t k = 0; k < rec.steps(); ++k) {
    const WorldState& s = rec.states[k + 1];
    const bool last = k + 1 == rec.steps();
    w << static_cast<std::int64_t>(k + 1) << s.time
      << std::string(last ? to_string(rec.done_reason) : "none");
    for (int a = 0; a < 3; ++a) w << s.payload.position[a];
    for (int a = 0; a < 3; ++a) w << s.payload.velocity[a];
    for (int a = 0; a < 3; ++a) w << rec.target[k + 1][a];
    for (int i = 0; i < q; ++i) {
      const QuadState& qs = s.quads[i];
      for (int a = 0; a < 3; ++a) w << qs.position[a];
      w << qs.attitude.w() << qs.attitude.x() << qs.attitude.y() << qs.attitude.z();
      for (int a = 0; a < 3; ++a) w << qs.linear_velocity[a];
      for (int a = 0; a < 3; ++a) w << qs.body_rates[a];
      for (int m = 0; m < 4; ++m) w << rec.commanded[k][i][m];
      for (int m = 0; m < 4; ++m) w << rec.applied[k][i][m];
    }
    for (double v : rec.rewards[k].values()) w << v;
    w.end_row();
  }
}

// ---- evaluation metrics ---------------------------------------------------

// Summary row (kind=summary) followed by one row per trial (kind=trial).
inline void write_recovery(std::ostream& out, const RecoveryResult& r) {
  CsvWriter w(out);
  w.header({"kind", "trial", "success", "rate", "mean_speed", "time_to_recover",
            "final_distance", "done_reason", "ground_start", "n"});
  const int n = static_cast<int>(r.trials.size());
  w << "summary" << -1 << -1 << r.rate << r.mean_speed
    << std::numeric_limits<double>::quiet_NaN() << std::numeric_limits<double>::quiet_NaN()
    << "none" << -1 << n;
  w.end_row();
  for (int k = 0; k < n; ++k) {
    const EpisodeRecord& t = r.trials[k];
    w << "trial" << k << (t.success ? 1 : 0) << (t.success ? 1.0 : 0.0) << t.mean_speed
      << t.time_to_recover << t.final_distance() << to_string(t.done_reason)
      << (t.ground_start ? 1 : 0) << 1;
    w.end_row();
  }
}

inline void write_sweep(std::ostream& out, const std::vector<SweepRow>& rows) {
  CsvWriter w(out);
  w.header({"axis", "value", "rate", "mean_speed", "n"});
  for (const SweepRow& r : rows) {
    w << r.axis << r.value << r.rate << r.mean_speed << r.n;
    w.end_row();
  }
}

struct Fig8Row {
  int trial = 0;
  double rmse = 0.0;
  double max_error = 0.0;
  std::int64_t steps = 0;
  std::string done_reason;
};

inline void write_fig8(std::ostream& out, const std::vector<Fig8Row>& rows) {
  CsvWriter w(out);
  w.header({"trial", "rmse", "max_error", "steps", "done_reason"});
  for (const Fig8Row& r : rows) {
    w << r.trial << r.rmse << r.max_error << r.steps << r.done_reason;
    w.end_row();
  }
}

}  // namespace slung
