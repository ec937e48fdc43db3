#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "slung/checkpoint.hpp"
#include "slung/config.hpp"
#include "slung/csv.hpp"
#include "slung/eval.hpp"
#include "slung/trainer.hpp"
#include "slung/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

void write_manifest(const fs::path& path, const std::string& command,
                    const slung::RunConfig& cfg, std::uint64_t seed,
                    const json& artifacts) {
  json m;
  m["command"] = command;
  m["version"] = slung::kVersion;
  m["start_time"] = utc_now();
  m["seed"] = seed;
  m["config"] = slung::run_config_to_json(cfg);
  m["artifacts"] = artifacts;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << m.dump(2) << '\n';
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::int64_t* seed_override) {
  slung::RunConfig cfg = slung::load_run_config(config_path);
  if (seed_override) cfg.train.seed = static_cast<std::uint64_t>(*seed_override);

  const fs::path out(out_dir);
  fs::create_directories(out / "checkpoints");
  const fs::path curve_path = out / "learning_curve.csv";

  json artifacts;
  artifacts["learning_curve"] = curve_path.filename().string();
  artifacts["final_checkpoint"] = "policy.ckpt";
  artifacts["checkpoint_dir"] = "checkpoints";
  write_manifest(out / "manifest.json", "train", cfg, cfg.train.seed, artifacts);

  std::ofstream curve = open_out(curve_path);
  slung::CsvWriter csv(curve);
  csv.header(slung::learning_curve_columns());

  slung::TrainCallbacks cb;
  cb.on_update = [&](const slung::LearningCurveRow& row) {
    slung::write_learning_curve_row(csv, row);
    curve.flush();
    std::cerr << "update " << row.update << " steps " << row.env_steps << " return "
              << slung::format_number(row.mean_return) << " episodes " << row.episodes
              << '\n';
  };
  cb.on_checkpoint = [&](const slung::PolicyParams& p, const slung::OptimizerState& opt,
                         std::int64_t update, std::int64_t steps) {
    slung::Checkpoint c;
    c.num_agents = cfg.env.num_agents;
    c.params = p;
    c.optimizer = opt;
    c.update_index = static_cast<std::uint64_t>(update);
    c.env_steps = static_cast<std::uint64_t>(steps);
    std::ostringstream name;
    name << "ckpt_" << std::setw(6) << std::setfill('0') << update << ".ckpt";
    slung::save_checkpoint(c, (out / "checkpoints" / name.str()).string());
    slung::save_checkpoint(c, (out / "policy.ckpt").string());
  };
  slung::train(cfg.train, cfg.env, cfg.physics, cb);
  if (!curve) throw std::runtime_error("write failed: " + curve_path.string());
  return 0;
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw CLI::ValidationError("--values", "not a number: '" + item + "'");
    }
  }
  return values;
}

slung::RunConfig eval_config(const std::string& config_path, int num_agents) {
  if (!config_path.empty()) {
    slung::RunConfig cfg = slung::load_run_config(config_path);
    if (cfg.env.num_agents != num_agents)
      throw slung::CheckpointError(
          "checkpoint has " + std::to_string(num_agents) + " agents, config env has " +
          std::to_string(cfg.env.num_agents));
    return cfg;
  }
  slung::RunConfig cfg;
  cfg.env.num_agents = num_agents;
  return cfg;
}

int cmd_eval(const std::string& checkpoint, const std::string& scenario, int trials,
             const std::string& out_dir, const std::string& config_path,
             const std::string& values_text, std::uint64_t seed) {
  const bool is_sweep = scenario.rfind("sweep:", 0) == 0;
  if (scenario != "recover" && scenario != "fig8" && !is_sweep)
    throw CLI::ValidationError(
        "--scenario", "unknown scenario '" + scenario +
                          "' (valid: recover, fig8, sweep:cable_length, "
                          "sweep:payload_mass, sweep:obs_noise, sweep:seed)");
  slung::SweepAxis axis{};
  if (is_sweep) axis = slung::parse_sweep_axis(scenario.substr(6));
  if (trials < 1) throw CLI::ValidationError("--trials", "must be >= 1");

  const slung::Checkpoint ckpt = slung::load_checkpoint(checkpoint);
  const slung::RunConfig cfg = eval_config(config_path, ckpt.num_agents);
  const slung::Controller policy = slung::mean_action_controller(ckpt.params);

  const fs::path out(out_dir);
  fs::create_directories(out);
  std::string file;
  if (scenario == "recover") file = "recover.csv";
  else if (scenario == "fig8") file = "fig8.csv";
  else file = "sweep_" + std::string(slung::to_string(axis)) + ".csv";

  json artifacts;
  artifacts["checkpoint"] = fs::absolute(checkpoint).string();
  artifacts["metrics"] = file;
  write_manifest(out / (fs::path(file).stem().string() + ".manifest.json"),
                 "eval " + scenario, cfg, seed, artifacts);

  std::ofstream csv = open_out(out / file);
  if (scenario == "recover") {
    const slung::RecoveryResult r =
        slung::recovery_rate(policy, cfg.env, cfg.physics, trials, cfg.eval, seed);
    slung::write_recovery(csv, r);
    std::cout << "recovery rate " << r.rate << " mean speed " << r.mean_speed << " m/s\n";
  } else if (scenario == "fig8") {
    std::vector<slung::Fig8Row> rows;
    slung::EpisodeOptions opts;
    opts.reference = &cfg.reference;
    for (int k = 0; k < trials; ++k) {
      const slung::EpisodeRecord rec = slung::run_episode(
          policy, cfg.env, cfg.physics, slung::trial_seed(seed, k), cfg.eval, opts);
      const slung::TrackingError e = slung::tracking_error(rec, cfg.reference);
      rows.push_back({k, e.rmse, e.max, static_cast<std::int64_t>(rec.steps()),
                      slung::to_string(rec.done_reason)});
    }
    slung::write_fig8(csv, rows);
  } else {
    const std::vector<double> values =
        values_text.empty() ? slung::default_sweep_values(axis) : parse_values(values_text);
    const auto rows = slung::generalization_sweep(policy, cfg.env, cfg.physics, axis,
                                                  values, trials, cfg.eval, seed);
    slung::write_sweep(csv, rows);
  }
  if (!csv) throw std::runtime_error("write failed: " + (out / file).string());
  return 0;
}

int cmd_rollout(const std::string& checkpoint, const std::string& config_path,
                std::uint64_t seed, const std::string& out_path) {
  const slung::RunConfig cfg = slung::load_run_config(config_path);
  const slung::Checkpoint ckpt = slung::load_checkpoint(checkpoint, cfg.env.num_agents);
  slung::EvalConfig eval = cfg.eval;
  eval.record_states = true;
  const slung::EpisodeRecord rec = slung::run_episode(
      slung::mean_action_controller(ckpt.params), cfg.env, cfg.physics, seed, eval);

  const fs::path out(out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  json artifacts;
  artifacts["checkpoint"] = fs::absolute(checkpoint).string();
  artifacts["trajectory"] = out.filename().string();
  write_manifest(fs::path(out_path + ".manifest.json"), "rollout", cfg, seed, artifacts);
  std::ofstream csv = open_out(out);
  slung::write_rollout(csv, rec);
  if (!csv) throw std::runtime_error("write failed: " + out_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cooperative slung-payload quadrotor simulator and IPPO trainer"};
  app.require_subcommand(1);

  std::string config, out, checkpoint, scenario, values;
  std::int64_t seed = 0;
  int trials = 100;

  auto* train = app.add_subcommand("train", "train a shared policy");
  train->add_option("--config", config, "run config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out, "output directory")->required();
  auto* seed_opt = train->add_option("--seed", seed, "override train.seed");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--scenario", scenario, "recover | fig8 | sweep:<axis>")->required();
  eval->add_option("--trials", trials, "trials per scenario value");
  eval->add_option("--out", out, "output directory")->required();
  eval->add_option("--config", config, "run config for env/physics/eval settings")
      ->check(CLI::ExistingFile);
  eval->add_option("--values", values, "comma-separated sweep values");
  eval->add_option("--seed", seed, "evaluation seed");

  auto* rollout = app.add_subcommand("rollout", "export one deterministic trajectory");
  rollout->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  rollout->add_option("--config", config)->required()->check(CLI::ExistingFile);
  rollout->add_option("--seed", seed, "episode seed");
  rollout->add_option("--out", out, "trajectory CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (seed < 0) throw CLI::ValidationError("--seed", "must be >= 0");
    if (*train) return cmd_train(config, out, seed_opt->count() ? &seed : nullptr);
    if (*eval)
      return cmd_eval(checkpoint, scenario, trials, out, config, values,
                      static_cast<std::uint64_t>(seed));
    if (*rollout)
      return cmd_rollout(checkpoint, config, static_cast<std::uint64_t>(seed), out);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const slung::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const slung::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return 3;
  } catch (const slung::TrainingFault& e) {
    std::cerr << "training fault: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
