// Command-line harness: manager training, evaluation, random-interval
// sweeps, calibration probes, and debug frame dumps.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <memory>
#include <thread>

#include <CLI11.hpp>

#include "handoff/config.hpp"
#include "handoff/csv.hpp"
#include "handoff/dqn.hpp"
#include "handoff/manager.hpp"
#include "handoff/qnet.hpp"
#include "handoff/render.hpp"
#include "handoff/scenario.hpp"

namespace fs = std::filesystem;
using namespace handoff;

namespace {

constexpr const char* kVersion = "handoff 1.0.0";
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitShape = 4;

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  uint64_t seed = 1;
  std::string env_override;
  std::string family_override;
  std::string case_override;
};

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

road::Env parse_env(const std::string& s) {
  if (s == "t_intersection") return road::Env::t_intersection;
  if (s == "four_way") return road::Env::four_way;
  throw std::runtime_error("unknown env: " + s + " (t_intersection|four_way)");
}

/// Resolve the scenario configuration from file + flag overrides.
struct Resolved {
  Config file;
  road::Env env = road::Env::t_intersection;
  scen::Family family = scen::Family::mask;
  scen::ScenarioConfig scenario(scen::Case kase) const {
    scen::ScenarioConfig c = scen::ScenarioConfig::make(env, family, kase);
    c.step_limit = file.get_int("step_limit", c.step_limit);
    c.obs_resolution = int(file.get_int("obs_resolution", c.obs_resolution));
    const std::string mode = file.get_string("detection_mode", "threshold");
    if (mode == "threshold")
      c.detection_mode = sense::DetectionMode::threshold;
    else if (mode == "stochastic")
      c.detection_mode = sense::DetectionMode::stochastic;
    else
      throw std::runtime_error("unknown detection_mode: " + mode);
    c.detection_threshold = file.get_double("detection_threshold", c.detection_threshold);
    c.layout = road::default_layout(env);
    c.layout.lane_width = file.get_double("layout.lane_width", c.layout.lane_width);
    c.layout.sidewalk_width = file.get_double("layout.sidewalk_width", c.layout.sidewalk_width);
    c.layout.arm_length = file.get_double("layout.arm_length", c.layout.arm_length);
    c.layout.spawn_margin = file.get_double("layout.spawn_margin", c.layout.spawn_margin);
    return c;
  }
};

Resolved resolve(const CommonOpts& opts) {
  Resolved r;
  if (!opts.config_path.empty()) r.file = Config::load(opts.config_path);
  std::string env_name = r.file.get_string("env", "t_intersection");
  if (!opts.env_override.empty()) env_name = opts.env_override;
  r.env = parse_env(env_name);
  std::string family_name = r.file.get_string("family", "mask");
  if (!opts.family_override.empty()) family_name = opts.family_override;
  r.family = scen::family_from_name(family_name);
  return r;
}

mgr::QNetArch arch_from(const Resolved& r) {
  mgr::QNetArch arch;
  arch.image_res = int(r.file.get_int("obs_resolution", 48));
  return arch;
}

mgr::DqnConfig dqn_config_from(const Config& file, uint64_t episodes_override) {
  mgr::DqnConfig cfg;
  cfg.episodes = file.get_int("train.episodes", cfg.episodes);
  if (episodes_override > 0) cfg.episodes = long(episodes_override);
  cfg.gamma = file.get_double("train.gamma", cfg.gamma);
  cfg.replay_capacity = file.get_int("train.replay_capacity", cfg.replay_capacity);
  cfg.batch_size = int(file.get_int("train.batch_size", cfg.batch_size));
  cfg.target_sync_steps = file.get_int("train.target_sync_steps", cfg.target_sync_steps);
  cfg.update_every = file.get_int("train.update_every", cfg.update_every);
  cfg.min_replay = file.get_int("train.min_replay", cfg.min_replay);
  cfg.lr = file.get_double("train.lr", cfg.lr);
  cfg.epsilon_start = file.get_double("train.epsilon_start", cfg.epsilon_start);
  cfg.epsilon_end = file.get_double("train.epsilon_end", cfg.epsilon_end);
  cfg.epsilon_fraction = file.get_double("train.epsilon_fraction", cfg.epsilon_fraction);
  return cfg;
}

void write_manifest(const fs::path& path, const std::string& command, const Resolved& r,
                    uint64_t seed, const std::string& started, const std::string& ended,
                    const std::vector<std::string>& outputs) {
  Config m;
  m.set("manifest_version", "1");
  m.set("code_version", kVersion);
  m.set("command", command);
  m.set("seed", std::to_string(seed));
  m.set("started", started);
  m.set("ended", ended);
  m.set("env", road::env_name(r.env));
  m.set("family", scen::family_name(r.family));
  for (const auto& [k, v] : r.file.values()) m.set("config." + k, v);
  int i = 0;
  for (const auto& o : outputs) m.set("output." + std::to_string(i++), o);
  std::ofstream out(path);
  out << m.serialize();
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / double(v.size());
}

double sem_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / double(v.size() - 1)) / std::sqrt(double(v.size()));
}

/// Evaluation worker pool: per-episode seeds derived from the master seed,
/// one network clone per worker, records merged by episode index.
std::vector<scen::EpisodeRecord> eval_episodes(const scen::ScenarioSpec& spec,
                                               const std::string& checkpoint, long n,
                                               uint64_t master_seed, uint64_t stream) {
  std::vector<scen::EpisodeRecord> records(static_cast<size_t>(n));
  const int workers = std::min<long>(2, std::max<long>(1, n));
  std::atomic<long> next{0};
  std::vector<std::thread> threads;
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      mgr::ManagerQNet<float> net(
          mgr::QNetArch{.image_res = spec.config.obs_resolution}, 0, 1);
      net.load(checkpoint);
      Rng unused(0);
      for (;;) {
        const long i = next.fetch_add(1);
        if (i >= n) break;
        scen::EpisodeSim sim(spec, derive_seed(master_seed, stream * 1000003 + uint64_t(i)));
        while (!sim.done()) {
          const auto q = net.q_values(sim.observation());
          sim.step(mgr::select_delegation(q, 0.0, unused));
        }
        records[size_t(i)] = sim.record();
      }
    });
  }
  for (auto& t : threads) t.join();
  return records;
}

const std::vector<scen::Case> kCases{scen::Case::ss, scen::Case::se, scen::Case::es,
                                     scen::Case::ee};

int cmd_train(const CommonOpts& opts, uint64_t episodes_override) {
  const std::string started = timestamp();
  const Resolved r = resolve(opts);
  fs::create_directories(opts.out_dir);

  scen::DelegationEnv env(r.env, r.family);
  // Propagate scenario settings into the training environment.
  const mgr::QNetArch arch = arch_from(r);
  mgr::ManagerQNet<float> online(arch, derive_seed(opts.seed, 100), 2);
  mgr::ManagerQNet<float> target(arch, derive_seed(opts.seed, 101), 2);
  const mgr::DqnConfig cfg = dqn_config_from(r.file, episodes_override);

  const fs::path curve_path = fs::path(opts.out_dir) / "learning_curve.csv";
  CsvWriter curve(curve_path.string(), {"episode", "reward", "epsilon", "loss"});
  std::cerr << "training " << road::env_name(r.env) << "/" << scen::family_name(r.family)
            << " for " << cfg.episodes << " episodes\n";
  const auto t0 = std::chrono::steady_clock::now();
  mgr::train_dqn<float>(online, target, env, cfg, opts.seed, [&](const mgr::CurveRow& row) {
    curve.row({std::to_string(row.episode), CsvWriter::num(row.reward, 10),
               CsvWriter::num(row.epsilon, 6), CsvWriter::num(row.loss, 10)});
    if (row.episode % 25 == 0) {
      const auto dt = std::chrono::duration_cast<std::chrono::seconds>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
      std::cerr << "episode " << row.episode << " reward " << row.reward << " eps "
                << row.epsilon << " loss " << row.loss << " (" << dt << "s)\n";
    }
  });

  const fs::path ckpt_path = fs::path(opts.out_dir) / "checkpoint.ckpt";
  online.save(ckpt_path.string());
  write_manifest(fs::path(opts.out_dir) / "manifest.txt", "train", r, opts.seed, started,
                 timestamp(), {curve_path.string(), ckpt_path.string()});
  std::cout << "checkpoint written to " << ckpt_path.string() << "\n";
  return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& checkpoint, long episodes) {
  const std::string started = timestamp();
  const Resolved r = resolve(opts);
  fs::create_directories(opts.out_dir);

  {  // Shape validation against the resolved configuration.
    mgr::ManagerQNet<float> probe(arch_from(r), 0, 1);
    probe.load(checkpoint);
  }

  const fs::path results_path = fs::path(opts.out_dir) / "results.csv";
  CsvWriter results(results_path.string(),
                    {"case", "avoidable_collisions", "mean_basic", "sem_basic", "mean_sudden",
                     "sem_sudden", "mean_reward", "sem_reward"});
  uint64_t stream = 1;
  for (scen::Case kase : kCases) {
    const auto spec = scen::build_scenario(r.scenario(kase));
    const auto records = eval_episodes(spec, checkpoint, episodes, opts.seed, stream++);
    long avoidable = 0;
    std::vector<double> basics, suddens, rewards;
    for (const auto& rec : records) {
      avoidable += rec.avoidable;
      basics.push_back(double(rec.basic_changes));
      suddens.push_back(double(rec.sudden_changes));
      rewards.push_back(rec.reward);
    }
    if (!records.empty()) {
      results.row({scen::case_name(kase), std::to_string(avoidable),
                   CsvWriter::num(mean_of(basics)), CsvWriter::num(sem_of(basics)),
                   CsvWriter::num(mean_of(suddens)), CsvWriter::num(sem_of(suddens)),
                   CsvWriter::num(mean_of(rewards)), CsvWriter::num(sem_of(rewards))});
      std::cout << scen::case_name(kase) << ": avoidable " << avoidable << ", mean reward "
                << mean_of(rewards) << "\n";
    }
  }
  write_manifest(fs::path(opts.out_dir) / "manifest.txt", "eval", r, opts.seed, started,
                 timestamp(), {results_path.string()});
  return 0;
}

int cmd_sweep_random(const CommonOpts& opts, const std::vector<long>& intervals,
                     long episodes) {
  const std::string started = timestamp();
  const Resolved r = resolve(opts);
  fs::create_directories(opts.out_dir);

  const fs::path sweep_path = fs::path(opts.out_dir) / "random_sweep.csv";
  CsvWriter sweep(sweep_path.string(),
                  {"case", "interval", "avoidable_collisions", "mean_reward", "sem_reward"});
  uint64_t stream = 1;
  for (scen::Case kase : kCases) {
    const auto spec = scen::build_scenario(r.scenario(kase));
    for (long interval : intervals) {
      long avoidable = 0;
      std::vector<double> rewards;
      for (long i = 0; i < episodes; ++i) {
        const uint64_t ep_seed = derive_seed(opts.seed, stream * 1000003 + uint64_t(i));
        mgr::RandomManager rm(interval);
        Rng rng(derive_seed(ep_seed, 4));
        const auto rec = scen::run_episode(
            spec, [&](long t, const scen::EpisodeSim&) { return rm.decide(t, rng); }, ep_seed,
            /*with_observations=*/false);
        avoidable += rec.avoidable;
        rewards.push_back(rec.reward);
      }
      ++stream;
      sweep.row({scen::case_name(kase), std::to_string(interval), std::to_string(avoidable),
                 CsvWriter::num(mean_of(rewards)), CsvWriter::num(sem_of(rewards))});
      std::cout << scen::case_name(kase) << " interval " << interval << ": avoidable "
                << avoidable << ", mean reward " << mean_of(rewards) << "\n";
    }
  }
  write_manifest(fs::path(opts.out_dir) / "manifest.txt", "sweep-random", r, opts.seed, started,
                 timestamp(), {sweep_path.string()});
  return 0;
}

int cmd_calibrate(const CommonOpts& opts, int seeds) {
  const std::string started = timestamp();
  const Resolved r = resolve(opts);
  fs::create_directories(opts.out_dir);
  const auto report = scen::calibrate(r.env, r.family, seeds, opts.seed);
  const fs::path path = fs::path(opts.out_dir) / "calibration.txt";
  std::ofstream out(path);
  out << report.transcript;
  out << "optimum_reward = " << report.optimum_reward << "\n";
  out << "nominal_steps = " << report.nominal_steps << "\n";
  std::cout << "calibration ok: optimum reward " << report.optimum_reward << " over "
            << report.nominal_steps << " steps\n";
  write_manifest(fs::path(opts.out_dir) / "manifest.txt", "calibrate", r, opts.seed, started,
                 timestamp(), {path.string()});
  return 0;
}

int cmd_render_debug(const CommonOpts& opts, long frames) {
  const std::string started = timestamp();
  const Resolved r = resolve(opts);
  fs::create_directories(opts.out_dir);
  scen::Case kase = scen::Case::ss;
  if (!opts.case_override.empty()) kase = scen::case_from_name(opts.case_override);
  const auto spec = scen::build_scenario(r.scenario(kase));
  scen::EpisodeSim sim(spec, opts.seed);

  const double arm = spec.net.layout.arm_length;
  const world::Viewport vp{{-arm, -arm}, {arm, arm}};
  std::vector<std::string> outputs;
  long t = 0;
  while (!sim.done() && t < frames) {
    const Image frame = world::render_topdown(sim.world_state(), vp, 480);
    char name[64];
    std::snprintf(name, sizeof name, "frame_%d_%ld.png", 0, t);
    const fs::path p = fs::path(opts.out_dir) / name;
    frame.write_png(p.string());
    outputs.push_back(p.string());
    sim.step(0);
    ++t;
  }
  std::cout << "wrote " << outputs.size() << " frames to " << opts.out_dir << "\n";
  write_manifest(fs::path(opts.out_dir) / "manifest.txt", "render-debug", r, opts.seed, started,
                 timestamp(), outputs);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"2D driving-team simulator with a learned delegation manager"};
  app.require_subcommand(1);

  CommonOpts opts;
  long episodes = 0;
  std::string checkpoint;
  std::vector<long> intervals{10, 15, 20, 25, 30, 35, 40};
  long frames = 50;
  int cal_seeds = 20;

  const auto add_common = [&opts](CLI::App* cmd) {
    cmd->add_option("--config", opts.config_path, "key = value configuration file");
    cmd->add_option("--seed", opts.seed, "master seed");
    cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_option("--env", opts.env_override, "t_intersection|four_way");
    cmd->add_option("--family", opts.family_override,
                    "mask|fog|night|color|fog_color|noisy_fog|noisy_night");
    cmd->add_option("--case", opts.case_override, "S/S|S/E|E/S|E/E");
  };

  CLI::App* train = app.add_subcommand("train", "train the delegation manager");
  add_common(train);
  train->add_option("--episodes", episodes, "training episodes (overrides config)");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint over the case matrix");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  long eval_episodes_n = 100;
  eval->add_option("--episodes", eval_episodes_n, "episodes per case");

  CLI::App* sweep = app.add_subcommand("sweep-random", "random-manager interval sweep");
  add_common(sweep);
  long sweep_episodes_n = 100;
  sweep->add_option("--episodes", sweep_episodes_n, "episodes per (case, interval)");
  sweep->add_option("--intervals", intervals, "delegation intervals");

  CLI::App* cal = app.add_subcommand("calibrate", "verify success/error parameter sets");
  add_common(cal);
  cal->add_option("--probe-seeds", cal_seeds, "seeds per probe");

  CLI::App* dbg = app.add_subcommand("render-debug", "dump top-down frames of an episode");
  add_common(dbg);
  dbg->add_option("--frames", frames, "number of leading steps to dump");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(opts, uint64_t(episodes));
    if (eval->parsed()) return cmd_eval(opts, checkpoint, eval_episodes_n);
    if (sweep->parsed()) return cmd_sweep_random(opts, intervals, sweep_episodes_n);
    if (cal->parsed()) return cmd_calibrate(opts, cal_seeds);
    if (dbg->parsed()) return cmd_render_debug(opts, frames);
  } catch (const net::TrainingDivergedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const mgr::ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitShape;
  } catch (const scen::CalibrationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return 0;
}
