#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "handoff/driver.hpp"
#include "handoff/manager.hpp"
#include "handoff/qnet.hpp"
#include "handoff/road.hpp"
#include "handoff/sensing.hpp"
#include "handoff/tracker.hpp"
#include "handoff/world.hpp"

namespace handoff::scen {

enum class Family { mask, fog, night, color, fog_color, noisy_fog, noisy_night };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::mask: return "mask";
    case Family::fog: return "fog";
    case Family::night: return "night";
    case Family::color: return "color";
    case Family::fog_color: return "fog_color";
    case Family::noisy_fog: return "noisy_fog";
    case Family::noisy_night: return "noisy_night";
  }
  return "?";
}

inline Family family_from_name(const std::string& s) {
  for (Family f : {Family::mask, Family::fog, Family::night, Family::color, Family::fog_color,
                   Family::noisy_fog, Family::noisy_night})
    if (s == family_name(f)) return f;
  throw std::invalid_argument("unknown family: " + s);
}

/// Human/AI case matrix cell. First letter = human side, second = AI side.
enum class Case { ss, se, es, ee };

inline const char* case_name(Case c) {
  switch (c) {
    case Case::ss: return "S/S";
    case Case::se: return "S/E";
    case Case::es: return "E/S";
    case Case::ee: return "E/E";
  }
  return "?";
}

inline Case case_from_name(const std::string& s) {
  for (Case c : {Case::ss, Case::se, Case::es, Case::ee})
    if (s == case_name(c)) return c;
  throw std::invalid_argument("unknown case: " + s);
}

inline bool human_errs(Case c) { return c == Case::es || c == Case::ee; }
inline bool ai_errs(Case c) { return c == Case::se || c == Case::ee; }

enum class Outcome { goal, collision, timeout };

inline const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::goal: return "goal";
    case Outcome::collision: return "collision";
    case Outcome::timeout: return "timeout";
  }
  return "?";
}

struct ScenarioConfig {
  road::Env env = road::Env::t_intersection;
  Family family = Family::mask;
  Case kase = Case::ss;
  long step_limit = 300;
  sense::DetectionMode detection_mode = sense::DetectionMode::threshold;
  double detection_threshold = 0.5;
  int obs_resolution = 48;
  road::Layout layout = road::default_layout(road::Env::t_intersection);

  static ScenarioConfig make(road::Env env, Family family, Case kase) {
    ScenarioConfig c;
    c.env = env;
    c.family = family;
    c.kase = kase;
    c.layout = road::default_layout(env);
    return c;
  }
};

struct EpisodeRecord {
  Outcome outcome = Outcome::timeout;
  long steps = 0;            // s_e
  long basic_changes = 0;
  long sudden_changes = 0;   // d_e
  double reward = 0.0;
  bool avoidable = false;
  std::vector<int> delegations;
};

/// Collision that an error-free teammate could have prevented.
inline bool classify_avoidable(const EpisodeRecord& record, const ScenarioConfig& config) {
  if (record.outcome != Outcome::collision) return false;
  return !human_errs(config.kase) || !ai_errs(config.kase);
}

// --- calibrated context parameter sets --------------------------------------
// Constants below are the calibrated success/error configurations per family;
// the calibrate() probe verifies them closed-loop (solo control must reach the
// goal on the success side and collide on the error side).

inline constexpr Rgb kManagedColor{220, 60, 50};
inline constexpr Rgb kConflictColor{30, 90, 200};
inline constexpr Rgb kSafeErrorColor{255, 255, 0};

inline sense::SensingProfile base_profile(int resolution) {
  sense::SensingProfile p;
  p.range_forward = 65.0;
  p.range_backward = 15.0;
  p.range_left = 40.0;
  p.range_right = 40.0;
  p.image_resolution = resolution;
  return p;
}

inline sense::Mask success_mask() {
  return {sense::Direction::forward, sense::Placement::boundary_adjacent, 0.10};
}

inline sense::Mask error_mask() {
  return {sense::Direction::forward, sense::Placement::vehicle_adjacent, 0.92};
}

inline sense::FogParams success_fog() { return {45.0, 0.60, sense::kDefaultFogColor}; }
inline sense::FogParams error_fog() { return {12.0, 0.15, sense::kDefaultFogColor}; }
inline sense::FogParams light_fog() { return {45.0, 0.90, sense::kDefaultFogColor}; }

inline sense::NightParams success_night() { return {50.0, 0.55, 25.0, 2.2, 0.35}; }
inline sense::NightParams error_night() { return {14.0, 0.12, 8.0, 1.8, 0.15}; }

inline sense::NoiseParams fog_noise() {
  sense::NoiseParams n;
  n.severity_distance = {6.0, 20.0, 80.0};
  n.severity_value = {0.08, 0.05, 0.95};
  return n;
}

inline sense::NoiseParams night_noise() {
  sense::NoiseParams n;
  n.severity_distance = {6.0, 20.0, 80.0};
  n.severity_value = {0.08, 0.05, 0.95};
  n.headlight_depth = {2.0, 4.0, 40.0};
  return n;
}

/// Calibrated sensing profile for one side of a case.
inline sense::SensingProfile side_profile(Family family, bool ai_side, bool error,
                                          int resolution) {
  sense::SensingProfile p = base_profile(resolution);
  switch (family) {
    case Family::mask:
      p.masks.push_back(error ? error_mask() : success_mask());
      break;
    case Family::fog:
    case Family::noisy_fog:
      if (ai_side) {
        p.masks.push_back(error ? error_mask() : success_mask());
      } else {
        p.masks.push_back(success_mask());  // weather-free success masks retained
        p.fog = error ? error_fog() : success_fog();
      }
      break;
    case Family::night:
    case Family::noisy_night:
      if (ai_side) {
        p.masks.push_back(error ? error_mask() : success_mask());
      } else {
        p.night = error ? error_night() : success_night();
      }
      break;
    case Family::color:
      if (ai_side) {
        p.error_colors.push_back(error ? kConflictColor : kSafeErrorColor);
      } else {
        p.masks.push_back(error ? error_mask() : success_mask());
      }
      break;
    case Family::fog_color:
      if (ai_side) {
        p.fog = light_fog();
        p.error_colors.push_back(error ? kConflictColor : kSafeErrorColor);
      } else {
        p.masks.push_back(success_mask());
        p.fog = error ? error_fog() : success_fog();
      }
      break;
  }
  if ((family == Family::noisy_fog || family == Family::noisy_night) && !ai_side)
    p.noise = family == Family::noisy_fog ? fog_noise() : night_noise();
  return p;
}

// --- scenario construction ---------------------------------------------------

inline constexpr world::EntityId kManagedId = 1;
inline constexpr world::EntityId kConflictId = 2;

struct ScenarioSpec {
  ScenarioConfig config;
  road::RoadNetwork net;
  road::Path managed_path;
  road::Path conflict_path;
  sense::SensingProfile human_profile;
  sense::SensingProfile ai_profile;
  long conflict_delay_steps = 0;      // background departure hold
  double conflict_spawn_progress = 0; // background spawn offset along its path
  double nominal_cross_step = 0;      // managed nominal arrival at the crossing
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline world::Entity make_car(world::EntityId id, Vec2 pos, double heading, Rgb color) {
  world::Entity e;
  e.id = id;
  e.kind = world::EntityKind::car;
  e.center = pos;
  e.heading = heading;
  e.half_extent = {2.0, 1.0};
  e.color = color;
  e.movable = true;
  return e;
}

/// Steps for a lone car from `start_progress` (at rest) to reach `target_s`
/// along the path, driving the nominal profile with no conflicts.
inline double nominal_steps_to(const road::PathCursor& cursor, double start_progress,
                               double target_s, double dt = world::kDefaultDt) {
  driver::DriverParams params;
  double s = start_progress;
  double v = 0.0;
  Vec2 pos = cursor.point_at(s);
  double heading = cursor.heading_at(s);
  road::PathTracker tracker(&cursor, start_progress);
  long steps = 0;
  const long limit = 20000;
  while (s < target_s && steps < limit) {
    const double target = cursor.speed_target(tracker.progress(), params.max_accel);
    const double accel = driver::detail::accel_toward(v, target, params);
    const double yaw = tracker.steer(pos, heading, v);
    v = std::clamp(v + accel * dt, 0.0, world::kMaxSpeed);
    heading += yaw * dt;
    pos = pos + Vec2{std::cos(heading), std::sin(heading)} * (v * dt);
    s = tracker.progress();
    ++steps;
  }
  return double(steps);
}

}  // namespace detail

/// Assemble the scenario: spawn the managed vehicle and one conflicting
/// background vehicle whose paths cross at the intersection, then solve the
/// background spawn offset / departure delay so nominal arrivals coincide.
inline ScenarioSpec build_scenario(const ScenarioConfig& config) {
  ScenarioSpec spec;
  spec.config = config;
  spec.net = road::build_network(config.env, config.layout);

  // Managed route: in from the south; T turns left onto the main road,
  // four-way goes straight through. Background traffic runs west -> east.
  const std::string managed_goal =
      config.env == road::Env::t_intersection ? "west_out" : "north_out";
  spec.managed_path = road::shortest_path(spec.net, "south_in", managed_goal);
  spec.conflict_path = road::shortest_path(spec.net, "west_in", "east_out");

  spec.human_profile =
      side_profile(config.family, /*ai_side=*/false, human_errs(config.kase),
                   config.obs_resolution);
  spec.ai_profile = side_profile(config.family, /*ai_side=*/true, ai_errs(config.kase),
                                 config.obs_resolution);

  const road::PathCursor managed_cursor(spec.managed_path);
  const road::PathCursor conflict_cursor(spec.conflict_path);
  const auto crossing = road::find_crossing(managed_cursor, conflict_cursor);
  if (!crossing) throw ConfigError("scenario paths do not cross");

  const double t_managed =
      detail::nominal_steps_to(managed_cursor, 0.0, crossing->s_a);
  spec.nominal_cross_step = t_managed;

  double t_bg = detail::nominal_steps_to(conflict_cursor, 0.0, crossing->s_b);
  if (t_bg <= t_managed) {
    // Background would arrive first: hold it parked at spawn.
    spec.conflict_delay_steps = long(std::llround(t_managed - t_bg));
    spec.conflict_spawn_progress = 0.0;
  } else {
    // Background too slow: advance its spawn point until arrivals match.
    double lo = 0.0, hi = std::max(0.0, crossing->s_b - 12.0);
    for (int it = 0; it < 40; ++it) {
      const double mid = (lo + hi) / 2.0;
      const double t = detail::nominal_steps_to(conflict_cursor, mid, crossing->s_b);
      if (t > t_managed)
        lo = mid;
      else
        hi = mid;
    }
    spec.conflict_spawn_progress = (lo + hi) / 2.0;
    spec.conflict_delay_steps = 0;
  }
  return spec;
}

// --- episode simulation -------------------------------------------------------

struct StepResult {
  bool done = false;
  double reward = 0.0;  // terminal-only
};

/// One full managed episode, stepped delegation-by-delegation:
/// render -> perceive (both drivers) -> delegate -> drive -> world update ->
/// outcome checks. Deterministic given (spec, seed).
class EpisodeSim {
 public:
  EpisodeSim(const ScenarioSpec& spec, uint64_t seed, bool with_observations = true)
      : spec_(spec),
        managed_cursor_(spec.managed_path),
        conflict_cursor_(spec.conflict_path),
        human_rng_(derive_seed(seed, 1)),
        ai_rng_(derive_seed(seed, 2)),
        noise_rng_(derive_seed(seed, 3)),
        managed_tracker_(&managed_cursor_, 0.0),
        conflict_tracker_(&conflict_cursor_, spec.conflict_spawn_progress),
        with_observations_(with_observations) {
    state_.dt = world::kDefaultDt;
    state_.entities = road::static_entities(spec.net);

    const Vec2 m0 = managed_cursor_.point_at(0.0);
    state_.entities.insert(state_.entities.begin(),
                           detail::make_car(kManagedId, m0, managed_cursor_.heading_at(0.0),
                                            kManagedColor));
    const double s0 = spec.conflict_spawn_progress;
    const Vec2 c0 = conflict_cursor_.point_at(s0);
    state_.entities.insert(state_.entities.begin() + 1,
                           detail::make_car(kConflictId, c0, conflict_cursor_.heading_at(s0),
                                            kConflictColor));
    state_.car_kinematics[kManagedId] = {};
    state_.car_kinematics[kConflictId] = {};
    refresh_observation();
  }

  bool done() const { return done_; }
  long step_index() const { return t_; }
  const world::WorldState& world_state() const { return state_; }
  const mgr::ManagerObs& observation() const { return obs_; }
  const EpisodeRecord& record() const { return record_; }
  const sense::SensingProfile& human_profile() const { return spec_.human_profile; }
  const sense::SensingProfile& ai_profile() const { return spec_.ai_profile; }

  /// Apply a delegation and advance one world step.
  StepResult step(int delegation) {
    if (done_) throw std::logic_error("episode already finished");
    record_.delegations.push_back(delegation);
    current_agent_ = delegation;

    // Both drivers keep perceiving every step, not just the delegated one.
    update_detections(spec_.human_profile, human_detected_, human_rng_);
    update_detections(spec_.ai_profile, ai_detected_, ai_rng_);

    std::map<world::EntityId, world::Control> controls;
    controls[kManagedId] = managed_control(delegation == int(mgr::Agent::human)
                                               ? human_detected_
                                               : ai_detected_);
    controls[kConflictId] = conflict_control();

    state_ = world::step_world(state_, controls);
    ++t_;

    // Outcome checks: collision, then goal, then timeout.
    StepResult result;
    const auto hits = world::detect_car_collisions(state_);
    bool managed_hit = false;
    for (const auto& [a, b] : hits)
      if (a == kManagedId || b == kManagedId) managed_hit = true;
    const world::Entity* managed = state_.find(kManagedId);
    const bool at_goal = distance(managed->center, managed_cursor_.goal()) <= 1.0;

    if (managed_hit || at_goal || t_ >= spec_.config.step_limit) {
      done_ = true;
      record_.outcome =
          managed_hit ? Outcome::collision : (at_goal ? Outcome::goal : Outcome::timeout);
      record_.steps = t_;
      const auto [basic, sudden] = mgr::recount_changes(record_.delegations);
      record_.basic_changes = basic;
      record_.sudden_changes = sudden;
      record_.reward =
          mgr::episode_reward(record_.outcome == Outcome::goal, record_.steps, sudden);
      record_.avoidable = classify_avoidable(record_, spec_.config);
      result.done = true;
      result.reward = record_.reward;
    }
    refresh_observation();
    return result;
  }

  /// Manager-facing context features for the current state.
  mgr::ContextFeatures context_features() const {
    const world::Entity* managed = state_.find(kManagedId);
    const Vec2 to_goal = managed_cursor_.goal() - managed->center;
    const double bearing =
        std::remainder(std::atan2(to_goal.y, to_goal.x) - managed->heading, 2.0 * M_PI);
    const auto& fog = obs_fog_;
    const auto& night = obs_night_;
    return mgr::ContextFeatures::build(
        fog.has_value(), fog ? fog->severity_distance : 0.0, fog ? fog->severity_value : 0.0,
        night.has_value(), night ? night->severity_distance : 0.0,
        night ? night->severity_value : 0.0, night ? night->headlight_depth : 0.0,
        to_goal.norm(), bearing, state_.car_kinematics.at(kManagedId).speed,
        mgr::Agent(current_agent_));
  }

 private:
  sense::CarPose managed_pose() const {
    const world::Entity* e = state_.find(kManagedId);
    return {e->center, e->heading, e->half_extent.x, e->half_extent.y};
  }

  /// Latched per-entity detection: once seen, a car stays detected while it
  /// remains inside the sensing region.
  void update_detections(const sense::SensingProfile& profile,
                         std::map<world::EntityId, bool>& latched, Rng& rng) {
    const sense::CarPose pose = managed_pose();
    const sense::ObsFrame frame = sense::ObsFrame::make(pose, profile);
    for (const auto& e : state_.entities) {
      if (e.kind != world::EntityKind::car || e.id == kManagedId) continue;
      const bool in_range = frame.in_region(frame.world_to_vehicle(e.center));
      if (!in_range) {
        latched[e.id] = false;
        continue;
      }
      if (latched[e.id]) continue;
      const double likelihood = sense::detection_likelihood(e, profile, pose);
      latched[e.id] = sense::resolve_detection(likelihood, spec_.config.detection_mode, rng,
                                               spec_.config.detection_threshold);
    }
  }

  world::Control managed_control(const std::map<world::EntityId, bool>& detected) {
    const world::Entity* self = state_.find(kManagedId);
    const auto& kin = state_.car_kinematics.at(kManagedId);

    driver::CarView self_view;
    self_view.id = kManagedId;
    self_view.position = self->center;
    self_view.heading = self->heading;
    self_view.speed = kin.speed;
    self_view.path = &managed_cursor_;
    self_view.progress = managed_tracker_.progress();

    std::vector<driver::CarView> others;
    for (const auto& e : state_.entities) {
      if (e.kind != world::EntityKind::car || e.id == kManagedId) continue;
      auto it = detected.find(e.id);
      if (it == detected.end() || !it->second) continue;
      driver::CarView v;
      v.id = e.id;
      v.position = e.center;
      v.heading = e.heading;
      v.speed = state_.car_kinematics.at(e.id).speed;
      v.path = e.id == kConflictId ? &conflict_cursor_ : nullptr;
      v.progress = e.id == kConflictId ? conflict_tracker_.progress() : 0.0;
      others.push_back(v);
    }

    // The managed vehicle always yields on a path crossing.
    const auto assessment = driver::assess_conflict(self_view, others, params_,
                                                    /*self_has_right_of_way=*/false);
    const double target = managed_cursor_.speed_target(self_view.progress, params_.max_accel);
    const double accel = driver::decide_acceleration(self_view, assessment, target, params_);
    const double yaw = managed_tracker_.steer(self->center, self->heading, kin.speed);
    return {accel, yaw};
  }

  world::Control conflict_control() {
    if (t_ < spec_.conflict_delay_steps) return {0.0, 0.0};  // held at spawn
    const world::Entity* self = state_.find(kConflictId);
    const auto& kin = state_.car_kinematics.at(kConflictId);

    driver::CarView self_view;
    self_view.id = kConflictId;
    self_view.position = self->center;
    self_view.heading = self->heading;
    self_view.speed = kin.speed;
    self_view.path = &conflict_cursor_;
    self_view.progress = conflict_tracker_.progress();

    // Background drivers ignore the managed vehicle entirely; with a single
    // background car there is nothing left to react to.
    driver::ConflictAssessment none;
    double target = conflict_cursor_.speed_target(self_view.progress, params_.max_accel);
    // Stop at the end of the route.
    const double remaining = conflict_cursor_.length() - self_view.progress;
    target = std::min(target, std::sqrt(2.0 * params_.max_accel * std::max(remaining - 1.0, 0.0)));
    const double accel = driver::decide_acceleration(self_view, none, target, params_);
    const double yaw = conflict_tracker_.steer(self->center, self->heading, kin.speed);
    return {accel, yaw};
  }

  /// Recompute the manager observation (both driver views + context vector).
  void refresh_observation() {
    if (!with_observations_) return;  // scripted probes skip the render cost
    // Noisy families perturb only the manager-facing severity parameters;
    // driver detection above always uses the ground-truth profiles.
    sense::SensingProfile hp = spec_.human_profile;
    obs_fog_ = hp.fog;
    obs_night_ = hp.night;
    if (hp.noise) {
      if (hp.fog) {
        *hp.fog = sense::sample_noisy_params(*hp.fog, *hp.noise, noise_rng_);
        obs_fog_ = hp.fog;
      }
      if (hp.night) {
        *hp.night = sense::sample_noisy_params(*hp.night, *hp.noise, noise_rng_);
        obs_night_ = hp.night;
      }
    }
    const sense::SensingProfile& ap = spec_.ai_profile;

    std::vector<world::EntityId> all_ids;
    for (const auto& e : state_.entities) all_ids.push_back(e.id);
    const sense::CarPose pose = managed_pose();
    const Image human_img = sense::make_observation(state_, pose, hp, all_ids);
    const Image ai_img = sense::make_observation(state_, pose, ap, all_ids);

    obs_.human = mgr::image_to_planes(human_img);
    obs_.ai = mgr::image_to_planes(ai_img);
    const mgr::ContextFeatures f = context_features();
    obs_.context.assign(f.values.begin(), f.values.end());
  }

  ScenarioSpec spec_;
  road::PathCursor managed_cursor_;
  road::PathCursor conflict_cursor_;
  Rng human_rng_, ai_rng_, noise_rng_;
  road::PathTracker managed_tracker_;
  road::PathTracker conflict_tracker_;
  driver::DriverParams params_;
  world::WorldState state_;
  std::map<world::EntityId, bool> human_detected_, ai_detected_;
  std::optional<sense::FogParams> obs_fog_;
  std::optional<sense::NightParams> obs_night_;
  mgr::ManagerObs obs_;
  EpisodeRecord record_;
  long t_ = 0;
  int current_agent_ = 0;
  bool done_ = false;
  bool with_observations_ = true;
};

/// Run one episode under a delegation policy (called once per step with the
/// step index and current observation).
template <typename Policy>
EpisodeRecord run_episode(const ScenarioSpec& spec, Policy&& policy, uint64_t seed,
                          bool with_observations = true) {
  EpisodeSim sim(spec, seed, with_observations);
  long t = 0;
  while (!sim.done()) {
    const int a = policy(t, sim);
    sim.step(a);
    ++t;
  }
  return sim.record();
}

/// Constant-delegation episode; skips observation rendering (no policy reads it).
inline EpisodeRecord run_scripted(const ScenarioSpec& spec, mgr::Agent agent, uint64_t seed) {
  return run_episode(spec, [agent](long, const EpisodeSim&) { return int(agent); }, seed,
                     /*with_observations=*/false);
}

// --- calibration ---------------------------------------------------------------

struct CalibrationError : std::runtime_error {
  explicit CalibrationError(const std::string& what) : std::runtime_error(what) {}
};

struct CalibrationReport {
  road::Env env = road::Env::t_intersection;
  Family family = Family::mask;
  double optimum_reward = 0.0;     // best scripted solo reward (success side)
  long nominal_steps = 0;          // steps of the solo success run
  std::string transcript;
};

/// Closed-loop verification that the family's calibrated parameters produce
/// the intended outcomes: solo success-side runs reach the goal, solo
/// error-side runs collide. Each probe runs `seeds` seeds.
inline CalibrationReport calibrate(road::Env env, Family family, int seeds = 3,
                                   uint64_t master_seed = 2024) {
  CalibrationReport report;
  report.env = env;
  report.family = family;
  std::ostringstream log;

  const auto probe = [&](mgr::Agent agent, Case kase, Outcome expected) {
    const ScenarioSpec spec = build_scenario(ScenarioConfig::make(env, family, kase));
    for (int s = 0; s < seeds; ++s) {
      const EpisodeRecord rec = run_scripted(spec, agent, derive_seed(master_seed, uint64_t(s)));
      log << family_name(family) << " " << road::env_name(env) << " " << case_name(kase)
          << " solo=" << mgr::agent_name(agent) << " seed=" << s << " -> "
          << outcome_name(rec.outcome) << " steps=" << rec.steps << " reward=" << rec.reward
          << "\n";
      if (rec.outcome != expected)
        throw CalibrationError("calibration probe failed:\n" + log.str());
      if (expected == Outcome::goal) {
        report.optimum_reward = rec.reward;
        report.nominal_steps = rec.steps;
      }
    }
  };

  // Success sides solo-complete; error sides solo-collide.
  probe(mgr::Agent::human, Case::ss, Outcome::goal);
  probe(mgr::Agent::ai, Case::ss, Outcome::goal);
  probe(mgr::Agent::human, Case::se, Outcome::goal);
  probe(mgr::Agent::ai, Case::se, Outcome::collision);
  probe(mgr::Agent::human, Case::es, Outcome::collision);
  probe(mgr::Agent::ai, Case::es, Outcome::goal);
  probe(mgr::Agent::human, Case::ee, Outcome::collision);
  probe(mgr::Agent::ai, Case::ee, Outcome::collision);

  report.transcript = log.str();
  return report;
}

// --- DQN environment adapter ----------------------------------------------------

/// Training environment: each reset draws one of the four cases uniformly
/// (per-episode) for a fixed (environment, family) pair.
class DelegationEnv {
 public:
  using Obs = mgr::ManagerObs;

  struct Step {
    Obs obs;
    double reward = 0.0;
    bool done = false;
  };

  DelegationEnv(road::Env env, Family family, std::optional<Case> fixed_case = std::nullopt)
      : env_(env), family_(family), fixed_case_(fixed_case) {
    for (Case c : {Case::ss, Case::se, Case::es, Case::ee})
      specs_.emplace(c, build_scenario(ScenarioConfig::make(env, family, c)));
  }

  Obs reset(uint64_t seed) {
    Rng rng(seed);
    const Case c = fixed_case_ ? *fixed_case_
                               : std::array{Case::ss, Case::se, Case::es,
                                            Case::ee}[rng.uniform_index(4)];
    sim_ = std::make_unique<EpisodeSim>(specs_.at(c), derive_seed(seed, 17));
    last_case_ = c;
    return sim_->observation();
  }

  Step step(int action) {
    const StepResult r = sim_->step(action);
    Step out;
    out.obs = sim_->observation();
    out.reward = r.reward;
    out.done = r.done;
    return out;
  }

  const EpisodeRecord& record() const { return sim_->record(); }
  Case last_case() const { return last_case_; }

 private:
  road::Env env_;
  Family family_;
  std::optional<Case> fixed_case_;
  std::map<Case, ScenarioSpec> specs_;
  std::unique_ptr<EpisodeSim> sim_;
  Case last_case_ = Case::ss;
};

}  // namespace handoff::scen
