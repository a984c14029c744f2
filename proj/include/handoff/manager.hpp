#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "handoff/rng.hpp"

namespace handoff::mgr {

/// Delegation actions, index order fixed (ties resolve to human).
enum class Agent : int { human = 0, ai = 1 };

inline const char* agent_name(Agent a) { return a == Agent::human ? "human" : "ai"; }

/// Epsilon-greedy argmax over the two Q entries; ties take the lower index.
inline int select_delegation(const std::vector<double>& q, double epsilon, Rng& rng) {
  if (epsilon > 0.0 && rng.uniform() < epsilon) return int(rng.uniform_index(q.size()));
  int best = 0;
  for (int i = 1; i < int(q.size()); ++i)
    if (q[size_t(i)] > q[size_t(best)]) best = i;
  return best;
}

/// Terminal episode reward: +/-100 outcome bonus minus step count minus the
/// number of immediate delegation reversions.
inline double episode_reward(bool goal_reached, long steps, long sudden_changes) {
  return (goal_reached ? 100.0 : -100.0) - double(steps) - double(sudden_changes);
}

/// basic = steps where the delegated agent differs from the previous step;
/// sudden = change immediately reversed over three consecutive steps.
inline std::pair<long, long> recount_changes(const std::vector<int>& delegations) {
  long basic = 0, sudden = 0;
  for (size_t t = 1; t < delegations.size(); ++t)
    if (delegations[t] != delegations[t - 1]) ++basic;
  for (size_t t = 1; t + 1 < delegations.size(); ++t) {
    if (delegations[t] != delegations[t - 1] && delegations[t + 1] != delegations[t] &&
        delegations[t + 1] == delegations[t - 1])
      ++sudden;
  }
  return {basic, sudden};
}

/// Normalized context feature vector f_t. Field order is part of the model
/// contract (checkpoints embed the dimension): [fog delta, fog gamma,
/// night delta, night gamma, headlight depth, goal distance, goal bearing
/// sin/cos, speed, current delegation]. Absent contexts encode as zero.
struct ContextFeatures {
  static constexpr int kDim = 10;
  static constexpr double kDistanceScale = 200.0;  // m
  static constexpr double kDepthScale = 50.0;      // m
  static constexpr double kSpeedScale = 13.5;      // m/s

  std::array<float, kDim> values{};

  static ContextFeatures build(bool fog_active, double fog_delta, double fog_gamma,
                               bool night_active, double night_delta, double night_gamma,
                               double headlight_depth, double goal_distance,
                               double goal_bearing, double speed, Agent current) {
    ContextFeatures f;
    auto clamp01 = [](double v) { return float(std::clamp(v, 0.0, 1.0)); };
    if (fog_active) {
      f.values[0] = clamp01(fog_delta / kDistanceScale);
      f.values[1] = clamp01(fog_gamma);
    }
    if (night_active) {
      f.values[2] = clamp01(night_delta / kDistanceScale);
      f.values[3] = clamp01(night_gamma);
      f.values[4] = clamp01(headlight_depth / kDepthScale);
    }
    f.values[5] = clamp01(goal_distance / kDistanceScale);
    f.values[6] = float(std::sin(goal_bearing));
    f.values[7] = float(std::cos(goal_bearing));
    f.values[8] = clamp01(speed / kSpeedScale);
    f.values[9] = current == Agent::ai ? 1.0f : 0.0f;
    return f;
  }
};

/// Interval-blocked random baseline: uniform pick at t = 0 and whenever
/// t is a multiple of the interval; delegation held in between.
class RandomManager {
 public:
  explicit RandomManager(long interval) : interval_(interval < 1 ? 1 : interval) {}

  int decide(long t, Rng& rng) {
    if (t == 0 || t % interval_ == 0) current_ = int(rng.uniform_index(2));
    return current_;
  }

  long interval() const { return interval_; }

 private:
  long interval_;
  int current_ = 0;
};

}  // namespace handoff::mgr
