#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include "handoff/road.hpp"
#include "handoff/world.hpp"

namespace handoff::driver {

using world::EntityId;

/// Table of driving-behavior constraints shared by both driver models.
struct DriverParams {
  double min_safe_distance = 10.0;  // m
  double min_decel = 0.2;           // m/s^2
  double max_accel = 1.2;           // m/s^2
  double goal_threshold = 1.0;      // m
  double dt = 0.1;                  // s, control period
  double conflict_horizon = 5.0;    // s, path-cross lookahead
  double conflict_radius = 4.5;     // m of path around a crossing point
  double time_gap = 0.6;            // s, required separation at the crossing
};

enum class ConflictKind { none, lead_follow, path_cross };

struct ConflictAssessment {
  ConflictKind kind = ConflictKind::none;
  EntityId other_id = -1;
  double time_to_conflict = 0.0;
  bool has_right_of_way = false;
  // Supporting data for the acceleration decision.
  double distance_to_entry = 0.0;  // m along own path to the conflict region
  double gap = 0.0;                // m bumper gap (lead_follow)
  double other_speed = 0.0;        // m/s
  double other_exit_time = 0.0;    // s until the other clears the region
};

/// What a driver knows about one car it has detected (or about itself).
struct CarView {
  EntityId id = -1;
  Vec2 position;
  double heading = 0.0;
  double speed = 0.0;
  double half_length = 2.0;
  const road::PathCursor* path = nullptr;  // null once parked
  double progress = 0.0;                   // arc length along `path`
};

namespace detail {

inline double time_to_travel(double dist, double speed) {
  if (dist <= 0.0) return 0.0;
  return dist / std::max(speed, 0.3);
}

/// Arrival time assuming the car accelerates toward `vmax` at `accel` and
/// then cruises (how drivers project other traffic).
inline double time_to_travel_accelerating(double dist, double v0, double accel, double vmax) {
  if (dist <= 0.0) return 0.0;
  const double t_ramp = std::max(0.0, (vmax - v0) / accel);
  const double d_ramp = v0 * t_ramp + 0.5 * accel * t_ramp * t_ramp;
  if (d_ramp >= dist) {
    const double v_end = std::sqrt(std::max(v0 * v0 + 2.0 * accel * dist, 1e-6));
    return (v_end - v0) / accel;
  }
  return t_ramp + (dist - d_ramp) / std::max(vmax, 0.3);
}

}  // namespace detail

/// Detection-gated conflict assessment. Only the cars in `detected` exist
/// from this driver's point of view; removing an undetected car from the
/// world cannot change the result.
inline ConflictAssessment assess_conflict(const CarView& self,
                                          const std::vector<CarView>& detected,
                                          const DriverParams& params,
                                          bool self_has_right_of_way = false) {
  ConflictAssessment best;

  if (self.path == nullptr) return best;
  const road::PathCursor& own = *self.path;

  // Case 1: lead vehicle in the same lane ahead.
  double best_gap = std::numeric_limits<double>::max();
  for (const CarView& other : detected) {
    if (other.id == self.id) continue;
    const double s_other = own.project(other.position, self.progress, self.progress + 80.0);
    if (s_other <= self.progress + 1e-6) continue;
    if (own.cross_track(other.position, s_other) > 1.6) continue;  // other lane
    const double gap =
        s_other - self.progress - self.half_length - other.half_length;
    const double brake_margin =
        std::max(0.0, self.speed * self.speed - other.speed * other.speed) /
        (2.0 * params.max_accel);
    const bool closing = self.speed > other.speed - 0.1;
    if (gap < params.min_safe_distance + brake_margin && closing && gap < best_gap) {
      best_gap = gap;
      best.kind = ConflictKind::lead_follow;
      best.other_id = other.id;
      best.gap = gap;
      best.other_speed = other.speed;
      best.time_to_conflict =
          self.speed > other.speed ? gap / std::max(self.speed - other.speed, 0.1) : 0.0;
      best.has_right_of_way = self_has_right_of_way;
    }
  }
  if (best.kind == ConflictKind::lead_follow) return best;

  // Case 2: transversal path crossing with overlapping arrival windows.
  double best_entry = std::numeric_limits<double>::max();
  for (const CarView& other : detected) {
    if (other.id == self.id || other.path == nullptr) continue;
    const auto crossing = road::find_crossing(own, *other.path);
    if (!crossing) continue;

    const double r = params.conflict_radius;
    const double own_entry = crossing->s_a - r;
    const double own_exit = crossing->s_a + r + self.half_length * 2.0;
    const double other_entry = crossing->s_b - r;
    const double other_exit = crossing->s_b + r + other.half_length * 2.0;

    if (self.progress > own_exit || other.progress > other_exit) continue;  // already past

    // Own windows project at current speed (conservative: self may brake);
    // the other car is assumed to keep accelerating toward the open-road
    // limit, which is what unimpeded background traffic does.
    const double t_self_in = detail::time_to_travel(own_entry - self.progress, self.speed);
    const double t_self_out = detail::time_to_travel(own_exit - self.progress, self.speed);
    const double t_other_in = detail::time_to_travel_accelerating(
        other_entry - other.progress, other.speed, params.max_accel, world::kMaxSpeed);
    const double t_other_out = detail::time_to_travel_accelerating(
        other_exit - other.progress, other.speed, params.max_accel, world::kMaxSpeed);

    if (t_self_in > params.conflict_horizon && t_other_in > params.conflict_horizon) continue;

    const bool overlap = t_self_in < t_other_out + params.time_gap &&
                         t_other_in < t_self_out + params.time_gap;
    if (!overlap) continue;

    const double entry_dist = own_entry - self.progress;
    if (entry_dist < best_entry) {
      best_entry = entry_dist;
      best.kind = ConflictKind::path_cross;
      best.other_id = other.id;
      best.time_to_conflict = t_self_in;
      best.has_right_of_way = self_has_right_of_way;
      best.distance_to_entry = entry_dist;
      best.other_speed = other.speed;
      best.other_exit_time = t_other_out;
    }
  }
  return best;
}

namespace detail {

/// Acceleration that approaches `target` speed without overshooting it.
inline double accel_toward(double speed, double target, const DriverParams& p) {
  const double diff = target - speed;
  if (diff > 1e-9) return std::min(p.max_accel, diff / p.dt);
  if (diff < -1e-9) {
    const double required = -diff / p.dt;
    if (required < 0.05) return 0.0;  // coast; limit decays ahead anyway
    return -std::clamp(required, p.min_decel, p.max_accel);
  }
  return 0.0;
}

}  // namespace detail

/// Acceleration-only policy. `target_speed` is the path/turn speed target at
/// the car's current progress; conflicts override it by yielding.
inline double decide_acceleration(const CarView& self, const ConflictAssessment& assessment,
                                  double target_speed, const DriverParams& params) {
  if (assessment.kind == ConflictKind::none || assessment.has_right_of_way)
    return detail::accel_toward(self.speed, target_speed, params);

  if (assessment.kind == ConflictKind::lead_follow) {
    // Match the lead's speed before eating into the safe-distance floor.
    const double usable = std::max(assessment.gap - 0.5 * params.min_safe_distance, 0.5);
    const double dv2 = self.speed * self.speed - assessment.other_speed * assessment.other_speed;
    if (dv2 <= 0.0 && assessment.gap > 0.5 * params.min_safe_distance)
      return -params.min_decel;
    const double required = std::max(dv2, 0.0) / (2.0 * usable);
    if (self.speed < 0.05) return 0.0;  // hold, never reverse
    return -std::clamp(required, params.min_decel, params.max_accel);
  }

  // path_cross without right of way: yield by delaying arrival until the
  // other vehicle clears the region; commit to a full stop only when the
  // entry point is close enough to make stopping the binding constraint.
  if (self.speed < 0.05) return 0.0;
  const double stop_margin = 1.5;
  const double usable = std::max(assessment.distance_to_entry - stop_margin, 0.3);
  const double stop_decel = self.speed * self.speed / (2.0 * usable);
  if (stop_decel >= 0.85 * params.max_accel)
    return -std::clamp(stop_decel, params.min_decel, params.max_accel);
  // Speed at which arrival lands just after the other's exit (plus gap).
  const double clear_time = assessment.other_exit_time + params.time_gap;
  const double required_speed = usable / std::max(clear_time, 0.3);
  if (self.speed <= required_speed + 0.05) return 0.0;  // already slow enough
  return -std::clamp((self.speed - required_speed) * 0.8, params.min_decel, params.max_accel);
}

/// Exactly one car per conflict group proceeds; lowest id wins.
inline std::map<EntityId, bool> assign_right_of_way(const std::vector<EntityId>& group) {
  std::map<EntityId, bool> row;
  if (group.empty()) return row;
  EntityId lowest = group.front();
  for (EntityId id : group) lowest = std::min(lowest, id);
  for (EntityId id : group) row[id] = (id == lowest);
  return row;
}

enum class ObserverRole { managed, background };

/// Background traffic never reacts to the managed vehicle: it is filtered
/// out of their world before perception, putting collision avoidance fully
/// on the managed side.
inline std::vector<EntityId> background_visibility_filter(ObserverRole role,
                                                          const std::vector<EntityId>& entities,
                                                          EntityId managed_id) {
  if (role == ObserverRole::managed) return entities;
  std::vector<EntityId> out;
  out.reserve(entities.size());
  for (EntityId id : entities)
    if (id != managed_id) out.push_back(id);
  return out;
}

}  // namespace handoff::driver
