#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "handoff/geometry.hpp"
#include "handoff/image.hpp"

namespace handoff::world {

enum class EntityKind { car, building, sidewalk };

using EntityId = int;

struct Entity {
  EntityId id = 0;
  EntityKind kind = EntityKind::car;
  Vec2 center;
  double heading = 0.0;           // radians, +x axis of the rectangle
  Vec2 half_extent{1.0, 1.0};     // (longitudinal, lateral) meters
  Rgb color{255, 255, 255};
  bool movable = false;

  OrientedRect rect() const { return {center, heading, half_extent}; }
};

/// Longitudinal state of a car. Steering is a yaw-rate command (rad/s):
/// paths are authoritative, so the tracker owns lateral control.
struct CarKinematics {
  double speed = 0.0;         // m/s, [0, kMaxSpeed]
  double acceleration = 0.0;  // m/s^2
  double steering = 0.0;      // rad/s
};

inline constexpr double kMaxSpeed = 13.5;       // m/s
inline constexpr double kMaxAccel = 1.2;        // m/s^2
inline constexpr double kDefaultDt = 0.1;       // s

struct Control {
  double acceleration = 0.0;
  double steering = 0.0;
};

struct WorldState {
  std::vector<Entity> entities;
  std::map<EntityId, CarKinematics> car_kinematics;
  long time_step_index = 0;
  double dt = kDefaultDt;

  const Entity* find(EntityId id) const {
    for (const auto& e : entities)
      if (e.id == id) return &e;
    return nullptr;
  }
  Entity* find(EntityId id) {
    for (auto& e : entities)
      if (e.id == id) return &e;
    return nullptr;
  }
};

struct MissingEntityError : std::runtime_error {
  explicit MissingEntityError(EntityId id)
      : std::runtime_error("no such entity: " + std::to_string(id)) {}
};

struct InvalidControlError : std::runtime_error {
  explicit InvalidControlError(const std::string& what) : std::runtime_error(what) {}
};

/// Forward-Euler update at fixed dt: speed first, then heading, then position.
/// Speed is clamped to [0, kMaxSpeed]; reverse motion is not modeled.
inline WorldState step_world(const WorldState& state,
                             const std::map<EntityId, Control>& controls) {
  WorldState next = state;
  for (const auto& [id, ctl] : controls) {
    Entity* e = next.find(id);
    if (e == nullptr) throw MissingEntityError(id);
    if (!e->movable || e->kind != EntityKind::car)
      throw InvalidControlError("entity not a controllable car: " + std::to_string(id));
    if (!std::isfinite(ctl.acceleration) || !std::isfinite(ctl.steering))
      throw InvalidControlError("non-finite control for entity " + std::to_string(id));
    if (std::abs(ctl.acceleration) > kMaxAccel + 1e-9)
      throw InvalidControlError("acceleration magnitude exceeds limit for entity " +
                                std::to_string(id));

    CarKinematics& k = next.car_kinematics.at(id);
    k.acceleration = ctl.acceleration;
    k.steering = ctl.steering;
    k.speed = std::clamp(k.speed + ctl.acceleration * state.dt, 0.0, kMaxSpeed);
    e->heading += ctl.steering * state.dt;
    e->center = e->center + Vec2{std::cos(e->heading), std::sin(e->heading)} * (k.speed * state.dt);
  }
  next.time_step_index = state.time_step_index + 1;
  return next;
}

/// Every intersecting entity pair, ids ascending within a pair and pairs in
/// lexicographic order. Symmetric by construction, never reports (a,a).
inline std::vector<std::pair<EntityId, EntityId>> detect_collisions(const WorldState& state) {
  std::vector<std::pair<EntityId, EntityId>> hits;
  const auto& es = state.entities;
  for (size_t i = 0; i < es.size(); ++i) {
    for (size_t j = i + 1; j < es.size(); ++j) {
      if (rects_overlap(es[i].rect(), es[j].rect())) {
        EntityId a = es[i].id, b = es[j].id;
        if (a > b) std::swap(a, b);
        hits.emplace_back(a, b);
      }
    }
  }
  std::sort(hits.begin(), hits.end());
  return hits;
}

/// Car-involving collisions only; buildings touching sidewalks is scenery.
inline std::vector<std::pair<EntityId, EntityId>> detect_car_collisions(const WorldState& state) {
  std::vector<std::pair<EntityId, EntityId>> hits;
  const auto& es = state.entities;
  for (size_t i = 0; i < es.size(); ++i) {
    for (size_t j = i + 1; j < es.size(); ++j) {
      if (es[i].kind != EntityKind::car && es[j].kind != EntityKind::car) continue;
      if (rects_overlap(es[i].rect(), es[j].rect())) {
        EntityId a = es[i].id, b = es[j].id;
        if (a > b) std::swap(a, b);
        hits.emplace_back(a, b);
      }
    }
  }
  std::sort(hits.begin(), hits.end());
  return hits;
}

inline double entity_distance(const Entity& a, const Entity& b) {
  return rect_distance(a.rect(), b.rect());
}

}  // namespace handoff::world
