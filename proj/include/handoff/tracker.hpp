#pragma once

#include <cmath>
#include <stdexcept>

#include "handoff/road.hpp"
#include "handoff/world.hpp"

namespace handoff::road {

struct TrackingLostError : std::runtime_error {
  TrackingLostError() : std::runtime_error("vehicle beyond recovery distance from path") {}
};

/// Pure-pursuit lateral controller. Produces a yaw-rate command that steers
/// the car onto the path; drivers only ever decide acceleration.
class PathTracker {
 public:
  static constexpr double kMinLookahead = 2.0;     // m
  static constexpr double kMaxLookahead = 4.5;     // m
  static constexpr double kRecoveryDistance = 3.0; // m, beyond this tracking is lost
  static constexpr double kMaxYawRate = 2.2;       // rad/s safety clamp

  explicit PathTracker(const PathCursor* cursor, double start_progress = 0.0)
      : cursor_(cursor), progress_(start_progress) {}

  double progress() const { return progress_; }

  /// Re-seat the projection window (e.g. spawning mid-path).
  void reset_progress(double s) { progress_ = s; }

  /// Lookahead grows with speed so tight arcs are not cut at turn speeds.
  static double lookahead(double speed) {
    return std::clamp(1.0 + 0.35 * speed, kMinLookahead, kMaxLookahead);
  }

  /// Advance the progress estimate and return the yaw-rate command.
  double steer(Vec2 position, double heading, double speed) {
    // Monotone projection window keeps progress from snapping across the map.
    progress_ = cursor_->project(position, progress_ - 1.0, progress_ + 8.0);
    const double cte = cursor_->cross_track(position, progress_);
    if (cte > kRecoveryDistance) throw TrackingLostError();

    const Vec2 target = cursor_->point_at(progress_ + lookahead(speed));
    const Vec2 to_target = target - position;
    const double dist = to_target.norm();
    if (dist < 1e-6) return 0.0;
    // Angle from the heading axis to the lookahead point.
    const double alpha =
        std::remainder(std::atan2(to_target.y, to_target.x) - heading, 2.0 * M_PI);
    const double curvature = 2.0 * std::sin(alpha) / dist;
    const double yaw_rate = speed * curvature;
    return std::clamp(yaw_rate, -kMaxYawRate, kMaxYawRate);
  }

  double cross_track_error(Vec2 position) const {
    return cursor_->cross_track(position, cursor_->project(position, progress_ - 1.0,
                                                           progress_ + 8.0));
  }

 private:
  const PathCursor* cursor_;
  double progress_ = 0.0;
};

}  // namespace handoff::road
