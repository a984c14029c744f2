#include <catch2/catch_amalgamated.hpp>

#include "handoff/driver.hpp"
#include "handoff/road.hpp"
#include "handoff/rng.hpp"

using namespace handoff;
using namespace handoff::driver;

namespace {

// Straight 200 m path along +x on y = 0.
road::PathCursor straight_cursor() {
  road::Path p;
  for (int i = 0; i <= 100; ++i) p.waypoints.push_back({2.0 * i, 0.0});
  p.segment_kinds.assign(p.waypoints.size() - 1, road::TurnKind::straight);
  return road::PathCursor(std::move(p));
}

// Crossing path along +y on x = 60.
road::PathCursor crossing_cursor() {
  road::Path p;
  for (int i = 0; i <= 100; ++i) p.waypoints.push_back({60.0, 2.0 * i - 100.0});
  p.segment_kinds.assign(p.waypoints.size() - 1, road::TurnKind::straight);
  return road::PathCursor(std::move(p));
}

CarView view(world::EntityId id, Vec2 pos, double heading, double speed,
             const road::PathCursor* path, double progress) {
  CarView v;
  v.id = id;
  v.position = pos;
  v.heading = heading;
  v.speed = speed;
  v.path = path;
  v.progress = progress;
  return v;
}

}  // namespace

TEST_CASE("no detected entities means no conflict") {
  const auto own = straight_cursor();
  const CarView self = view(1, {0, 0}, 0.0, 10.0, &own, 0.0);
  const auto a = assess_conflict(self, {}, DriverParams{});
  REQUIRE(a.kind == ConflictKind::none);
}

TEST_CASE("car 8 m ahead in the same lane triggers lead_follow") {
  const auto own = straight_cursor();
  const CarView self = view(1, {0, 0}, 0.0, 10.0, &own, 0.0);
  // 8 m bumper gap: centers 12 m apart with 2 m half lengths.
  const CarView lead = view(2, {12.0, 0}, 0.0, 5.0, nullptr, 0.0);
  const auto a = assess_conflict(self, {lead}, DriverParams{});
  REQUIRE(a.kind == ConflictKind::lead_follow);
  REQUIRE(a.other_id == 2);
  REQUIRE_THAT(a.gap, Catch::Matchers::WithinAbs(8.0, 1e-9));
}

TEST_CASE("crossing paths with coincident arrivals give path_cross") {
  const auto own = straight_cursor();
  const auto other = crossing_cursor();
  // Oracle: the polylines intersect at (60, 0); both cars 40 m out at 10 m/s
  // arrive simultaneously (t = 4 s < 5 s horizon).
  const auto crossing = road::find_crossing(own, other);
  REQUIRE(crossing.has_value());
  REQUIRE_THAT(crossing->point.x, Catch::Matchers::WithinAbs(60.0, 1e-9));
  REQUIRE_THAT(crossing->point.y, Catch::Matchers::WithinAbs(0.0, 1e-9));

  const CarView self = view(1, {20, 0}, 0.0, 10.0, &own, 20.0);
  const CarView bg = view(2, {60, -40}, M_PI / 2, 10.0, &other, 60.0);
  const auto a = assess_conflict(self, {bg}, DriverParams{});
  REQUIRE(a.kind == ConflictKind::path_cross);
  REQUIRE(a.other_id == 2);
  REQUIRE_FALSE(a.has_right_of_way);
}

TEST_CASE("no conflict when the other car clears the crossing first") {
  const auto own = straight_cursor();
  const auto other = crossing_cursor();
  const CarView self = view(1, {0, 0}, 0.0, 10.0, &own, 0.0);  // 6 s out
  const CarView bg = view(2, {60, -10}, M_PI / 2, 12.0, &other, 90.0);  // clears in ~2 s
  const auto a = assess_conflict(self, {bg}, DriverParams{});
  REQUIRE(a.kind == ConflictKind::none);
}

TEST_CASE("clear road accelerates at the limit toward max speed") {
  const auto own = straight_cursor();
  const CarView self = view(1, {0, 0}, 0.0, 10.0, &own, 0.0);
  ConflictAssessment none;
  const double a = decide_acceleration(self, none, 13.5, DriverParams{});
  REQUIRE_THAT(a, Catch::Matchers::WithinAbs(1.2, 1e-12));
}

TEST_CASE("acceleration lands exactly on the target speed") {
  const auto own = straight_cursor();
  const CarView self = view(1, {0, 0}, 0.0, 13.45, &own, 0.0);
  ConflictAssessment none;
  const double a = decide_acceleration(self, none, 13.5, DriverParams{});
  // One step at this command reaches 13.5 without overshoot.
  REQUIRE_THAT(13.45 + a * 0.1, Catch::Matchers::WithinAbs(13.5, 1e-9));
}

TEST_CASE("lead_follow with closing speed commands deceleration >= 0.2") {
  const auto own = straight_cursor();
  const CarView self = view(1, {0, 0}, 0.0, 12.0, &own, 0.0);
  const CarView lead = view(2, {12.0, 0}, 0.0, 5.0, nullptr, 0.0);
  const auto assessment = assess_conflict(self, {lead}, DriverParams{});
  REQUIRE(assessment.kind == ConflictKind::lead_follow);
  const double a = decide_acceleration(self, assessment, 13.5, DriverParams{});
  REQUIRE(a < 0.0);
  REQUIRE(std::abs(a) >= 0.2);
  REQUIRE(std::abs(a) <= 1.2);
}

TEST_CASE("stopped vehicle with persisting conflict holds at zero") {
  const auto own = straight_cursor();
  const auto other = crossing_cursor();
  const CarView self = view(1, {50, 0}, 0.0, 0.0, &own, 50.0);
  ConflictAssessment a;
  a.kind = ConflictKind::path_cross;
  a.other_id = 2;
  a.distance_to_entry = 5.0;
  const double cmd = decide_acceleration(self, a, 13.5, DriverParams{});
  REQUIRE(cmd == 0.0);
}

TEST_CASE("every command stays within the acceleration envelope") {
  Rng rng(123);
  const auto own = straight_cursor();
  const auto other = crossing_cursor();
  for (int i = 0; i < 2000; ++i) {
    const double v = rng.uniform(0.0, 13.5);
    const CarView self = view(1, {rng.uniform(0, 100), 0}, 0.0, v, &own, rng.uniform(0, 100));
    std::vector<CarView> others;
    if (rng.bernoulli(0.7)) {
      others.push_back(view(2, {rng.uniform(0, 120), rng.uniform(-1.0, 1.0)}, 0.0,
                            rng.uniform(0.0, 13.5), nullptr, 0.0));
    }
    if (rng.bernoulli(0.7)) {
      others.push_back(view(3, {60, rng.uniform(-80, 20)}, M_PI / 2, rng.uniform(0.0, 13.5),
                            &other, rng.uniform(0.0, 120.0)));
    }
    const auto assessment = assess_conflict(self, others, DriverParams{});
    const double a = decide_acceleration(self, assessment, rng.uniform(0.0, 13.5),
                                         DriverParams{});
    REQUIRE(a <= 1.2 + 1e-12);
    REQUIRE(a >= -1.2 - 1e-12);
    if (a < 0.0) REQUIRE(std::abs(a) >= 0.2 - 1e-12);
  }
}

TEST_CASE("decision depends only on detected entities") {
  const auto own = straight_cursor();
  const auto other = crossing_cursor();
  const CarView self = view(1, {20, 0}, 0.0, 10.0, &own, 20.0);
  const CarView undetected = view(2, {60, -40}, M_PI / 2, 10.0, &other, 60.0);
  // Undetected conflict car absent from the list: command must match the
  // empty-world command exactly.
  const auto with_empty = assess_conflict(self, {}, DriverParams{});
  const double a_empty = decide_acceleration(self, with_empty, 13.5, DriverParams{});
  const auto still_empty = assess_conflict(self, {}, DriverParams{});
  const double a_same = decide_acceleration(self, still_empty, 13.5, DriverParams{});
  REQUIRE(a_empty == a_same);
  // Once detected, the command changes (the conflict is real).
  const auto with_detected = assess_conflict(self, {undetected}, DriverParams{});
  REQUIRE(with_detected.kind == ConflictKind::path_cross);
}

TEST_CASE("right of way: lowest id proceeds") {
  const auto row = assign_right_of_way({3, 7});
  REQUIRE(row.at(3));
  REQUIRE_FALSE(row.at(7));
}

TEST_CASE("right of way: single car proceeds") {
  const auto row = assign_right_of_way({5});
  REQUIRE(row.at(5));
}

TEST_CASE("right of way: exactly one winner in any group") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<world::EntityId> group;
    const int n = 2 + int(rng.uniform_index(4));
    for (int i = 0; i < n; ++i) group.push_back(int(rng.uniform_index(100)));
    std::sort(group.begin(), group.end());
    group.erase(std::unique(group.begin(), group.end()), group.end());
    const auto row = assign_right_of_way(group);
    int winners = 0;
    for (const auto& [id, w] : row) winners += w;
    REQUIRE(winners == 1);
  }
}

TEST_CASE("background observers do not see the managed vehicle") {
  const std::vector<world::EntityId> all{1, 2, 3};
  const auto bg = background_visibility_filter(ObserverRole::background, all, 1);
  REQUIRE(bg == std::vector<world::EntityId>{2, 3});
  const auto managed = background_visibility_filter(ObserverRole::managed, all, 1);
  REQUIRE(managed == all);
  REQUIRE(background_visibility_filter(ObserverRole::background, {}, 1).empty());
}

TEST_CASE("yield then resume: no deadlock against a crossing car") {
  // Close-quarters crossing: the self car must brake, the other (with right
  // of way) proceeds; after it clears, self accelerates again.
  const auto own = straight_cursor();
  const auto other = crossing_cursor();
  double self_s = 40.0, self_v = 8.0;
  double bg_s = 85.0, bg_v = 8.0;  // crossing at s_b = 100
  const double dt = 0.1;
  bool braked = false, resumed = false;
  for (int t = 0; t < 400; ++t) {
    const CarView self = view(1, own.point_at(self_s), 0.0, self_v, &own, self_s);
    const CarView bg = view(2, other.point_at(bg_s), M_PI / 2, bg_v, &other, bg_s);
    const auto assessment = assess_conflict(self, {bg}, DriverParams{});
    const double a = decide_acceleration(self, assessment, 13.5, DriverParams{});
    if (a < 0.0) braked = true;
    if (braked && a > 0.0) resumed = true;
    self_v = std::clamp(self_v + a * dt, 0.0, 13.5);
    self_s += self_v * dt;
    bg_v = std::clamp(bg_v + 1.2 * dt, 0.0, 13.5);
    bg_s += bg_v * dt;  // right-of-way car never yields
  }
  REQUIRE(braked);
  REQUIRE(resumed);
  REQUIRE(self_s > 100.0);  // self eventually crosses too
}
