#include <catch2/catch_amalgamated.hpp>

#include "handoff/driver.hpp"
#include "handoff/road.hpp"
#include "handoff/rng.hpp"
#include "handoff/tracker.hpp"

using namespace handoff;
using namespace handoff::road;

namespace {

// Brute-force oracle: enumerate all simple paths and take the shortest.
struct BruteGraph {
  int n = 0;
  std::vector<std::array<double, 16>> w;  // adjacency, inf = absent

  explicit BruteGraph(int nodes) : n(nodes) {
    w.assign(size_t(nodes), {});
    for (auto& row : w) row.fill(std::numeric_limits<double>::infinity());
  }
};

double best_path_brute(const BruteGraph& g, int u, int goal, std::vector<bool>& used) {
  if (u == goal) return 0.0;
  used[size_t(u)] = true;
  double best = std::numeric_limits<double>::infinity();
  for (int v = 0; v < g.n; ++v) {
    if (used[size_t(v)] || !std::isfinite(g.w[size_t(u)][size_t(v)])) continue;
    best = std::min(best, g.w[size_t(u)][size_t(v)] + best_path_brute(g, v, goal, used));
  }
  used[size_t(u)] = false;
  return best;
}

RoadNetwork network_from_brute(const BruteGraph& g) {
  // Node i sits at (i, 0); an edge u->v detours through a midpoint placed so
  // its polyline length equals the desired weight (keeps path geometry
  // consistent: consecutive edges share junction waypoints).
  RoadNetwork net;
  for (int i = 0; i < g.n; ++i)
    net.nodes.push_back({i, "n" + std::to_string(i), {double(i), 0.0}, 0.0});
  for (int u = 0; u < g.n; ++u) {
    for (int v = 0; v < g.n; ++v) {
      const double w = g.w[size_t(u)][size_t(v)];
      if (!std::isfinite(w)) continue;
      Edge e;
      e.from = u;
      e.to = v;
      e.kind = TurnKind::straight;
      const Vec2 a{double(u), 0.0};
      const Vec2 b{double(v), 0.0};
      const double base = distance(a, b);
      REQUIRE(w >= base);  // generator guarantees this
      // Isoceles detour of total length w over base `base`.
      const double h = std::sqrt(std::max(0.0, w * w / 4.0 - base * base / 4.0));
      const Vec2 mid{(a.x + b.x) / 2.0, h};
      e.waypoints = {a, mid, b};
      e.length = road::detail::polyline_length(e.waypoints);
      net.edges.push_back(e);
    }
  }
  net.out_edges.assign(size_t(g.n), {});
  for (size_t i = 0; i < net.edges.size(); ++i)
    net.out_edges[size_t(net.edges[i].from)].push_back(int(i));
  return net;
}

double path_length(const Path& p) {
  double len = 0.0;
  for (size_t i = 1; i < p.waypoints.size(); ++i)
    len += distance(p.waypoints[i - 1], p.waypoints[i]);
  return len;
}

}  // namespace

TEST_CASE("turn speed limits match the driving parameter table") {
  REQUIRE(segment_speed_limit(TurnKind::straight) == 13.5);
  REQUIRE(segment_speed_limit(TurnKind::left) == 5.5);
  REQUIRE(segment_speed_limit(TurnKind::right) == 4.2);
}

TEST_CASE("four-way network has 12 legal movements") {
  const RoadNetwork net = build_network(Env::four_way);
  REQUIRE(net.movement_count() == 12);
}

TEST_CASE("t-intersection network has 6 legal movements") {
  const RoadNetwork net = build_network(Env::t_intersection);
  REQUIRE(net.movement_count() == 6);
}

TEST_CASE("every arm carries both an inbound and an outbound lane") {
  for (Env env : {Env::t_intersection, Env::four_way}) {
    const RoadNetwork net = build_network(env);
    for (const auto& arm : env == Env::four_way
                               ? std::vector<std::string>{"west", "east", "south", "north"}
                               : std::vector<std::string>{"west", "east", "south"}) {
      REQUIRE(net.node_by_name.count(arm + "_in") == 1);
      REQUIRE(net.node_by_name.count(arm + "_out") == 1);
      // Opposing lanes sit on the same road, mirrored across the axis.
      const Vec2 in = net.node(arm + "_in").pos;
      const Vec2 out = net.node(arm + "_out").pos;
      REQUIRE_THAT(distance(in, out), Catch::Matchers::WithinAbs(2.0 * net.layout.lane_offset(), 1e-9));
    }
  }
}

TEST_CASE("start equals goal gives a single-waypoint path") {
  const RoadNetwork net = build_network(Env::t_intersection);
  const Path p = shortest_path(net, net.node("west_in").id, net.node("west_in").id);
  REQUIRE(p.waypoints.size() == 1);
  REQUIRE(p.segment_kinds.empty());
  REQUIRE(path_length(p) == 0.0);
}

TEST_CASE("two-node graph returns its only edge") {
  BruteGraph g(2);
  g.w[0][1] = 3.5;
  const RoadNetwork net = network_from_brute(g);
  const Path p = shortest_path(net, 0, 1);
  REQUIRE_THAT(path_length(p), Catch::Matchers::WithinAbs(3.5, 1e-9));
}

TEST_CASE("unreachable goal raises no-path error") {
  BruteGraph g(3);
  g.w[0][1] = 1.0;  // node 2 isolated
  const RoadNetwork net = network_from_brute(g);
  REQUIRE_THROWS_AS(shortest_path(net, 0, 2), NoPathError);
}

TEST_CASE("dijkstra matches exhaustive enumeration on random graphs") {
  Rng rng(97);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 4 + int(rng.uniform_index(7));  // 4..10 nodes
    BruteGraph g(n);
    for (int u = 0; u < n; ++u) {
      for (int v = 0; v < n; ++v) {
        if (u != v && rng.uniform() < 0.4)
          g.w[size_t(u)][size_t(v)] = std::abs(u - v) + rng.uniform(0.1, 8.0);
      }
    }
    const RoadNetwork net = network_from_brute(g);
    std::vector<bool> used(size_t(n), false);
    const double oracle = best_path_brute(g, 0, n - 1, used);
    if (std::isfinite(oracle)) {
      const Path p = shortest_path(net, 0, n - 1);
      REQUIRE_THAT(path_length(p), Catch::Matchers::WithinAbs(oracle, 1e-9));
      REQUIRE(p.waypoints.front() == Vec2{0.0, 0.0});
    } else {
      REQUIRE_THROWS_AS(shortest_path(net, 0, n - 1), NoPathError);
    }
  }
}

TEST_CASE("path endpoints equal start and goal exactly") {
  for (Env env : {Env::t_intersection, Env::four_way}) {
    const RoadNetwork net = build_network(env);
    const Path p = shortest_path(net, "south_in", "west_out");
    REQUIRE(p.waypoints.front().x == net.node("south_in").pos.x);
    REQUIRE(p.waypoints.front().y == net.node("south_in").pos.y);
    REQUIRE(p.waypoints.back().x == net.node("west_out").pos.x);
    REQUIRE(p.waypoints.back().y == net.node("west_out").pos.y);
  }
}

TEST_CASE("straight tracking on the lane keeps steering at zero") {
  const RoadNetwork net = build_network(Env::four_way);
  const PathCursor cursor(shortest_path(net, "west_in", "east_out"));
  PathTracker tracker(&cursor);
  const Vec2 start = cursor.point_at(0.0);
  const double steer = tracker.steer(start, cursor.heading_at(0.0), 5.0);
  REQUIRE_THAT(steer, Catch::Matchers::WithinAbs(0.0, 1e-9));
}

TEST_CASE("left-turn arc commands positive (left) steering throughout") {
  const RoadNetwork net = build_network(Env::t_intersection);
  const PathCursor cursor(shortest_path(net, "south_in", "west_out"));
  // Walk the tracker along the path; geometric sign oracle: the yaw-rate
  // command must be positive wherever the lookahead target is on the arc.
  PathTracker tracker(&cursor);
  const double lookahead = PathTracker::lookahead(5.0);
  bool found_arc = false;
  for (double s = 0.0; s < cursor.length() - 1.0; s += 0.5) {
    const double cmd = tracker.steer(cursor.point_at(s), cursor.heading_at(s), 5.0);
    const bool arc_here = cursor.kind_at(s) == TurnKind::left &&
                          cursor.kind_at(s + lookahead) == TurnKind::left &&
                          // lead-in/out pieces of the turn edge are straight;
                          // require the lookahead target well inside the arc
                          std::abs(std::remainder(cursor.heading_at(s + lookahead) -
                                                      cursor.heading_at(s),
                                                  2.0 * M_PI)) > 0.15;
    if (!arc_here) continue;
    found_arc = true;
    INFO("s = " << s);
    REQUIRE(cmd > 0.0);
  }
  REQUIRE(found_arc);
}

TEST_CASE("tracking-lost error beyond the recovery distance") {
  const RoadNetwork net = build_network(Env::four_way);
  const PathCursor cursor(shortest_path(net, "west_in", "east_out"));
  PathTracker tracker(&cursor);
  const Vec2 start = cursor.point_at(0.0);
  REQUIRE_THROWS_AS(tracker.steer(start + Vec2{0.0, 5.0}, 0.0, 3.0), TrackingLostError);
}

namespace {

/// Closed-loop solo traversal; returns (reached goal within 1 m, max cross
/// track error, steps taken).
struct TraversalResult {
  bool reached = false;
  double max_cte = 0.0;
  long steps = 0;
};

TraversalResult traverse(const PathCursor& cursor) {
  driver::DriverParams params;
  PathTracker tracker(&cursor);
  Vec2 pos = cursor.point_at(0.0);
  double heading = cursor.heading_at(0.0);
  double speed = 0.0;
  TraversalResult result;
  const double dt = 0.1;
  for (long t = 0; t < 5000; ++t) {
    if (distance(pos, cursor.goal()) <= params.goal_threshold) {
      result.reached = true;
      result.steps = t;
      return result;
    }
    const double target = cursor.speed_target(tracker.progress(), params.max_accel);
    const double accel = driver::detail::accel_toward(speed, target, params);
    const double yaw = tracker.steer(pos, heading, speed);
    result.max_cte = std::max(result.max_cte, tracker.cross_track_error(pos));
    speed = std::clamp(speed + accel * dt, 0.0, 13.5);
    heading += yaw * dt;
    pos = pos + Vec2{std::cos(heading), std::sin(heading)} * (speed * dt);
  }
  return result;
}

}  // namespace

TEST_CASE("solo vehicle reaches the goal on every spawn/goal movement") {
  for (Env env : {Env::t_intersection, Env::four_way}) {
    const RoadNetwork net = build_network(env);
    for (const auto& edge : net.edges) {
      if (!net.nodes[size_t(edge.from)].name.ends_with("_entry")) continue;
      // Full route covering this movement: in -> entry -> exit -> out.
      const std::string in_arm =
          net.nodes[size_t(edge.from)].name.substr(0, net.nodes[size_t(edge.from)].name.find('_'));
      const std::string out_arm =
          net.nodes[size_t(edge.to)].name.substr(0, net.nodes[size_t(edge.to)].name.find('_'));
      const PathCursor cursor(shortest_path(net, in_arm + "_in", out_arm + "_out"));
      const TraversalResult r = traverse(cursor);
      INFO(env_name(env) << " movement " << in_arm << " -> " << out_arm);
      REQUIRE(r.reached);
      REQUIRE(r.max_cte <= 0.5);
    }
  }
}

TEST_CASE("nominal episode lengths sit near the calibrated targets") {
  // Arm lengths were chosen so the managed route takes ~165 steps in the
  // T-intersection and ~120 steps in the four-way.
  const RoadNetwork t_net = build_network(Env::t_intersection);
  const TraversalResult t = traverse(PathCursor(shortest_path(t_net, "south_in", "west_out")));
  REQUIRE(t.steps >= 150);
  REQUIRE(t.steps <= 185);

  const RoadNetwork f_net = build_network(Env::four_way);
  const TraversalResult f = traverse(PathCursor(shortest_path(f_net, "south_in", "north_out")));
  REQUIRE(f.steps >= 108);
  REQUIRE(f.steps <= 135);
}

TEST_CASE("path crossing between managed and background routes") {
  const RoadNetwork net = build_network(Env::t_intersection);
  const PathCursor managed(shortest_path(net, "south_in", "west_out"));
  const PathCursor bg(shortest_path(net, "west_in", "east_out"));
  const auto crossing = find_crossing(managed, bg);
  REQUIRE(crossing.has_value());
  // The left-turn arc crosses the eastbound lane at y = -lane_offset.
  REQUIRE_THAT(crossing->point.y, Catch::Matchers::WithinAbs(-1.75, 0.15));
}
