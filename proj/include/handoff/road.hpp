#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "handoff/geometry.hpp"
#include "handoff/world.hpp"

namespace handoff::road {

enum class Env { t_intersection, four_way };

inline const char* env_name(Env e) {
  return e == Env::t_intersection ? "t_intersection" : "four_way";
}

enum class TurnKind { straight, left, right };

/// Per-segment speed caps (m/s).
inline double segment_speed_limit(TurnKind kind) {
  switch (kind) {
    case TurnKind::straight: return 13.5;
    case TurnKind::left: return 5.5;
    case TurnKind::right: return 4.2;
  }
  return 13.5;
}

/// Road geometry knobs. Arm lengths default so that the nominal managed
/// episode lands near 165 steps (T) and 120 steps (four-way).
struct Layout {
  double lane_width = 3.5;
  double sidewalk_width = 2.0;
  double arm_length = 55.0;       // intersection center to road end
  double spawn_margin = 4.0;      // path endpoints inset from the road end
  double approach_setback = 8.0;  // entry/exit nodes this far from the center
  double left_turn_radius = 7.0;
  double right_turn_radius = 5.0;

  double lane_offset() const { return lane_width / 2.0; }
  double half_road() const { return lane_width; }  // two lanes
};

inline Layout default_layout(Env env) {
  Layout l;
  l.arm_length = env == Env::t_intersection ? 55.0 : 47.0;
  return l;
}

struct Node {
  int id = 0;
  std::string name;
  Vec2 pos;
  double direction = 0.0;  // lane heading at the node
};

struct Edge {
  int from = 0;
  int to = 0;
  TurnKind kind = TurnKind::straight;
  double length = 0.0;
  std::vector<Vec2> waypoints;  // includes both endpoints
};

struct RoadNetwork {
  Env env = Env::t_intersection;
  Layout layout;
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  std::map<std::string, int> node_by_name;
  std::vector<std::vector<int>> out_edges;  // node id -> edge indices

  const Node& node(const std::string& name) const {
    auto it = node_by_name.find(name);
    if (it == node_by_name.end()) throw std::invalid_argument("unknown node: " + name);
    return nodes[size_t(it->second)];
  }

  int movement_count() const {
    int n = 0;
    for (const auto& e : edges)
      if (nodes[size_t(e.from)].name.ends_with("_entry")) ++n;
    return n;
  }
};

struct Path {
  std::vector<Vec2> waypoints;
  std::vector<TurnKind> segment_kinds;  // size = waypoints.size() - 1
};

struct NoPathError : std::runtime_error {
  NoPathError(const std::string& a, const std::string& b)
      : std::runtime_error("no path from " + a + " to " + b) {}
};

namespace detail {

inline std::vector<Vec2> straight_waypoints(Vec2 a, Vec2 b, double spacing = 2.0) {
  std::vector<Vec2> pts;
  const double len = distance(a, b);
  const int n = std::max(1, int(std::ceil(len / spacing)));
  for (int i = 0; i <= n; ++i) pts.push_back(a + (b - a) * (double(i) / n));
  return pts;
}

/// Quarter-circle arc from `a` to `b` around `center`, 1 m waypoint spacing.
inline std::vector<Vec2> arc_waypoints(Vec2 center, Vec2 a, Vec2 b, double spacing = 1.0) {
  const double r = distance(center, a);
  double a0 = std::atan2(a.y - center.y, a.x - center.x);
  double a1 = std::atan2(b.y - center.y, b.x - center.x);
  double sweep = a1 - a0;
  while (sweep > M_PI) sweep -= 2.0 * M_PI;
  while (sweep < -M_PI) sweep += 2.0 * M_PI;
  const double arc_len = std::abs(sweep) * r;
  const int n = std::max(2, int(std::ceil(arc_len / spacing)));
  std::vector<Vec2> pts;
  for (int i = 0; i <= n; ++i) {
    const double ang = a0 + sweep * (double(i) / n);
    pts.push_back(center + Vec2{std::cos(ang), std::sin(ang)} * r);
  }
  return pts;
}

inline double polyline_length(const std::vector<Vec2>& pts) {
  double len = 0.0;
  for (size_t i = 1; i < pts.size(); ++i) len += distance(pts[i - 1], pts[i]);
  return len;
}

struct Approach {
  std::string name;   // arm name: west, east, south, north
  double heading;     // inbound lane heading
};

}  // namespace detail

/// Build the two-lane directed road graph for an environment. Every arm has
/// one inbound and one outbound lane ("_in" -> "_entry" approach nodes,
/// "_exit" -> "_out" on the way out); entry->exit edges encode the legal
/// intersection movements with quarter-circle turn arcs.
inline RoadNetwork build_network(Env env, const Layout& layout) {
  RoadNetwork net;
  net.env = env;
  net.layout = layout;

  const double off = layout.lane_offset();
  const double box = layout.approach_setback;
  const double ends = layout.arm_length - layout.spawn_margin;

  // Arm direction = heading of the INBOUND lane (pointing at the intersection).
  std::vector<detail::Approach> arms;
  arms.push_back({"west", 0.0});          // eastbound traffic enters from west
  arms.push_back({"east", M_PI});         // westbound from east
  arms.push_back({"south", M_PI / 2.0});  // northbound from south
  if (env == Env::four_way) arms.push_back({"north", -M_PI / 2.0});

  const auto add_node = [&net](const std::string& name, Vec2 pos, double dir) {
    const int id = int(net.nodes.size());
    net.nodes.push_back({id, name, pos, dir});
    net.node_by_name[name] = id;
    return id;
  };

  for (const auto& arm : arms) {
    const Vec2 dir{std::cos(arm.heading), std::sin(arm.heading)};
    const Vec2 right = {dir.y, -dir.x};  // right-hand side of inbound travel
    const Vec2 center_far = dir * -ends;
    // Inbound lane: offset to the right of travel direction.
    const Vec2 in_far = center_far + right * off;
    const Vec2 in_near = dir * -box + right * off;
    // Outbound lane mirrors it.
    const Vec2 out_near = dir * -box - right * off;
    const Vec2 out_far = center_far - right * off;
    add_node(arm.name + "_in", in_far, arm.heading);
    add_node(arm.name + "_entry", in_near, arm.heading);
    add_node(arm.name + "_exit", out_near, arm.heading + M_PI);
    add_node(arm.name + "_out", out_far, arm.heading + M_PI);
  }

  const auto add_edge = [&net](int from, int to, TurnKind kind, std::vector<Vec2> wps) {
    Edge e;
    e.from = from;
    e.to = to;
    e.kind = kind;
    // Degenerate lead-in/out pieces can duplicate junction points.
    for (const Vec2& p : wps) {
      if (e.waypoints.empty() || distance(e.waypoints.back(), p) > 1e-9)
        e.waypoints.push_back(p);
    }
    e.length = detail::polyline_length(e.waypoints);
    net.edges.push_back(std::move(e));
  };

  for (const auto& arm : arms) {
    const Node& in = net.node(arm.name + "_in");
    const Node& entry = net.node(arm.name + "_entry");
    const Node& exit = net.node(arm.name + "_exit");
    const Node& out = net.node(arm.name + "_out");
    add_edge(in.id, entry.id, TurnKind::straight,
             detail::straight_waypoints(in.pos, entry.pos));
    add_edge(exit.id, out.id, TurnKind::straight,
             detail::straight_waypoints(exit.pos, out.pos));
  }

  // Intersection movements. Turn direction is relative to inbound heading:
  // left = +90°, right = -90°, straight crosses to the opposite arm.
  const auto arm_by_heading = [&arms](double heading) -> const detail::Approach* {
    for (const auto& a : arms) {
      double d = std::remainder(a.heading - heading, 2.0 * M_PI);
      if (std::abs(d) < 1e-6) return &a;
    }
    return nullptr;
  };

  for (const auto& arm : arms) {
    const Node& entry = net.node(arm.name + "_entry");
    struct Move {
      double rel;
      TurnKind kind;
    };
    // Exit arm's inbound heading is opposite to the outbound travel direction.
    const Move moves[3] = {{0.0, TurnKind::straight},
                           {M_PI / 2.0, TurnKind::left},
                           {-M_PI / 2.0, TurnKind::right}};
    for (const Move& mv : moves) {
      const double out_heading = arm.heading + mv.rel;       // travel direction out
      const detail::Approach* exit_arm = arm_by_heading(out_heading + M_PI);
      if (exit_arm == nullptr || exit_arm->name == arm.name) continue;
      const Node& exit = net.node(exit_arm->name + "_exit");
      if (mv.kind == TurnKind::straight) {
        add_edge(entry.id, exit.id, TurnKind::straight,
                 detail::straight_waypoints(entry.pos, exit.pos));
      } else {
        // Quarter circle tangent to both lane centerlines, with straight
        // lead-in/out pieces covering the rest of the setback.
        const Vec2 in_dir{std::cos(arm.heading), std::sin(arm.heading)};
        const Vec2 out_dir{std::cos(out_heading), std::sin(out_heading)};
        const double radius = mv.kind == TurnKind::left ? layout.left_turn_radius
                                                        : layout.right_turn_radius;
        // Crossing of the inbound and outbound lane lines.
        // entry.pos + t*in_dir = exit.pos - u*out_dir
        const Vec2 rel = exit.pos - entry.pos;
        const double denom = in_dir.cross(out_dir);
        const double t_cross = rel.cross(out_dir) / denom;
        const Vec2 crossing = entry.pos + in_dir * t_cross;
        const double d_in = t_cross;
        const double d_out = (exit.pos - crossing).dot(out_dir);
        const double lead_in = d_in - radius;
        const double lead_out = d_out - radius;
        if (lead_in < -1e-9 || lead_out < -1e-9)
          throw std::invalid_argument("layout: turn radius exceeds approach setback");
        const Vec2 arc_start = entry.pos + in_dir * lead_in;
        const Vec2 arc_end = exit.pos - out_dir * lead_out;
        const Vec2 to_center = mv.kind == TurnKind::left ? in_dir.perp() : in_dir.perp() * -1.0;
        const Vec2 center = arc_start + to_center * radius;

        std::vector<Vec2> wps = detail::straight_waypoints(entry.pos, arc_start);
        const auto arc = detail::arc_waypoints(center, arc_start, arc_end);
        wps.insert(wps.end(), arc.begin() + 1, arc.end());
        const auto tail = detail::straight_waypoints(arc_end, exit.pos);
        wps.insert(wps.end(), tail.begin() + 1, tail.end());
        add_edge(entry.id, exit.id, mv.kind, std::move(wps));
      }
    }
  }

  net.out_edges.assign(net.nodes.size(), {});
  for (size_t i = 0; i < net.edges.size(); ++i)
    net.out_edges[size_t(net.edges[i].from)].push_back(int(i));
  return net;
}

inline RoadNetwork build_network(Env env) { return build_network(env, default_layout(env)); }

/// Dijkstra with deterministic tie-breaking (lower predecessor node id wins
/// on equal distance).
inline Path shortest_path(const RoadNetwork& net, int start, int goal) {
  if (start < 0 || size_t(start) >= net.nodes.size() || goal < 0 ||
      size_t(goal) >= net.nodes.size())
    throw std::invalid_argument("shortest_path: node id out of range");
  if (start == goal) {
    Path p;
    p.waypoints.push_back(net.nodes[size_t(start)].pos);
    return p;
  }

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(net.nodes.size(), inf);
  std::vector<int> pred_edge(net.nodes.size(), -1);
  std::vector<int> pred_node(net.nodes.size(), -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist[size_t(start)] = 0.0;
  heap.push({0.0, start});

  while (!heap.empty()) {
    const auto [d, u] = heap.top();
    heap.pop();
    if (d > dist[size_t(u)] + 1e-12) continue;
    for (int ei : net.out_edges[size_t(u)]) {
      const Edge& e = net.edges[size_t(ei)];
      const double nd = d + e.length;
      const bool better = nd < dist[size_t(e.to)] - 1e-12;
      const bool tie = std::abs(nd - dist[size_t(e.to)]) <= 1e-12 && u < pred_node[size_t(e.to)];
      if (better || tie) {
        dist[size_t(e.to)] = nd;
        pred_edge[size_t(e.to)] = ei;
        pred_node[size_t(e.to)] = u;
        heap.push({nd, e.to});
      }
    }
  }

  if (pred_edge[size_t(goal)] < 0)
    throw NoPathError(net.nodes[size_t(start)].name, net.nodes[size_t(goal)].name);

  std::vector<int> edge_chain;
  for (int v = goal; v != start; v = net.edges[size_t(pred_edge[size_t(v)])].from)
    edge_chain.push_back(pred_edge[size_t(v)]);
  std::reverse(edge_chain.begin(), edge_chain.end());

  Path path;
  for (int ei : edge_chain) {
    const Edge& e = net.edges[size_t(ei)];
    const size_t first = path.waypoints.empty() ? 0 : 1;  // skip duplicated junction
    for (size_t i = first; i < e.waypoints.size(); ++i) {
      path.waypoints.push_back(e.waypoints[i]);
      if (path.waypoints.size() > 1) path.segment_kinds.push_back(e.kind);
    }
  }
  return path;
}

inline Path shortest_path(const RoadNetwork& net, const std::string& start,
                          const std::string& goal) {
  return shortest_path(net, net.node(start).id, net.node(goal).id);
}

/// Arc-length parametrization of a Path plus the queries the tracker and
/// driver need. Immutable after construction.
class PathCursor {
 public:
  explicit PathCursor(Path path) : path_(std::move(path)) {
    cum_.resize(path_.waypoints.size(), 0.0);
    for (size_t i = 1; i < path_.waypoints.size(); ++i)
      cum_[i] = cum_[i - 1] + distance(path_.waypoints[i - 1], path_.waypoints[i]);
  }

  const Path& path() const { return path_; }
  double length() const { return cum_.empty() ? 0.0 : cum_.back(); }
  Vec2 start() const { return path_.waypoints.front(); }
  Vec2 goal() const { return path_.waypoints.back(); }

  Vec2 point_at(double s) const {
    if (path_.waypoints.size() == 1) return path_.waypoints[0];
    s = std::clamp(s, 0.0, length());
    const size_t i = segment_index(s);
    const double seg = cum_[i + 1] - cum_[i];
    const double t = seg > 0.0 ? (s - cum_[i]) / seg : 0.0;
    return path_.waypoints[i] + (path_.waypoints[i + 1] - path_.waypoints[i]) * t;
  }

  double heading_at(double s) const {
    if (path_.waypoints.size() < 2) return 0.0;
    const size_t i = segment_index(std::clamp(s, 0.0, length()));
    const Vec2 d = path_.waypoints[i + 1] - path_.waypoints[i];
    return std::atan2(d.y, d.x);
  }

  TurnKind kind_at(double s) const {
    if (path_.segment_kinds.empty()) return TurnKind::straight;
    return path_.segment_kinds[segment_index(std::clamp(s, 0.0, length()))];
  }

  /// Closest arc length to `p`, searched within [s_min, s_max].
  double project(Vec2 p, double s_min = 0.0,
                 double s_max = std::numeric_limits<double>::max()) const {
    if (path_.waypoints.size() < 2) return 0.0;
    double best_d2 = std::numeric_limits<double>::max();
    double best_s = std::clamp(s_min, 0.0, length());
    for (size_t i = 0; i + 1 < path_.waypoints.size(); ++i) {
      if (cum_[i + 1] < s_min || cum_[i] > s_max) continue;
      const Vec2 a = path_.waypoints[i];
      const Vec2 ab = path_.waypoints[i + 1] - a;
      const double len2 = ab.norm2();
      double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
      const Vec2 q = a + ab * t;
      const double d2 = (p - q).norm2();
      if (d2 < best_d2 - 1e-12) {
        best_d2 = d2;
        best_s = cum_[i] + t * std::sqrt(len2);
      }
    }
    return std::clamp(best_s, s_min, std::min(s_max, length()));
  }

  double cross_track(Vec2 p, double s) const { return distance(p, point_at(s)); }

  /// Lowest speed limit over [s, s+window].
  double limit_ahead(double s, double window) const {
    double lim = segment_speed_limit(kind_at(s));
    if (path_.waypoints.size() < 2) return lim;
    for (size_t i = 0; i + 1 < path_.waypoints.size(); ++i) {
      if (cum_[i + 1] < s) continue;
      if (cum_[i] > s + window) break;
      lim = std::min(lim, segment_speed_limit(path_.segment_kinds[i]));
    }
    return lim;
  }

  /// Speed target at s honoring upcoming turn limits under max deceleration.
  double speed_target(double s, double max_decel) const {
    double target = segment_speed_limit(kind_at(s));
    if (path_.waypoints.size() < 2) return target;
    for (size_t i = 0; i + 1 < path_.waypoints.size(); ++i) {
      if (cum_[i + 1] <= s) continue;
      const double lim = segment_speed_limit(path_.segment_kinds[i]);
      const double gap = std::max(0.0, cum_[i] - s);
      // Highest current speed that still reaches `lim` after `gap` meters.
      const double v = std::sqrt(lim * lim + 2.0 * max_decel * gap);
      target = std::min(target, v);
      if (gap > 100.0) break;
    }
    return target;
  }

 private:
  size_t segment_index(double s) const {
    size_t lo = 0, hi = cum_.size() - 1;
    while (lo + 1 < hi) {
      const size_t mid = (lo + hi) / 2;
      if (cum_[mid] <= s)
        lo = mid;
      else
        hi = mid;
    }
    return lo;
  }

  Path path_;
  std::vector<double> cum_;
};

/// First geometric crossing of two path polylines that is a genuine
/// transversal conflict (not a shared-lane merge), as arc lengths.
struct PathCrossing {
  double s_a = 0.0;
  double s_b = 0.0;
  Vec2 point;
};

inline std::optional<PathCrossing> find_crossing(const PathCursor& a, const PathCursor& b) {
  const auto& wa = a.path().waypoints;
  const auto& wb = b.path().waypoints;
  double sa = 0.0;
  for (size_t i = 0; i + 1 < wa.size(); ++i) {
    const double seg_a = distance(wa[i], wa[i + 1]);
    double sb = 0.0;
    for (size_t j = 0; j + 1 < wb.size(); ++j) {
      const double seg_b = distance(wb[j], wb[j + 1]);
      Vec2 hit;
      if (segment_intersection(wa[i], wa[i + 1], wb[j], wb[j + 1], &hit)) {
        // Ignore near-parallel grazing (merging lanes).
        const Vec2 da = (wa[i + 1] - wa[i]).normalized();
        const Vec2 db = (wb[j + 1] - wb[j]).normalized();
        if (std::abs(da.cross(db)) > 0.05) {
          PathCrossing c;
          c.s_a = sa + distance(wa[i], hit);
          c.s_b = sb + distance(wb[j], hit);
          c.point = hit;
          return c;
        }
      }
      sb += seg_b;
    }
    sa += seg_a;
  }
  return std::nullopt;
}

/// Static scenery for an environment: buildings fill the off-road quadrants,
/// sidewalk strips run along every road edge. Entity ids start at `first_id`.
inline std::vector<world::Entity> static_entities(const RoadNetwork& net, int first_id = 1000) {
  using world::Entity;
  using world::EntityKind;
  std::vector<Entity> out;
  const Layout& L = net.layout;
  const double R = L.half_road();           // road half width
  const double S = R + L.sidewalk_width;    // sidewalk outer edge
  const double A = L.arm_length;
  int id = first_id;

  const auto add_rect = [&out, &id](EntityKind kind, double x0, double y0, double x1, double y1) {
    Entity e;
    e.id = id++;
    e.kind = kind;
    e.center = {(x0 + x1) / 2.0, (y0 + y1) / 2.0};
    e.heading = 0.0;
    e.half_extent = {(x1 - x0) / 2.0, (y1 - y0) / 2.0};
    e.movable = false;
    out.push_back(e);
  };

  const bool has_north = net.env == Env::four_way;
  // Sidewalks hug the road edges; buildings fill the rest of each quadrant.
  // South-west / south-east quadrants exist in both environments.
  add_rect(EntityKind::sidewalk, -A, -S, -R, -R);  // SW horizontal strip
  add_rect(EntityKind::sidewalk, -S, -A, -R, -S);  // SW vertical strip
  add_rect(EntityKind::building, -A, -A, -S, -S);  // SW block
  add_rect(EntityKind::sidewalk, R, -S, A, -R);    // SE horizontal
  add_rect(EntityKind::sidewalk, R, -A, S, -S);    // SE vertical
  add_rect(EntityKind::building, S, -A, A, -S);    // SE block
  if (has_north) {
    add_rect(EntityKind::sidewalk, -A, R, -R, S);
    add_rect(EntityKind::sidewalk, -S, S, -R, A);
    add_rect(EntityKind::building, -A, S, -S, A);
    add_rect(EntityKind::sidewalk, R, R, A, S);
    add_rect(EntityKind::sidewalk, R, S, S, A);
    add_rect(EntityKind::building, S, S, A, A);
  } else {
    // T-intersection: unbroken strip north of the main road.
    add_rect(EntityKind::sidewalk, -A, R, A, S);
    add_rect(EntityKind::building, -A, S, A, A);
  }
  return out;
}

}  // namespace handoff::road
