#include <catch2/catch_amalgamated.hpp>

#include "handoff/render.hpp"
#include "handoff/rng.hpp"
#include "handoff/world.hpp"

using namespace handoff;
using namespace handoff::world;

namespace {

WorldState one_car_world(Vec2 pos, double heading, double speed) {
  WorldState s;
  Entity car;
  car.id = 1;
  car.kind = EntityKind::car;
  car.center = pos;
  car.heading = heading;
  car.half_extent = {2.0, 1.0};
  car.color = {200, 40, 40};
  car.movable = true;
  s.entities.push_back(car);
  s.car_kinematics[1] = {speed, 0.0, 0.0};
  return s;
}

}  // namespace

TEST_CASE("euler step advances the car by speed * dt") {
  WorldState s = one_car_world({0, 0}, 0.0, 10.0);
  const WorldState next = step_world(s, {{1, {0.0, 0.0}}});
  REQUIRE_THAT(next.find(1)->center.x, Catch::Matchers::WithinAbs(1.0, 1e-12));
  REQUIRE_THAT(next.find(1)->center.y, Catch::Matchers::WithinAbs(0.0, 1e-12));
  REQUIRE(next.time_step_index == 1);
}

TEST_CASE("speed clamps at the maximum driving speed") {
  WorldState s = one_car_world({0, 0}, 0.0, 13.5);
  const WorldState next = step_world(s, {{1, {1.2, 0.0}}});
  REQUIRE(next.car_kinematics.at(1).speed == 13.5);
}

TEST_CASE("deceleration integrates exactly") {
  WorldState s = one_car_world({0, 0}, 0.0, 5.0);
  const WorldState next = step_world(s, {{1, {-0.2, 0.0}}});
  REQUIRE_THAT(next.car_kinematics.at(1).speed, Catch::Matchers::WithinAbs(4.98, 1e-12));
}

TEST_CASE("speed never goes negative") {
  WorldState s = one_car_world({0, 0}, 0.0, 0.05);
  const WorldState next = step_world(s, {{1, {-1.2, 0.0}}});
  REQUIRE(next.car_kinematics.at(1).speed == 0.0);
}

TEST_CASE("speed stays in range under random control sequences") {
  Rng rng(11);
  WorldState s = one_car_world({0, 0}, 0.0, 5.0);
  for (int i = 0; i < 500; ++i) {
    const double a = rng.uniform(-1.2, 1.2);
    const double y = rng.uniform(-1.0, 1.0);
    s = step_world(s, {{1, {a, y}}});
    const double v = s.car_kinematics.at(1).speed;
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 13.5);
  }
}

TEST_CASE("unknown entity raises missing-entity error") {
  WorldState s = one_car_world({0, 0}, 0.0, 1.0);
  REQUIRE_THROWS_AS(step_world(s, {{99, {0.0, 0.0}}}), MissingEntityError);
}

TEST_CASE("non-finite control raises invalid-control error") {
  WorldState s = one_car_world({0, 0}, 0.0, 1.0);
  REQUIRE_THROWS_AS(step_world(s, {{1, {std::nan(""), 0.0}}}), InvalidControlError);
  REQUIRE_THROWS_AS(step_world(s, {{1, {5.0, 0.0}}}), InvalidControlError);
}

TEST_CASE("step_world is deterministic") {
  WorldState s = one_car_world({1, 2}, 0.7, 6.0);
  const WorldState a = step_world(s, {{1, {0.5, 0.2}}});
  const WorldState b = step_world(s, {{1, {0.5, 0.2}}});
  REQUIRE(a.find(1)->center.x == b.find(1)->center.x);
  REQUIRE(a.find(1)->center.y == b.find(1)->center.y);
  REQUIRE(a.find(1)->heading == b.find(1)->heading);
}

TEST_CASE("collision detection on simple configurations") {
  WorldState s;
  Entity a, b;
  a.id = 1;
  a.center = {0, 0};
  a.half_extent = {0.5, 0.5};
  b.id = 2;
  b.center = {10, 0};
  b.half_extent = {0.5, 0.5};
  s.entities = {a, b};
  REQUIRE(detect_collisions(s).empty());

  s.entities[1].center = {0, 0};  // full overlap
  const auto hits = detect_collisions(s);
  REQUIRE(hits.size() == 1);
  REQUIRE(hits[0] == std::pair<EntityId, EntityId>{1, 2});
}

TEST_CASE("distance zero iff colliding") {
  Rng rng(5);
  for (int i = 0; i < 300; ++i) {
    Entity a, b;
    a.id = 1;
    a.center = {rng.uniform(-4, 4), rng.uniform(-4, 4)};
    a.heading = rng.uniform(0, 2 * M_PI);
    a.half_extent = {rng.uniform(0.3, 2.0), rng.uniform(0.3, 2.0)};
    b.id = 2;
    b.center = {rng.uniform(-4, 4), rng.uniform(-4, 4)};
    b.heading = rng.uniform(0, 2 * M_PI);
    b.half_extent = {rng.uniform(0.3, 2.0), rng.uniform(0.3, 2.0)};
    WorldState s;
    s.entities = {a, b};
    const bool colliding = !detect_collisions(s).empty();
    REQUIRE((entity_distance(a, b) == 0.0) == colliding);
    REQUIRE_THAT(entity_distance(a, b), Catch::Matchers::WithinAbs(entity_distance(b, a), 1e-9));
  }
}

TEST_CASE("empty world renders uniform background") {
  WorldState s;
  const Image img = render_topdown(s, {{-10, -10}, {10, 10}}, 40);
  for (const Rgb& p : img.pixels()) REQUIRE(p == kRoadColor);
}

TEST_CASE("red car rasterizes exactly onto its footprint") {
  WorldState s = one_car_world({0, 0}, 0.3, 0.0);
  const Viewport vp{{-10, -10}, {10, 10}};
  const int width = 200;  // 0.1 m/px
  const Image img = render_topdown(s, vp, width);
  const OrientedRect rect = s.entities[0].rect();
  const double mpp = 20.0 / width;
  // Per-pixel geometric oracle: a pixel is car-colored iff its center lies
  // inside the oriented rectangle.
  for (int py = 0; py < img.height(); ++py) {
    for (int px = 0; px < img.width(); ++px) {
      const Vec2 w{vp.min.x + (px + 0.5) * mpp, vp.max.y - (py + 0.5) * mpp};
      const bool inside = rect.contains(w);
      const bool painted = img.at(px, py) == s.entities[0].color;
      REQUIRE(inside == painted);
    }
  }
}

TEST_CASE("rendering twice yields identical buffers") {
  WorldState s = one_car_world({2, -1}, 1.1, 0.0);
  Entity wall;
  wall.id = 7;
  wall.kind = EntityKind::building;
  wall.center = {-4, 3};
  wall.half_extent = {2, 1};
  s.entities.push_back(wall);
  const Viewport vp{{-10, -10}, {10, 10}};
  REQUIRE(render_topdown(s, vp, 128) == render_topdown(s, vp, 128));
}

TEST_CASE("empty viewport is rejected") {
  WorldState s;
  REQUIRE_THROWS_AS(render_topdown(s, {{0, 0}, {0, 10}}, 10), std::invalid_argument);
  REQUIRE_THROWS_AS(render_topdown(s, {{0, 0}, {10, 10}}, 0), std::invalid_argument);
}

TEST_CASE("png and ppm round out to files") {
  Image img(8, 6, {10, 20, 30});
  img.at(3, 2) = {200, 100, 50};
  img.write_ppm("/tmp/handoff_test.ppm");
  img.write_png("/tmp/handoff_test.png");
  std::ifstream ppm("/tmp/handoff_test.ppm", std::ios::binary);
  REQUIRE(ppm.good());
  std::ifstream png("/tmp/handoff_test.png", std::ios::binary);
  char magic[4] = {};
  png.read(magic, 4);
  REQUIRE(magic[1] == 'P');
  REQUIRE(magic[2] == 'N');
  REQUIRE(magic[3] == 'G');
}
