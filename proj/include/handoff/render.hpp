#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "handoff/image.hpp"
#include "handoff/world.hpp"

namespace handoff::world {

// Fixed palette. The exposed background doubles as road surface; everything
// else is drawn over it in z-order.
inline constexpr Rgb kRoadColor{80, 80, 80};
inline constexpr Rgb kSidewalkColor{170, 170, 170};
inline constexpr Rgb kBuildingColor{50, 50, 50};

struct Viewport {
  Vec2 min;  // world coords of the lower-left corner
  Vec2 max;  // world coords of the upper-right corner

  bool empty() const { return max.x <= min.x || max.y <= min.y; }
};

inline int z_order(EntityKind kind) {
  switch (kind) {
    case EntityKind::sidewalk: return 0;
    case EntityKind::building: return 1;
    case EntityKind::car: return 2;
  }
  return 0;
}

/// Nearest-neighbor top-down rasterization. `width_px` fixes the horizontal
/// resolution; rows are derived to keep pixels square. Pure function of
/// (state, viewport, width_px): repeated calls are bit-identical.
inline Image render_topdown(const WorldState& state, const Viewport& viewport, int width_px) {
  if (width_px <= 0) throw std::invalid_argument("render: nonpositive resolution");
  if (viewport.empty()) throw std::invalid_argument("render: empty viewport");

  const double dx = viewport.max.x - viewport.min.x;
  const double dy = viewport.max.y - viewport.min.y;
  const double mpp = dx / width_px;  // meters per pixel
  const int height_px = std::max(1, int(std::llround(dy / mpp)));

  Image img(width_px, height_px, kRoadColor);

  // Stable z-order: kind first, then insertion order.
  std::vector<size_t> order(state.entities.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return z_order(state.entities[a].kind) < z_order(state.entities[b].kind);
  });

  for (size_t idx : order) {
    const Entity& e = state.entities[idx];
    const OrientedRect rect = e.rect();
    // Pixel bounding box of the rectangle.
    const auto cs = rect.corners();
    double lox = cs[0].x, hix = cs[0].x, loy = cs[0].y, hiy = cs[0].y;
    for (const Vec2& c : cs) {
      lox = std::min(lox, c.x);
      hix = std::max(hix, c.x);
      loy = std::min(loy, c.y);
      hiy = std::max(hiy, c.y);
    }
    const int x0 = std::max(0, int(std::floor((lox - viewport.min.x) / mpp)));
    const int x1 = std::min(width_px - 1, int(std::ceil((hix - viewport.min.x) / mpp)));
    const int y0 = std::max(0, int(std::floor((viewport.max.y - hiy) / mpp)));
    const int y1 = std::min(height_px - 1, int(std::ceil((viewport.max.y - loy) / mpp)));
    const Rgb color = e.kind == EntityKind::building
                          ? kBuildingColor
                          : (e.kind == EntityKind::sidewalk ? kSidewalkColor : e.color);
    for (int py = y0; py <= y1; ++py) {
      const double wy = viewport.max.y - (py + 0.5) * mpp;
      for (int px = x0; px <= x1; ++px) {
        const double wx = viewport.min.x + (px + 0.5) * mpp;
        if (rect.contains({wx, wy})) img.at(px, py) = color;
      }
    }
  }
  return img;
}

}  // namespace handoff::world
