#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "handoff/geometry.hpp"
#include "handoff/image.hpp"
#include "handoff/render.hpp"
#include "handoff/rng.hpp"
#include "handoff/world.hpp"

namespace handoff::sense {

enum class Direction { forward, backward, left, right };
enum class Placement { vehicle_adjacent, centered, boundary_adjacent };

/// Opaque sub-rectangle of one directional sensing region. The mask spans
/// the full width of its region; area_fraction fixes its depth.
struct Mask {
  Direction direction = Direction::forward;
  Placement placement = Placement::centered;
  double area_fraction = 0.5;  // (0, 1]
};

inline constexpr Rgb kMaskColor{255, 255, 255};
inline constexpr Rgb kDefaultFogColor{191, 191, 191};

struct InvalidSeverityError : std::invalid_argument {
  InvalidSeverityError() : std::invalid_argument("severity value must lie in (0,1)") {}
};

/// Exponential-decay constant fixed by the severity point: f(delta) = gamma.
inline double fog_alpha(double severity_distance, double severity_value) {
  if (!(severity_value > 0.0 && severity_value < 1.0)) throw InvalidSeverityError();
  if (!(severity_distance > 0.0))
    throw std::invalid_argument("severity distance must be positive");
  return -severity_distance / std::log(severity_value);
}

inline double decay(double distance, double alpha) { return std::exp(-distance / alpha); }

struct FogParams {
  double severity_distance = 50.0;  // m
  double severity_value = 0.5;      // (0,1)
  Rgb fog_color = kDefaultFogColor;
};

struct NightParams {
  double severity_distance = 50.0;   // m, decay toward black
  double severity_value = 0.5;       // (0,1)
  double headlight_depth = 20.0;     // m ahead of the front bumper
  double headlight_base_width = 2.0; // m, car width at the bumper
  double expansion_angle = 0.3;      // rad, per-side spread
};

/// Truncated-normal perturbation spec for one scalar parameter.
struct NoisyParam {
  double sigma = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct NoiseParams {
  NoisyParam severity_distance;
  NoisyParam severity_value;
  NoisyParam headlight_depth;
};

struct SensingProfile {
  double range_forward = 65.0;
  double range_backward = 15.0;
  double range_left = 40.0;
  double range_right = 40.0;
  std::vector<Mask> masks;
  std::optional<FogParams> fog;
  std::optional<NightParams> night;
  std::vector<Rgb> error_colors;  // color sensitivity; empty = inactive
  std::optional<NoiseParams> noise;
  int image_resolution = 48;

  double span_x() const { return range_forward + range_backward; }   // along heading
  double span_y() const { return range_left + range_right; }         // across heading
};

struct CarPose {
  Vec2 position;
  double heading = 0.0;
  double half_length = 2.0;
  double half_width = 1.0;
};

/// Mapping between the vehicle-aligned sensing region and observation pixels.
/// Row 0 is the forward edge, column 0 the left edge; the fog/night decay
/// distance is measured in pixel units from the vehicle's pixel position,
/// with meters converted on the forward-axis scale.
struct ObsFrame {
  CarPose pose;
  double fwd = 0, back = 0, left = 0, right = 0;
  int res = 0;

  static ObsFrame make(const CarPose& pose, const SensingProfile& profile) {
    ObsFrame f;
    f.pose = pose;
    f.fwd = profile.range_forward;
    f.back = profile.range_backward;
    f.left = profile.range_left;
    f.right = profile.range_right;
    f.res = profile.image_resolution;
    return f;
  }

  double mpp_col() const { return (left + right) / res; }  // m per pixel across
  double mpp_row() const { return (fwd + back) / res; }    // m per pixel along
  double px_per_meter() const { return res / (fwd + back); }

  /// Vehicle-frame meters (x ahead, y left) of a pixel center.
  Vec2 pixel_to_vehicle(double px, double py) const {
    return {fwd - (py + 0.5) * mpp_row(), left - (px + 0.5) * mpp_col()};
  }

  /// Continuous pixel coordinates of a vehicle-frame point.
  Vec2 vehicle_to_pixel(Vec2 v) const {
    return {(left - v.y) / mpp_col() - 0.5, (fwd - v.x) / mpp_row() - 0.5};
  }

  Vec2 vehicle_to_world(Vec2 v) const { return pose.position + v.rotated(pose.heading); }

  Vec2 world_to_vehicle(Vec2 w) const { return (w - pose.position).rotated(-pose.heading); }

  /// Pixel coordinates of the vehicle center (the decay origin).
  Vec2 center_pixel() const { return vehicle_to_pixel({0.0, 0.0}); }

  /// Pixel-space distance from the vehicle center to a pixel.
  double pixel_distance(double px, double py) const {
    const Vec2 c = center_pixel();
    return std::hypot(px - c.x, py - c.y);
  }

  bool in_region(Vec2 v) const {
    return v.x >= -back && v.x <= fwd && v.y >= -right && v.y <= left;
  }
};

/// Mask rectangle in vehicle-frame meters (x fwd, y left).
struct MaskRect {
  double x0, x1, y0, y1;
  bool contains(Vec2 v) const { return v.x >= x0 && v.x <= x1 && v.y >= y0 && v.y <= y1; }
};

inline MaskRect mask_rect(const Mask& m, const SensingProfile& p) {
  const double f = m.area_fraction;
  const auto span = [f](double lo, double hi, Placement place) {
    const double depth = (hi - lo) * f;
    switch (place) {
      case Placement::vehicle_adjacent: return std::pair{lo, lo + depth};
      case Placement::centered:
        return std::pair{lo + (hi - lo - depth) / 2.0, lo + (hi - lo + depth) / 2.0};
      case Placement::boundary_adjacent: return std::pair{hi - depth, hi};
    }
    return std::pair{lo, hi};
  };
  switch (m.direction) {
    case Direction::forward: {
      auto [a, b] = span(0.0, p.range_forward, m.placement);
      return {a, b, -p.range_right, p.range_left};
    }
    case Direction::backward: {
      // vehicle_adjacent hugs the car, boundary_adjacent the rear boundary.
      auto [a, b] = span(0.0, p.range_backward, m.placement);
      return {-b, -a, -p.range_right, p.range_left};
    }
    case Direction::left: {
      auto [a, b] = span(0.0, p.range_left, m.placement);
      return {-p.range_backward, p.range_forward, a, b};
    }
    case Direction::right: {
      auto [a, b] = span(0.0, p.range_right, m.placement);
      return {-p.range_backward, p.range_forward, -b, -a};
    }
  }
  return {0, 0, 0, 0};
}

/// Vehicle-aligned crop of a rendered base image, resampled (nearest
/// neighbor) to resolution x resolution.
inline Image crop_sensing_region(const Image& base, const world::Viewport& base_viewport,
                                 const CarPose& pose, const SensingProfile& profile) {
  const ObsFrame frame = ObsFrame::make(pose, profile);
  const int res = profile.image_resolution;
  Image out(res, res);
  const double mpp_x = (base_viewport.max.x - base_viewport.min.x) / base.width();
  const double mpp_y = (base_viewport.max.y - base_viewport.min.y) / base.height();
  for (int py = 0; py < res; ++py) {
    for (int px = 0; px < res; ++px) {
      const Vec2 w = frame.vehicle_to_world(frame.pixel_to_vehicle(px, py));
      const int bx = int(std::floor((w.x - base_viewport.min.x) / mpp_x));
      const int by = int(std::floor((base_viewport.max.y - w.y) / mpp_y));
      if (base.in_bounds(bx, by)) out.at(px, py) = base.at(bx, by);
    }
  }
  return out;
}

/// Direct rasterization of the sensing view straight from world state;
/// equivalent to rendering a base frame and cropping, minus the double
/// resampling. Used on the per-step hot path.
inline Image render_sensing_view(const world::WorldState& state, const CarPose& pose,
                                 const SensingProfile& profile,
                                 const std::vector<world::EntityId>& visible_ids) {
  const ObsFrame frame = ObsFrame::make(pose, profile);
  const int res = profile.image_resolution;
  Image out(res, res, world::kRoadColor);

  std::vector<const world::Entity*> order;
  for (const auto& e : state.entities) {
    bool allowed = false;
    for (world::EntityId id : visible_ids)
      if (id == e.id) allowed = true;
    if (allowed) order.push_back(&e);
  }
  std::stable_sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
    return world::z_order(a->kind) < world::z_order(b->kind);
  });

  for (const world::Entity* e : order) {
    const OrientedRect rect = e->rect();
    const Rgb color = e->kind == world::EntityKind::building
                          ? world::kBuildingColor
                          : (e->kind == world::EntityKind::sidewalk ? world::kSidewalkColor
                                                                    : e->color);
    // Pixel bbox from the projected corners.
    double lox = 1e18, hix = -1e18, loy = 1e18, hiy = -1e18;
    for (Vec2 c : rect.corners()) {
      const Vec2 p = frame.vehicle_to_pixel(frame.world_to_vehicle(c));
      lox = std::min(lox, p.x);
      hix = std::max(hix, p.x);
      loy = std::min(loy, p.y);
      hiy = std::max(hiy, p.y);
    }
    const int x0 = std::max(0, int(std::floor(lox)));
    const int x1 = std::min(res - 1, int(std::ceil(hix)));
    const int y0 = std::max(0, int(std::floor(loy)));
    const int y1 = std::min(res - 1, int(std::ceil(hiy)));
    for (int py = y0; py <= y1; ++py) {
      for (int px = x0; px <= x1; ++px) {
        const Vec2 w = frame.vehicle_to_world(frame.pixel_to_vehicle(px, py));
        if (rect.contains(w)) out.at(px, py) = color;
      }
    }
  }
  return out;
}

inline uint8_t blend_channel(double f, uint8_t original, uint8_t target) {
  const double v = f * original + (1.0 - f) * target;
  return uint8_t(std::clamp<long>(std::llround(v), 0, 255));
}

/// Per-pixel convex combination with the fog color, weighted by exponential
/// decay of pixel distance from the vehicle.
inline void apply_fog(Image& obs, const FogParams& params, const ObsFrame& frame) {
  const double alpha_px = fog_alpha(params.severity_distance, params.severity_value) *
                          frame.px_per_meter();
  for (int py = 0; py < obs.height(); ++py) {
    for (int px = 0; px < obs.width(); ++px) {
      const double f = decay(frame.pixel_distance(px, py), alpha_px);
      Rgb& p = obs.at(px, py);
      p = {blend_channel(f, p.r, params.fog_color.r), blend_channel(f, p.g, params.fog_color.g),
           blend_channel(f, p.b, params.fog_color.b)};
    }
  }
}

/// Headlight trapezoid in vehicle-frame meters: base of car width at the
/// front bumper, expanding by the spread angle out to the configured depth.
inline bool in_headlight(Vec2 v, const NightParams& params, const CarPose& pose) {
  const double x0 = pose.half_length;
  if (v.x < x0 || v.x > x0 + params.headlight_depth) return false;
  const double half_w =
      params.headlight_base_width / 2.0 + (v.x - x0) * std::tan(params.expansion_angle);
  return std::abs(v.y) <= half_w;
}

/// Same decay scheme as fog with a black target; pixels under the headlight
/// trapezoid keep their daytime values.
inline void apply_night(Image& obs, const NightParams& params, const ObsFrame& frame) {
  const double alpha_px = fog_alpha(params.severity_distance, params.severity_value) *
                          frame.px_per_meter();
  for (int py = 0; py < obs.height(); ++py) {
    for (int px = 0; px < obs.width(); ++px) {
      const Vec2 v = frame.pixel_to_vehicle(px, py);
      if (in_headlight(v, params, frame.pose)) continue;
      const double f = decay(frame.pixel_distance(px, py), alpha_px);
      Rgb& p = obs.at(px, py);
      p = {blend_channel(f, p.r, 0), blend_channel(f, p.g, 0), blend_channel(f, p.b, 0)};
    }
  }
}

/// Paint each mask rectangle opaque white.
inline void apply_masks(Image& obs, const std::vector<Mask>& masks,
                        const SensingProfile& profile, const ObsFrame& frame) {
  for (const Mask& m : masks) {
    const MaskRect r = mask_rect(m, profile);
    for (int py = 0; py < obs.height(); ++py) {
      for (int px = 0; px < obs.width(); ++px) {
        if (r.contains(frame.pixel_to_vehicle(px, py))) obs.at(px, py) = kMaskColor;
      }
    }
  }
}

/// Weighted Euclidean RGB distance with a brightness correction term.
inline double color_distance(Rgb c1, Rgb c2) {
  const double rbar = (double(c1.r) + double(c2.r)) / 2.0;
  const double dr = double(c1.r) - double(c2.r);
  const double dg = double(c1.g) - double(c2.g);
  const double db = double(c1.b) - double(c2.b);
  return std::sqrt((2.0 + rbar / 256.0) * dr * dr + 4.0 * dg * dg +
                   (2.0 + (255.0 - rbar) / 256.0) * db * db);
}

/// Reference maximum: black vs white.
inline double max_color_distance() { return color_distance({0, 0, 0}, {255, 255, 255}); }

struct NoPixelsError : std::runtime_error {
  NoPixelsError() : std::runtime_error("entity footprint contains no pixels") {}
};

/// Per-channel mean over footprint pixels of a context-modified image.
inline Rgb representative_color(const Image& context_image,
                                const std::vector<std::pair<int, int>>& footprint) {
  if (footprint.empty()) throw NoPixelsError();
  double r = 0, g = 0, b = 0;
  for (auto [px, py] : footprint) {
    const Rgb& p = context_image.at(px, py);
    r += p.r;
    g += p.g;
    b += p.b;
  }
  const double n = double(footprint.size());
  return {uint8_t(std::clamp<long>(std::llround(r / n), 0, 255)),
          uint8_t(std::clamp<long>(std::llround(g / n), 0, 255)),
          uint8_t(std::clamp<long>(std::llround(b / n), 0, 255))};
}

/// Observation-space pixel footprint of an entity (pixel centers inside the
/// entity rectangle, clipped to the image).
inline std::vector<std::pair<int, int>> footprint_pixels(const ObsFrame& frame,
                                                         const OrientedRect& rect) {
  std::vector<std::pair<int, int>> pts;
  double lox = 1e18, hix = -1e18, loy = 1e18, hiy = -1e18;
  for (Vec2 c : rect.corners()) {
    const Vec2 p = frame.vehicle_to_pixel(frame.world_to_vehicle(c));
    lox = std::min(lox, p.x);
    hix = std::max(hix, p.x);
    loy = std::min(loy, p.y);
    hiy = std::max(hiy, p.y);
  }
  const int x0 = std::max(0, int(std::floor(lox)));
  const int x1 = std::min(frame.res - 1, int(std::ceil(hix)));
  const int y0 = std::max(0, int(std::floor(loy)));
  const int y1 = std::min(frame.res - 1, int(std::ceil(hiy)));
  for (int py = y0; py <= y1; ++py) {
    for (int px = x0; px <= x1; ++px) {
      const Vec2 w = frame.vehicle_to_world(frame.pixel_to_vehicle(px, py));
      if (rect.contains(w)) pts.emplace_back(px, py);
    }
  }
  return pts;
}

/// Multiplicative detection likelihood per the context model. Factors are
/// evaluated on a deterministic supersampled grid over the entity rectangle
/// (continuous observation coordinates), which keeps the value smooth in the
/// context parameters instead of quantized to the observation raster:
///   visible  — fraction of the entity inside the sensing region and unmasked
///   fog      — mean decay weight over the occupied region
///   light    — mean of 1 under the headlights, decay weight elsewhere
///   color    — distance from the context-modified mean color to the nearest
///              error color, relative to the black/white maximum
inline double detection_likelihood(const world::Entity& entity, const SensingProfile& profile,
                                   const CarPose& observer) {
  constexpr int kGrid = 12;
  const ObsFrame frame = ObsFrame::make(observer, profile);
  const OrientedRect rect = entity.rect();

  std::vector<MaskRect> mask_rects;
  mask_rects.reserve(profile.masks.size());
  for (const Mask& m : profile.masks) mask_rects.push_back(mask_rect(m, profile));

  const double fog_alpha_px =
      profile.fog ? fog_alpha(profile.fog->severity_distance, profile.fog->severity_value) *
                        frame.px_per_meter()
                  : 0.0;
  const double night_alpha_px =
      profile.night ? fog_alpha(profile.night->severity_distance, profile.night->severity_value) *
                          frame.px_per_meter()
                    : 0.0;

  const Vec2 ax = Vec2{std::cos(entity.heading), std::sin(entity.heading)};
  const Vec2 ay = ax.perp();

  int in_region = 0;
  int visible = 0;
  double fog_sum = 0.0;
  double light_sum = 0.0;
  double col_r = 0.0, col_g = 0.0, col_b = 0.0;

  for (int i = 0; i < kGrid; ++i) {
    for (int j = 0; j < kGrid; ++j) {
      const double u = (i + 0.5) / kGrid * 2.0 - 1.0;
      const double w = (j + 0.5) / kGrid * 2.0 - 1.0;
      const Vec2 world_pt =
          entity.center + ax * (u * entity.half_extent.x) + ay * (w * entity.half_extent.y);
      const Vec2 v = frame.world_to_vehicle(world_pt);
      if (!frame.in_region(v)) continue;
      ++in_region;

      bool masked = false;
      for (const MaskRect& r : mask_rects)
        if (r.contains(v)) masked = true;
      if (!masked) ++visible;

      const Vec2 px = frame.vehicle_to_pixel(v);
      const double pd = frame.pixel_distance(px.x, px.y);

      double fog_f = 1.0;
      if (profile.fog) {
        fog_f = decay(pd, fog_alpha_px);
        fog_sum += fog_f;
      }
      double night_f = 1.0;
      if (profile.night) {
        night_f = in_headlight(v, *profile.night, observer) ? 1.0 : decay(pd, night_alpha_px);
        light_sum += night_f;
      }
      // Context-modified sample color for the representative mean.
      double r = entity.color.r, g = entity.color.g, b = entity.color.b;
      if (profile.fog) {
        r = fog_f * r + (1.0 - fog_f) * profile.fog->fog_color.r;
        g = fog_f * g + (1.0 - fog_f) * profile.fog->fog_color.g;
        b = fog_f * b + (1.0 - fog_f) * profile.fog->fog_color.b;
      }
      if (profile.night) {
        r *= night_f;
        g *= night_f;
        b *= night_f;
      }
      col_r += r;
      col_g += g;
      col_b += b;
    }
  }

  const int total = kGrid * kGrid;
  if (in_region == 0) return 0.0;

  double likelihood = double(visible) / total;
  if (profile.fog) likelihood *= fog_sum / in_region;
  if (profile.night) likelihood *= light_sum / in_region;
  if (!profile.error_colors.empty()) {
    const Rgb rep{uint8_t(std::clamp(col_r / in_region, 0.0, 255.0)),
                  uint8_t(std::clamp(col_g / in_region, 0.0, 255.0)),
                  uint8_t(std::clamp(col_b / in_region, 0.0, 255.0))};
    double nearest = std::numeric_limits<double>::max();
    for (const Rgb& err : profile.error_colors)
      nearest = std::min(nearest, color_distance(rep, err));
    likelihood *= std::min(nearest / max_color_distance(), 1.0);
  }
  return std::clamp(likelihood, 0.0, 1.0);
}

enum class DetectionMode { stochastic, threshold };

/// Turn a likelihood into a detection event. Stochastic draws come from the
/// episode's seeded stream; threshold mode is deterministic.
inline bool resolve_detection(double likelihood, DetectionMode mode, Rng& rng,
                              double threshold = 0.5) {
  likelihood = std::clamp(likelihood, 0.0, 1.0);
  if (mode == DetectionMode::threshold) return likelihood >= threshold;
  return rng.bernoulli(likelihood);
}

inline double sample_noisy(double center, const NoisyParam& p, Rng& rng) {
  if (p.sigma <= 0.0) return center;
  return rng.truncated_gaussian(center, p.sigma, p.lo, p.hi);
}

inline FogParams sample_noisy_params(const FogParams& center, const NoiseParams& noise,
                                     Rng& rng) {
  FogParams out = center;
  out.severity_distance = sample_noisy(center.severity_distance, noise.severity_distance, rng);
  out.severity_value =
      std::clamp(sample_noisy(center.severity_value, noise.severity_value, rng), 1e-4, 1.0 - 1e-4);
  return out;
}

inline NightParams sample_noisy_params(const NightParams& center, const NoiseParams& noise,
                                       Rng& rng) {
  NightParams out = center;
  out.severity_distance = sample_noisy(center.severity_distance, noise.severity_distance, rng);
  out.severity_value =
      std::clamp(sample_noisy(center.severity_value, noise.severity_value, rng), 1e-4, 1.0 - 1e-4);
  out.headlight_depth = sample_noisy(center.headlight_depth, noise.headlight_depth, rng);
  return out;
}

/// Full observation pipeline for one driver: direct sensing-view render,
/// then fog -> night -> masks. Masks go on top so blind regions stay opaque
/// white regardless of weather.
inline Image make_observation(const world::WorldState& state, const CarPose& pose,
                              const SensingProfile& profile,
                              const std::vector<world::EntityId>& visible_ids) {
  Image obs = render_sensing_view(state, pose, profile, visible_ids);
  const ObsFrame frame = ObsFrame::make(pose, profile);
  if (profile.fog) apply_fog(obs, *profile.fog, frame);
  if (profile.night) apply_night(obs, *profile.night, frame);
  if (!profile.masks.empty()) apply_masks(obs, profile.masks, profile, frame);
  return obs;
}

}  // namespace handoff::sense
