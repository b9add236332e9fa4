#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "hazelevel/image.hpp"
#include "hazelevel/synth.hpp"

namespace hazelevel {

struct ProceduralScene {
  RasterImage image;
  DepthMap depth;
};

/// Deterministic outdoor-like test scene: sky at d_max above a horizon, a
/// perspective ground plane, and frontal buildings at assorted depths.
inline ProceduralScene make_procedural_scene(int width, int height, std::uint64_t seed, double d_max = 300.0) {
  if (width < 8 || height < 8) throw Error("procedural scenes need at least 8x8 pixels");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x5eedu};
  std::mt19937_64 rng(seq);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * detail::unit_interval(rng); };

  const int horizon = static_cast<int>(height * uniform(0.28, 0.45));
  const double camera_height = 1.5;
  const double near = uniform(3.0, 8.0);
  const double focal = (height - horizon) * near / camera_height;
  const double ground_cap = 0.8 * d_max;

  RasterImage image(width, height, 3);
  std::vector<double> depth(static_cast<std::size_t>(width) * height, d_max);

  const std::array<double, 3> sky_top = {uniform(0.35, 0.5), uniform(0.5, 0.65), uniform(0.8, 0.95)};
  const std::array<double, 3> sky_low = {uniform(0.65, 0.75), uniform(0.72, 0.8), uniform(0.82, 0.92)};
  const std::array<double, 3> ground = {uniform(0.12, 0.3), uniform(0.12, 0.3), uniform(0.08, 0.2)};
  const double tile = uniform(1.5, 3.0);

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      if (y <= horizon) {
        const double f = horizon > 0 ? static_cast<double>(y) / horizon : 1.0;
        for (int c = 0; c < 3; ++c) image.at(x, y, c) = sky_top[c] * (1 - f) + sky_low[c] * f;
      } else {
        const double d = std::min(ground_cap, focal * camera_height / (y - horizon));
        const double lateral = (x - width / 2.0) * d / focal;
        const bool dark_tile = (static_cast<long>(std::floor(lateral / tile)) + static_cast<long>(std::floor(d / (2 * tile)))) % 2 != 0;
        const double shade = dark_tile ? 0.55 : 1.0;
        for (int c = 0; c < 3; ++c) image.at(x, y, c) = ground[c] * shade;
        depth[i] = d;
      }
    }
  }

  struct Building {
    double depth, center, world_w, world_h;
    std::array<double, 3> color;
  };
  const int count = 4 + static_cast<int>(rng() % 5);
  std::vector<Building> buildings;
  for (int b = 0; b < count; ++b) {
    Building bl{uniform(12.0, 160.0), uniform(0.0, width), uniform(6.0, 30.0), uniform(8.0, 45.0), {}};
    for (double& c : bl.color) c = uniform(0.2, 0.7);
    bl.color[rng() % 3] = uniform(0.0, 0.08);
    buildings.push_back(bl);
  }
  std::sort(buildings.begin(), buildings.end(), [](const Building& a, const Building& b) { return a.depth > b.depth; });

  for (const auto& bl : buildings) {
    const int base = std::min(height - 1, horizon + static_cast<int>(std::lround(focal * camera_height / bl.depth)));
    // Buildings never reach the top 40% of the sky band, so some sky stays visible.
    const int top = std::max(static_cast<int>(0.6 * horizon), base - static_cast<int>(std::lround(bl.world_h * focal / bl.depth)));
    const double half = 0.5 * bl.world_w * focal / bl.depth;
    const int x0 = std::max(0, static_cast<int>(std::lround(bl.center - half)));
    const int x1 = std::min(width - 1, static_cast<int>(std::lround(bl.center + half)));
    const double cell = std::max(2.0, 3.0 * focal / bl.depth);
    for (int y = top; y <= base; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const bool window = std::fmod((x - x0) / cell, 1.0) > 0.55 && std::fmod((base - y) / cell, 1.0) > 0.5;
        for (int c = 0; c < 3; ++c) image.at(x, y, c) = window ? 0.3 * bl.color[c] : bl.color[c];
        depth[static_cast<std::size_t>(y) * width + x] = bl.depth;
      }
    }
  }

  return {std::move(image), DepthMap(width, height, std::move(depth), d_max)};
}

}  // namespace hazelevel
