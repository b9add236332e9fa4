#pragma once

#include <algorithm>
#include <vector>

#include "hazelevel/image.hpp"
#include "hazelevel/io.hpp"
#include "hazelevel/sample.hpp"

namespace hazelevel {

// Smallest value a normalized depth may take, so normalized maps stay
// strictly positive.
inline constexpr double kNormalizedDepthFloor = 1e-6;

/// Nearest-neighbor resampling; source index = floor((x + 0.5) * src / dst).
inline DepthMap resample_nearest(const DepthMap& depth, int width, int height) {
  if (depth.width() == width && depth.height() == height) return depth;
  if (width < 1 || height < 1) throw Error("resample target must be at least 1x1");
  std::vector<double> out(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(depth.height() - 1, static_cast<int>((y + 0.5) * depth.height() / height));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(depth.width() - 1, static_cast<int>((x + 0.5) * depth.width() / width));
      out[static_cast<std::size_t>(y) * width + x] = depth(sx, sy);
    }
  }
  return DepthMap(width, height, std::move(out), depth.d_max());
}

/// Divides by the per-image maximum; values land in (0, 1]. An all-zero map
/// is returned unchanged.
inline DepthMap normalize_depth(const DepthMap& depth) {
  const double peak = depth.map().max();
  if (!(peak > 0.0)) return depth;
  std::vector<double> out(depth.map().values().begin(), depth.map().values().end());
  for (double& v : out) v = std::max(kNormalizedDepthFloor, v / peak);
  return DepthMap(depth.width(), depth.height(), std::move(out), 1.0);
}

/// d(X) for an image of the given size. File sources are capped at d_max
/// and resampled when their size differs (unless `allow_resample` is off).
inline DepthMap depth_for(const DepthSource& source, Shape image, double d_max, bool allow_resample = true) {
  source.validate();
  DepthMap depth = [&] {
    if (source.kind == DepthSource::Kind::uniform)
      return DepthMap(image.width, image.height,
                      std::vector<double>(static_cast<std::size_t>(image.width) * image.height, source.value), d_max);
    if (!std::filesystem::exists(source.path)) throw Error("depth file '" + source.path.string() + "' does not exist");
    if (allow_resample) return resample_nearest(load_depth(source.path, d_max), image.width, image.height);
    return load_depth(source.path, d_max, image);
  }();
  return source.normalize ? normalize_depth(depth) : depth;
}

inline DepthMap depth_for(const LabeledSample& sample, Shape image, double d_max, bool allow_resample = true) {
  return depth_for(sample.depth_source, image, d_max, allow_resample);
}

}  // namespace hazelevel
