#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "hazelevel/image.hpp"

namespace hazelevel {

// `radius` r gives a (2r+1)-sided square window.
struct GuidedFilterParams {
  int radius = 60;
  double epsilon = 1e-3;

  void validate() const {
    if (radius < 1) throw Error("guided filter radius must be >= 1, got " + std::to_string(radius));
    if (!(epsilon > 0.0)) throw Error("guided filter epsilon must be > 0");
  }
};

/// Mean over the (2*radius+1)-sided square around each pixel, clipped at the
/// borders. Two separable prefix-sum passes, O(H*W) for any radius.
inline ScalarMap box_mean(const ScalarMap& map, int radius) {
  if (radius < 0) throw Error("box radius must be >= 0");
  const int w = map.width(), h = map.height();
  if (radius == 0) return map;

  ScalarMap row_sums(w, h);
  std::vector<double> prefix(static_cast<std::size_t>(std::max(w, h)) + 1);
  for (int y = 0; y < h; ++y) {
    prefix[0] = 0.0;
    for (int x = 0; x < w; ++x) prefix[x + 1] = prefix[x] + map(x, y);
    for (int x = 0; x < w; ++x) {
      const int lo = std::max(0, x - radius), hi = std::min(w - 1, x + radius);
      row_sums(x, y) = prefix[hi + 1] - prefix[lo];
    }
  }

  ScalarMap out(w, h);
  std::vector<double> col_prefix(static_cast<std::size_t>(w) * (h + 1), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      col_prefix[static_cast<std::size_t>(y + 1) * w + x] = col_prefix[static_cast<std::size_t>(y) * w + x] + row_sums(x, y);
  for (int y = 0; y < h; ++y) {
    const int lo_y = std::max(0, y - radius), hi_y = std::min(h - 1, y + radius);
    const double rows = hi_y - lo_y + 1;
    for (int x = 0; x < w; ++x) {
      const int lo_x = std::max(0, x - radius), hi_x = std::min(w - 1, x + radius);
      const double sum = col_prefix[static_cast<std::size_t>(hi_y + 1) * w + x] - col_prefix[static_cast<std::size_t>(lo_y) * w + x];
      out(x, y) = sum / (rows * (hi_x - lo_x + 1));
    }
  }
  return out;
}

/// Single-channel guided filter without output clamping:
///   a = cov(g,p) / (var(g) + eps),  b = mean(p) - a * mean(g),
///   q = mean(a) * g + mean(b).
inline ScalarMap guided_smooth(const ScalarMap& input, const ScalarMap& guide, int radius, double epsilon) {
  if (!input.same_shape(guide)) throw Error("guided filter: input and guide dimensions differ");
  const std::size_t n = input.size();
  ScalarMap gp(input.width(), input.height()), gg(input.width(), input.height());
  for (std::size_t i = 0; i < n; ++i) {
    gp[i] = guide[i] * input[i];
    gg[i] = guide[i] * guide[i];
  }
  const ScalarMap mean_g = box_mean(guide, radius);
  const ScalarMap mean_p = box_mean(input, radius);
  const ScalarMap mean_gp = box_mean(gp, radius);
  const ScalarMap mean_gg = box_mean(gg, radius);

  ScalarMap a(input.width(), input.height()), b(input.width(), input.height());
  for (std::size_t i = 0; i < n; ++i) {
    const double var = mean_gg[i] - mean_g[i] * mean_g[i];
    const double cov = mean_gp[i] - mean_g[i] * mean_p[i];
    a[i] = cov / (var + epsilon);
    b[i] = mean_p[i] - a[i] * mean_g[i];
  }
  const ScalarMap mean_a = box_mean(a, radius);
  const ScalarMap mean_b = box_mean(b, radius);
  ScalarMap q(input.width(), input.height());
  for (std::size_t i = 0; i < n; ++i) q[i] = mean_a[i] * guide[i] + mean_b[i];
  return q;
}

/// Refines a transmission map with the grayscale of `guide` as guidance.
/// Output is clamped to [0.01, 1].
inline ScalarMap guided_filter(const ScalarMap& input, const RasterImage& guide, const GuidedFilterParams& params) {
  params.validate();
  if (input.width() != guide.width() || input.height() != guide.height())
    throw Error("guided filter: input is " + std::to_string(input.width()) + "x" + std::to_string(input.height()) +
                " but guide is " + std::to_string(guide.width()) + "x" + std::to_string(guide.height()));
  ScalarMap q = guided_smooth(input, grayscale(guide), params.radius, params.epsilon);
  for (double& v : q.values()) v = std::clamp(v, 0.01, 1.0);
  return q;
}

}  // namespace hazelevel
