#pragma once

#include <algorithm>
#include <array>
#include <numeric>
#include <string>
#include <vector>

#include "hazelevel/image.hpp"

namespace hazelevel {

struct DarkChannelParams {
  int patch_size = 15;
  double omega = 0.95;

  void validate() const {
    if (patch_size < 1 || patch_size % 2 == 0)
      throw Error("patch size must be odd and >= 1, got " + std::to_string(patch_size));
    if (!(omega > 0.0 && omega <= 1.0)) throw Error("omega must lie in (0,1]");
  }
};

// Per-channel sky luminance A^c used to normalize the image.
class AtmosphericLight {
 public:
  static constexpr double floor = 0.05;

  explicit AtmosphericLight(std::array<double, 3> rgb) : rgb_(rgb) {
    for (double a : rgb_)
      if (!(a > 0.0 && a <= 1.0)) throw Error("atmospheric light components must lie in (0,1]");
  }

  double operator[](int c) const noexcept { return rgb_[c]; }
  const std::array<double, 3>& rgb() const noexcept { return rgb_; }

  friend bool operator==(const AtmosphericLight&, const AtmosphericLight&) = default;

 private:
  std::array<double, 3> rgb_;
};

namespace detail {

// out[i] = min(in[i-r .. i+r]) with the window clipped to [0, n).
// Monotone deque, O(n). `in` and `out` are strided views into the same
// buffer layout; `queue` is scratch space of at least n entries.
inline void sliding_min(const double* in, double* out, int n, std::ptrdiff_t stride, int r, std::vector<int>& queue) {
  queue.resize(static_cast<std::size_t>(n));
  int head = 0, tail = 0, next = 0;
  for (int i = 0; i < n; ++i) {
    const int hi = std::min(n - 1, i + r);
    for (; next <= hi; ++next) {
      const double v = in[next * stride];
      while (tail > head && in[queue[tail - 1] * stride] >= v) --tail;
      queue[tail++] = next;
    }
    while (queue[head] < i - r) ++head;
    out[i * stride] = in[queue[head] * stride];
  }
}

}  // namespace detail

/// Grayscale erosion with a patch_size x patch_size square, clipped at the
/// borders. Separable: rows first, then columns.
inline ScalarMap erode(const ScalarMap& map, int patch_size) {
  if (patch_size < 1 || patch_size % 2 == 0)
    throw Error("patch size must be odd and >= 1, got " + std::to_string(patch_size));
  const int r = patch_size / 2;
  const int w = map.width(), h = map.height();
  if (r == 0) return map;
  ScalarMap rows(w, h), out(w, h);
  std::vector<int> queue;
  for (int y = 0; y < h; ++y)
    detail::sliding_min(&map.values()[static_cast<std::size_t>(y) * w], &rows.values()[static_cast<std::size_t>(y) * w],
                        w, 1, r, queue);
  for (int x = 0; x < w; ++x) detail::sliding_min(&rows.values()[x], &out.values()[x], h, w, r, queue);
  return out;
}

/// Per-pixel minimum over color channels (gray images count as three equal
/// channels).
inline ScalarMap channel_min(const RasterImage& image) {
  ScalarMap out(image.width(), image.height());
  const int c = image.channels();
  auto src = image.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    double m = src[i * c];
    for (int k = 1; k < c; ++k) m = std::min(m, src[i * c + k]);
    out[i] = m;
  }
  return out;
}

inline ScalarMap dark_channel(const RasterImage& image, int patch_size) {
  return erode(channel_min(image), patch_size);
}

/// Brightest 0.1% of the dark channel (at least one pixel, ties in scan
/// order), then the candidate with the largest channel sum. Components are
/// floored at AtmosphericLight::floor.
inline AtmosphericLight estimate_atmospheric_light(const RasterImage& image, const ScalarMap& dark) {
  if (dark.width() != image.width() || dark.height() != image.height())
    throw Error("atmospheric light: dark channel and image dimensions differ");
  const std::size_t n = dark.size();
  const std::size_t count = std::max<std::size_t>(1, n / 1000);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count), order.end(),
                    [&](std::size_t a, std::size_t b) { return dark[a] > dark[b] || (dark[a] == dark[b] && a < b); });

  auto channel_sum = [&](std::size_t i) { return image.sample(i, 0) + image.sample(i, 1) + image.sample(i, 2); };
  std::size_t best = order[0];
  double best_sum = channel_sum(best);
  for (std::size_t k = 1; k < count; ++k) {
    const std::size_t i = order[k];
    const double s = channel_sum(i);
    if (s > best_sum || (s == best_sum && i < best)) {
      best = i;
      best_sum = s;
    }
  }
  std::array<double, 3> a{};
  for (int c = 0; c < 3; ++c) a[c] = std::max(AtmosphericLight::floor, image.sample(best, c));
  return AtmosphericLight(a);
}

/// t~(X) = 1 - omega * min_c min_{Y in patch(X)} I^c(Y) / A^c, clamped to
/// [0.01, 1].
inline TransmissionMap raw_transmission(const RasterImage& image, const AtmosphericLight& a,
                                        const DarkChannelParams& params) {
  params.validate();
  ScalarMap ratio(image.width(), image.height());
  for (std::size_t i = 0; i < ratio.size(); ++i) {
    double m = image.sample(i, 0) / a[0];
    m = std::min(m, image.sample(i, 1) / a[1]);
    m = std::min(m, image.sample(i, 2) / a[2]);
    ratio[i] = m;
  }
  ScalarMap t = erode(ratio, params.patch_size);
  for (double& v : t.values()) v = std::clamp(1.0 - params.omega * v, 0.01, 1.0);
  return t;
}

}  // namespace hazelevel
