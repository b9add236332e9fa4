#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "hazelevel/dark_channel.hpp"
#include "hazelevel/depth.hpp"
#include "hazelevel/guided_filter.hpp"
#include "hazelevel/image.hpp"

namespace hazelevel {

enum class TransmissionKind { raw, refined };
enum class Transform { unit, log1p, loglog1p };
enum class Combine { t_times_d, t_over_d, d_over_t, t_only, d_only };
enum class Pool { mean, median, max, p75, p90 };

inline constexpr std::array kTransmissionKinds = {TransmissionKind::raw, TransmissionKind::refined};
inline constexpr std::array kTransforms = {Transform::unit, Transform::log1p, Transform::loglog1p};
inline constexpr std::array kCombines = {Combine::t_times_d, Combine::t_over_d, Combine::d_over_t, Combine::t_only,
                                         Combine::d_only};
inline constexpr std::array kPools = {Pool::mean, Pool::median, Pool::max, Pool::p75, Pool::p90};

inline constexpr double kDivisionFloor = 1e-6;

inline std::string_view to_string(TransmissionKind k) { return k == TransmissionKind::raw ? "raw" : "refined"; }

inline std::string_view to_string(Transform t) {
  switch (t) {
    case Transform::unit: return "unit";
    case Transform::log1p: return "log1p";
    case Transform::loglog1p: return "loglog1p";
  }
  return "?";
}

inline std::string_view to_string(Combine c) {
  switch (c) {
    case Combine::t_times_d: return "t_times_d";
    case Combine::t_over_d: return "t_over_d";
    case Combine::d_over_t: return "d_over_t";
    case Combine::t_only: return "t_only";
    case Combine::d_only: return "d_only";
  }
  return "?";
}

inline std::string_view to_string(Pool p) {
  switch (p) {
    case Pool::mean: return "mean";
    case Pool::median: return "median";
    case Pool::max: return "max";
    case Pool::p75: return "p75";
    case Pool::p90: return "p90";
  }
  return "?";
}

namespace detail {

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view s, const std::array<Enum, N>& values, std::string_view what) {
  for (auto v : values)
    if (to_string(v) == s) return v;
  throw Error("unknown " + std::string(what) + " '" + std::string(s) + "'");
}

}  // namespace detail

// Which estimator family a variant belongs to.
enum class Family { trans, depth, both, baseline };

inline std::string_view to_string(Family f) {
  switch (f) {
    case Family::trans: return "trans";
    case Family::depth: return "depth";
    case Family::both: return "both";
    case Family::baseline: return "baselines";
  }
  return "?";
}

// One scoring recipe: pool(combine(T_t(t), T_d(d))).
struct EstimatorVariant {
  TransmissionKind transmission = TransmissionKind::refined;
  Transform t_transform = Transform::unit;
  Transform d_transform = Transform::unit;
  Combine combine = Combine::d_over_t;
  Pool pool = Pool::mean;
  bool depth_normalize = false;

  bool uses_transmission() const noexcept { return combine != Combine::d_only; }
  bool uses_depth() const noexcept { return combine != Combine::t_only; }

  Family family() const noexcept {
    if (combine == Combine::t_only) return Family::trans;
    if (combine == Combine::d_only) return Family::depth;
    return Family::both;
  }

  // Fields that cannot affect the score are reset to their first value.
  EstimatorVariant canonical() const noexcept {
    EstimatorVariant v = *this;
    if (!v.uses_depth()) {
      v.d_transform = Transform::unit;
      v.depth_normalize = false;
    }
    if (!v.uses_transmission()) {
      v.transmission = TransmissionKind::raw;
      v.t_transform = Transform::unit;
    }
    return v;
  }

  friend bool operator==(const EstimatorVariant&, const EstimatorVariant&) = default;
};

/// Canonical form, e.g. `refined|log1p|unit|d_over_t|p90|dnorm=1`.
inline std::string to_string(const EstimatorVariant& variant) {
  const auto v = variant.canonical();
  std::string s;
  s.append(to_string(v.transmission)).append("|");
  s.append(to_string(v.t_transform)).append("|");
  s.append(to_string(v.d_transform)).append("|");
  s.append(to_string(v.combine)).append("|");
  s.append(to_string(v.pool)).append("|");
  s.append(v.depth_normalize ? "dnorm=1" : "dnorm=0");
  return s;
}

inline EstimatorVariant parse_variant(std::string_view text) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto bar = text.find('|', start);
    parts.push_back(text.substr(start, bar == std::string_view::npos ? std::string_view::npos : bar - start));
    if (bar == std::string_view::npos) break;
    start = bar + 1;
  }
  if (parts.size() != 6)
    throw Error("variant '" + std::string(text) +
                "' must have 6 '|'-separated fields: transmission|t_transform|d_transform|combine|pool|dnorm=0/1");
  EstimatorVariant v;
  v.transmission = detail::parse_enum(parts[0], kTransmissionKinds, "transmission kind");
  v.t_transform = detail::parse_enum(parts[1], kTransforms, "transform");
  v.d_transform = detail::parse_enum(parts[2], kTransforms, "transform");
  v.combine = detail::parse_enum(parts[3], kCombines, "combine");
  v.pool = detail::parse_enum(parts[4], kPools, "pool");
  if (parts[5] == "dnorm=1") {
    v.depth_normalize = true;
  } else if (parts[5] != "dnorm=0") {
    throw Error("variant field 6 must be dnorm=0 or dnorm=1, got '" + std::string(parts[5]) + "'");
  }
  return v.canonical();
}

/// Canonicalized, deduplicated cross product of all choices, combine-major.
inline std::vector<EstimatorVariant> enumerate_variants() {
  std::vector<EstimatorVariant> out;
  std::set<std::string> seen;
  for (auto c : kCombines)
    for (auto tk : kTransmissionKinds)
      for (auto tt : kTransforms)
        for (auto dt : kTransforms)
          for (auto p : kPools)
            for (bool dn : {false, true}) {
              const auto v = EstimatorVariant{tk, tt, dt, c, p, dn}.canonical();
              if (seen.insert(to_string(v)).second) out.push_back(v);
            }
  return out;
}

inline double apply_transform(double x, Transform f) {
  switch (f) {
    case Transform::unit: return x;
    case Transform::log1p: return std::log1p(x);
    case Transform::loglog1p: return std::log1p(std::log1p(x));
  }
  return x;
}

inline ScalarMap transform(const ScalarMap& map, Transform f) {
  if (f == Transform::unit) return map;
  ScalarMap out = map;
  for (double& v : out.values()) v = apply_transform(v, f);
  return out;
}

inline double combine_values(double t, double d, Combine c) {
  switch (c) {
    case Combine::t_times_d: return t * d;
    case Combine::t_over_d: return t / std::max(d, kDivisionFloor);
    case Combine::d_over_t: return d / std::max(t, kDivisionFloor);
    case Combine::t_only: return t;
    case Combine::d_only: return d;
  }
  return t;
}

inline ScalarMap combine(const ScalarMap& t_map, const ScalarMap& d_map, Combine c) {
  if (!t_map.same_shape(d_map)) throw Error("combine: transmission and depth dimensions differ");
  ScalarMap out(t_map.width(), t_map.height());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = combine_values(t_map[i], d_map[i], c);
  return out;
}

namespace detail {

// k-th smallest (0-based) of a scratch buffer; reorders it.
inline double select(std::vector<double>& v, std::size_t k) {
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

inline std::size_t nearest_rank(std::size_t n, int percent) {
  const std::size_t rank = (static_cast<std::size_t>(percent) * n + 99) / 100;
  return std::max<std::size_t>(rank, 1) - 1;
}

}  // namespace detail

/// All five pooling statistics of `values`, indexed like kPools.
/// Percentiles use nearest rank; the median of an even count is the
/// midpoint of the two central values.
inline std::array<double, 5> pool_all(std::span<const double> values) {
  if (values.empty()) throw Error("cannot pool an empty map");
  const std::size_t n = values.size();
  std::vector<double> v(values.begin(), values.end());
  std::array<double, 5> out{};
  out[0] = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
  out[2] = *std::max_element(v.begin(), v.end());
  out[4] = detail::select(v, detail::nearest_rank(n, 90));
  out[3] = detail::select(v, detail::nearest_rank(n, 75));
  if (n % 2 == 1) {
    out[1] = detail::select(v, n / 2);
  } else {
    const double hi = detail::select(v, n / 2);
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2));
    out[1] = lo + (hi - lo) / 2;
  }
  return out;
}

inline double pool(const ScalarMap& map, Pool p) { return pool_all(map.values())[static_cast<std::size_t>(p)]; }

/// Scores already-computed maps. `depth` must be normalized by the caller
/// when the variant asks for it.
inline double score_maps(const ScalarMap& transmission, const ScalarMap& depth, const EstimatorVariant& variant) {
  const auto v = variant.canonical();
  const ScalarMap t = transform(transmission, v.t_transform);
  const ScalarMap d = transform(depth, v.d_transform);
  return pool(combine(t, d, v.combine), v.pool);
}

struct TransmissionEstimate {
  AtmosphericLight atmospheric_light;
  TransmissionMap raw;
  std::optional<TransmissionMap> refined;

  const TransmissionMap& get(TransmissionKind kind) const {
    if (kind == TransmissionKind::raw) return raw;
    if (!refined) throw InvariantError("refined transmission was not computed");
    return *refined;
  }
};

/// Dark channel -> atmospheric light -> raw transmission, then guided-filter
/// refinement when `refine` is set.
inline TransmissionEstimate estimate_transmission(const RasterImage& image, const DarkChannelParams& dc,
                                                  const GuidedFilterParams& gf, bool refine) {
  dc.validate();
  gf.validate();
  const auto dark = dark_channel(image, dc.patch_size);
  const auto a = estimate_atmospheric_light(image, dark);
  auto raw = raw_transmission(image, a, dc);
  std::optional<TransmissionMap> refined;
  if (refine) refined = guided_filter(raw, image, gf);
  return {a, std::move(raw), std::move(refined)};
}

struct HazeScore {
  double value;
  EstimatorVariant variant;
};

inline HazeScore estimate(const RasterImage& image, const DepthMap& depth, const EstimatorVariant& variant,
                          const DarkChannelParams& dc, const GuidedFilterParams& gf) {
  if (image.width() != depth.width() || image.height() != depth.height())
    throw Error("estimate: image and depth dimensions differ");
  const auto v = variant.canonical();
  const DepthMap d = v.depth_normalize ? normalize_depth(depth) : depth;
  if (!v.uses_transmission()) return {score_maps(d.map(), d.map(), v), v};
  const auto t = estimate_transmission(image, dc, gf, v.transmission == TransmissionKind::refined);
  const double value = score_maps(t.get(v.transmission), d.map(), v);
  if (!std::isfinite(value)) throw InvariantError("estimate produced a non-finite score");
  return {value, v};
}

}  // namespace hazelevel
