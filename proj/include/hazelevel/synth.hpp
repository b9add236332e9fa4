#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "hazelevel/csv.hpp"
#include "hazelevel/image.hpp"
#include "hazelevel/io.hpp"

namespace hazelevel {

enum class ConditionKind { uniform, hetero_k, cloudy_sky, cloudy_hetero };

inline constexpr std::array<ConditionKind, 4> kAllConditions = {ConditionKind::uniform, ConditionKind::hetero_k,
                                                                 ConditionKind::cloudy_sky, ConditionKind::cloudy_hetero};

inline std::string_view to_string(ConditionKind k) {
  switch (k) {
    case ConditionKind::uniform: return "uniform";
    case ConditionKind::hetero_k: return "hetero-k";
    case ConditionKind::cloudy_sky: return "cloudy-sky";
    case ConditionKind::cloudy_hetero: return "cloudy-hetero";
  }
  return "?";
}

inline ConditionKind parse_condition(std::string_view s) {
  for (auto k : kAllConditions)
    if (to_string(k) == s) return k;
  throw Error("unknown haze condition '" + std::string(s) + "'");
}

inline bool varies_k(ConditionKind k) { return k == ConditionKind::hetero_k || k == ConditionKind::cloudy_hetero; }
inline bool varies_sky(ConditionKind k) { return k == ConditionKind::cloudy_sky || k == ConditionKind::cloudy_hetero; }

struct HazeCondition {
  ConditionKind kind = ConditionKind::uniform;
  double k = 0.01;
  std::array<double, 3> sky_luminance = {0.92, 0.93, 0.95};
  std::uint64_t noise_seed = 1;
  double noise_strength = 0.3;

  void validate() const {
    if (!(k > 0.0) || !std::isfinite(k)) throw Error("haze k must be > 0");
    for (double s : sky_luminance)
      if (!(s > 0.0 && s <= 1.0)) throw Error("sky luminance must lie in (0,1]");
    if (!(noise_strength >= 0.0)) throw Error("noise strength must be >= 0");
  }
};

struct SynthSettings {
  std::vector<double> k_levels;
  std::vector<ConditionKind> conditions{kAllConditions.begin(), kAllConditions.end()};
  std::array<double, 3> sky_luminance = {0.92, 0.93, 0.95};
  double noise_strength = 0.3;
  std::uint64_t seed = 1;

  void validate() const {
    if (k_levels.empty()) throw Error("at least one k level is required");
    for (std::size_t i = 0; i < k_levels.size(); ++i) {
      if (!(k_levels[i] > 0.0)) throw Error("k levels must be > 0");
      if (i && !(k_levels[i] > k_levels[i - 1])) throw Error("k levels must be strictly increasing");
    }
    if (conditions.empty()) throw Error("at least one haze condition is required");
  }
};

namespace detail {

inline double unit_interval(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace detail

/// Smooth zero-mean field in [-1,1]: an 8x8 grid of seeded uniform values,
/// bilinearly upsampled to width x height. `stream` selects an independent
/// field for the same seed.
inline ScalarMap smooth_noise(int width, int height, std::uint64_t seed, std::uint32_t stream = 0) {
  constexpr int grid = 8;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  std::mt19937_64 rng(seq);
  std::array<double, grid * grid> nodes{};
  for (double& v : nodes) v = 2.0 * detail::unit_interval(rng) - 1.0;

  ScalarMap field(width, height);
  for (int y = 0; y < height; ++y) {
    const double gy = height > 1 ? static_cast<double>(y) * (grid - 1) / (height - 1) : 0.0;
    const int y0 = std::min(grid - 2, static_cast<int>(gy));
    const double fy = gy - y0;
    for (int x = 0; x < width; ++x) {
      const double gx = width > 1 ? static_cast<double>(x) * (grid - 1) / (width - 1) : 0.0;
      const int x0 = std::min(grid - 2, static_cast<int>(gx));
      const double fx = gx - x0;
      const double top = nodes[y0 * grid + x0] * (1 - fx) + nodes[y0 * grid + x0 + 1] * fx;
      const double bottom = nodes[(y0 + 1) * grid + x0] * (1 - fx) + nodes[(y0 + 1) * grid + x0 + 1] * fx;
      field(x, y) = std::clamp(top * (1 - fy) + bottom * fy, -1.0, 1.0);
    }
  }
  return field;
}

/// L(X) = L0(X) t(X) + Ls(X) (1 - t(X)),  t(X) = exp(-k(X) d(X)).
/// Heterogeneous kinds modulate k and/or Ls with seeded smooth noise.
inline RasterImage apply_haze(const RasterImage& scene, const DepthMap& depth, const HazeCondition& cond) {
  cond.validate();
  if (scene.width() != depth.width() || scene.height() != depth.height())
    throw Error("apply_haze: scene and depth dimensions differ");
  const RasterImage rgb = scene.to_rgb();
  const int w = scene.width(), h = scene.height();
  const bool hetero = varies_k(cond.kind) && cond.noise_strength > 0.0;
  const bool cloudy = varies_sky(cond.kind) && cond.noise_strength > 0.0;
  const ScalarMap k_noise = hetero ? smooth_noise(w, h, cond.noise_seed, 0) : ScalarMap(1, 1);
  const ScalarMap sky_noise = cloudy ? smooth_noise(w, h, cond.noise_seed, 1) : ScalarMap(1, 1);

  RasterImage out(w, h, 3);
  auto src = rgb.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < rgb.pixel_count(); ++i) {
    const double k = hetero ? std::max(0.0, cond.k * (1.0 + cond.noise_strength * k_noise[i])) : cond.k;
    const double t = std::exp(-k * depth[i]);
    for (int c = 0; c < 3; ++c) {
      double sky = cond.sky_luminance[c];
      if (cloudy) sky = std::clamp(sky * (1.0 + cond.noise_strength * sky_noise[i]), 1e-3, 1.0);
      dst[3 * i + c] = std::clamp(src[3 * i + c] * t + sky * (1.0 - t), 0.0, 1.0);
    }
  }
  return out;
}

/// Nine (or `count`) evenly spaced levels over [0.2, 1.8] * k_ref, where
/// exp(-k_ref * median depth) = 0.5. Pixels at d_max (sky) are left out of
/// the median when anything else is present.
inline std::vector<double> default_k_levels(const DepthMap& depth, int count = 9) {
  if (count < 1) throw Error("k level count must be >= 1");
  std::vector<double> finite;
  for (double v : depth.map().values())
    if (v < depth.d_max() && v > 0.0) finite.push_back(v);
  if (finite.empty())
    for (double v : depth.map().values())
      if (v > 0.0) finite.push_back(v);
  double median = 1.0;
  if (!finite.empty()) {
    auto mid = finite.begin() + static_cast<std::ptrdiff_t>(finite.size() / 2);
    std::nth_element(finite.begin(), mid, finite.end());
    median = *mid;
  }
  const double k_ref = std::numbers::ln2 / median;
  if (count == 1) return {k_ref};
  std::vector<double> levels(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) levels[i] = k_ref * (0.2 + 1.6 * i / (count - 1));
  return levels;
}

struct HazedImage {
  ConditionKind condition;
  int level;  // 1-based index into k_levels
  double k;
  RasterImage image;
};

/// Every (condition, level) rendering of one scene, condition-major. All
/// levels of a condition share that condition's noise fields.
inline std::vector<HazedImage> render_stack(const RasterImage& scene, const DepthMap& depth, const SynthSettings& settings) {
  settings.validate();
  std::vector<HazedImage> out;
  out.reserve(settings.k_levels.size() * settings.conditions.size());
  for (auto kind : settings.conditions) {
    HazeCondition cond;
    cond.kind = kind;
    cond.sky_luminance = settings.sky_luminance;
    cond.noise_strength = settings.noise_strength;
    cond.noise_seed = settings.seed * 4 + static_cast<std::uint64_t>(kind);
    for (std::size_t l = 0; l < settings.k_levels.size(); ++l) {
      cond.k = settings.k_levels[l];
      out.push_back({kind, static_cast<int>(l + 1), cond.k, apply_haze(scene, depth, cond)});
    }
  }
  return out;
}

struct ManifestRow {
  std::filesystem::path path;
  std::string scene_id;
  std::string condition;  // "original" for the haze-free image
  double k_true = 0.0;
};

inline const csv::Row& manifest_header() {
  static const csv::Row header{"path", "scene_id", "condition", "k_true"};
  return header;
}

struct StackFiles {
  std::vector<ManifestRow> rows;
  std::filesystem::path depth_path;
};

/// Writes the original scene, its depth (PFM) and every hazed rendering into
/// out_dir. Row paths are relative to out_dir.
inline StackFiles generate_stack(const RasterImage& scene, const DepthMap& depth, const std::string& scene_id,
                                 const SynthSettings& settings, const std::filesystem::path& out_dir) {
  settings.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error("cannot create '" + out_dir.string() + "': " + ec.message());

  StackFiles files;
  files.depth_path = scene_id + "_depth.pfm";
  save_map(depth.map(), out_dir / files.depth_path);
  const std::string original = scene_id + ".png";
  save_image(scene.to_rgb(), out_dir / original);
  files.rows.push_back({original, scene_id, "original", 0.0});
  for (auto& hazed : render_stack(scene, depth, settings)) {
    const std::string name = scene_id + "_" + std::string(to_string(hazed.condition)) + "_" + std::to_string(hazed.level) + ".png";
    save_image(hazed.image, out_dir / name);
    files.rows.push_back({name, scene_id, std::string(to_string(hazed.condition)), hazed.k});
  }
  return files;
}

inline void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows) {
  std::vector<csv::Row> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back({r.path.generic_string(), r.scene_id, r.condition, detail::format_double(r.k_true)});
  csv::write(path, manifest_header(), out);
}

/// Relative paths are resolved against the manifest's directory.
inline std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  const auto table = csv::read(path, manifest_header());
  std::vector<ManifestRow> rows;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    const auto k = r.size() == 4 ? detail::parse_double(r[3]) : std::nullopt;
    if (!k) throw Error("'" + path.string() + "': bad row " + std::to_string(i + 2));
    std::filesystem::path p = r[0];
    if (p.is_relative()) p = path.parent_path() / p;
    rows.push_back({p, r[1], r[2], *k});
  }
  return rows;
}

}  // namespace hazelevel
