#pragma once

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "hazelevel/csv.hpp"
#include "hazelevel/dark_channel.hpp"
#include "hazelevel/depth.hpp"
#include "hazelevel/estimator.hpp"
#include "hazelevel/image.hpp"
#include "hazelevel/io.hpp"
#include "hazelevel/sample.hpp"

namespace hazelevel {

// ---------------------------------------------------------------------------
// Rank correlation

/// 1-based ranks; tied values share the mean of the ranks they span.
inline std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double mean_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

/// Two-sided p-value of a correlation under the Student-t approximation
/// t = rho * sqrt((n-2) / (1-rho^2)), n-2 degrees of freedom.
inline double t_approx_p_value(double rho, std::size_t n) {
  if (n < 3) throw Error("p-value needs at least 3 samples");
  const double r = std::abs(rho);
  if (r >= 1.0) return 0.0;
  const double t = r * std::sqrt(static_cast<double>(n - 2) / (1.0 - r * r));
  const boost::math::students_t dist(static_cast<double>(n - 2));
  return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, t)), 0.0, 1.0);
}

struct SpearmanResult {
  double rho;
  double p_value;
  std::size_t n;
};

inline SpearmanResult spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw Error("spearman: length mismatch (" + std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
  const std::size_t n = x.size();
  if (n < 3) throw Error("spearman: need at least 3 samples, got " + std::to_string(n));
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  // Average ranks always have mean (n+1)/2.
  const double mean = (static_cast<double>(n) + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = rx[i] - mean, dy = ry[i] - mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error("spearman: zero rank variance, correlation undefined");
  const double rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  return {rho, t_approx_p_value(rho, n), n};
}

// ---------------------------------------------------------------------------
// Pixel-statistics baselines. These are simple stand-ins for prior
// statistical haze measures, not part of the transmission/depth estimator.

enum class BaselineKind { mean_dark_channel, contrast_rms, saturation_mean };

inline constexpr std::array kBaselines = {BaselineKind::mean_dark_channel, BaselineKind::contrast_rms,
                                          BaselineKind::saturation_mean};

inline std::string_view to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::mean_dark_channel: return "mean_dark_channel";
    case BaselineKind::contrast_rms: return "contrast_rms";
    case BaselineKind::saturation_mean: return "saturation_mean";
  }
  return "?";
}

inline BaselineKind parse_baseline(std::string_view s) { return detail::parse_enum(s, kBaselines, "baseline"); }

inline double baseline_score(const RasterImage& image, BaselineKind kind, int patch_size = 15) {
  switch (kind) {
    case BaselineKind::mean_dark_channel: {
      const auto dark = dark_channel(image, patch_size);
      return std::accumulate(dark.values().begin(), dark.values().end(), 0.0) / static_cast<double>(dark.size());
    }
    case BaselineKind::contrast_rms: {
      // Deviations from the first pixel keep a constant image at exactly 0.
      const auto gray = grayscale(image);
      const double n = static_cast<double>(gray.size());
      double s1 = 0.0, s2 = 0.0;
      for (double v : gray.values()) {
        s1 += v - gray[0];
        s2 += (v - gray[0]) * (v - gray[0]);
      }
      return std::sqrt(std::max(0.0, s2 / n - (s1 / n) * (s1 / n)));
    }
    case BaselineKind::saturation_mean: {
      double total = 0.0;
      for (std::size_t i = 0; i < image.pixel_count(); ++i) {
        const double r = image.sample(i, 0), g = image.sample(i, 1), b = image.sample(i, 2);
        const double hi = std::max({r, g, b}), lo = std::min({r, g, b});
        total += hi > 0.0 ? (hi - lo) / hi : 0.0;
      }
      return total / static_cast<double>(image.pixel_count());
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Grid search

// A scoring method under evaluation: an estimator variant or a baseline.
struct Candidate {
  std::string id;
  Family family;
  std::optional<EstimatorVariant> variant;
  std::optional<BaselineKind> baseline;

  static Candidate of(const EstimatorVariant& v) { return {to_string(v), v.canonical().family(), v.canonical(), {}}; }
  static Candidate of(BaselineKind b) { return {"baseline:" + std::string(to_string(b)), Family::baseline, {}, b}; }
};

inline std::vector<Candidate> make_candidates(const std::vector<EstimatorVariant>& variants,
                                              const std::vector<BaselineKind>& baselines = {}) {
  std::vector<Candidate> out;
  for (const auto& v : variants) out.push_back(Candidate::of(v));
  for (auto b : baselines) out.push_back(Candidate::of(b));
  return out;
}

struct GridOptions {
  DarkChannelParams dark_channel;
  GuidedFilterParams guided_filter;
  double d_max = 300.0;
  int jobs = 1;
};

/// Runs fn(i) for i in [0, count) on `jobs` threads. Exceptions are
/// collected per index and the one with the lowest index is rethrown.
inline void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::max(1, jobs));
  if (threads == 1 || count <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(threads, count); ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Scores of every candidate on one image. Shared intermediates (the
/// transmission maps, transformed maps and combined maps) are computed once.
inline std::vector<double> score_candidates(const RasterImage& image, const DepthMap& depth,
                                            const std::vector<Candidate>& candidates, const GridOptions& options) {
  if (image.width() != depth.width() || image.height() != depth.height())
    throw Error("image and depth dimensions differ");
  bool need_t = false, need_refined = false;
  for (const auto& c : candidates) {
    if (c.variant && c.variant->uses_transmission()) {
      need_t = true;
      need_refined |= c.variant->transmission == TransmissionKind::refined;
    }
  }
  std::optional<TransmissionEstimate> trans;
  if (need_t) trans = estimate_transmission(image, options.dark_channel, options.guided_filter, need_refined);
  std::optional<DepthMap> normalized;

  std::map<std::pair<int, int>, ScalarMap> t_maps, d_maps;
  auto t_map = [&](TransmissionKind k, Transform f) -> const ScalarMap& {
    const auto key = std::pair{static_cast<int>(k), static_cast<int>(f)};
    auto it = t_maps.find(key);
    if (it == t_maps.end()) it = t_maps.emplace(key, transform(trans->get(k), f)).first;
    return it->second;
  };
  auto d_map = [&](bool norm, Transform f) -> const ScalarMap& {
    const auto key = std::pair{static_cast<int>(norm), static_cast<int>(f)};
    auto it = d_maps.find(key);
    if (it == d_maps.end()) {
      if (norm && !normalized) normalized = normalize_depth(depth);
      it = d_maps.emplace(key, transform(norm ? normalized->map() : depth.map(), f)).first;
    }
    return it->second;
  };

  using PoolKey = std::tuple<int, int, int, int, int>;
  std::map<PoolKey, std::array<double, 5>> pooled;
  std::vector<double> scores(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (c.baseline) {
      scores[i] = baseline_score(image, *c.baseline, options.dark_channel.patch_size);
      continue;
    }
    const auto& v = *c.variant;
    const PoolKey key{static_cast<int>(v.transmission), static_cast<int>(v.t_transform), static_cast<int>(v.d_transform),
                      static_cast<int>(v.combine), static_cast<int>(v.depth_normalize)};
    auto it = pooled.find(key);
    if (it == pooled.end()) {
      std::array<double, 5> stats{};
      if (v.combine == Combine::t_only) {
        stats = pool_all(t_map(v.transmission, v.t_transform).values());
      } else if (v.combine == Combine::d_only) {
        stats = pool_all(d_map(v.depth_normalize, v.d_transform).values());
      } else {
        const auto combined = combine(t_map(v.transmission, v.t_transform), d_map(v.depth_normalize, v.d_transform), v.combine);
        stats = pool_all(combined.values());
      }
      it = pooled.emplace(key, stats).first;
    }
    scores[i] = it->second[static_cast<std::size_t>(v.pool)];
  }
  return scores;
}

// Loads (image, depth) for sample index i.
using SampleLoader = std::function<std::pair<RasterImage, DepthMap>(std::size_t)>;

/// scores[candidate][sample]. Samples are processed in parallel; the result
/// does not depend on options.jobs.
inline std::vector<std::vector<double>> score_matrix(std::size_t sample_count, const SampleLoader& load,
                                                     const std::vector<Candidate>& candidates, const GridOptions& options) {
  std::vector<std::vector<double>> per_sample(sample_count);
  parallel_for(sample_count, options.jobs, [&](std::size_t s) {
    auto [image, depth] = load(s);
    per_sample[s] = score_candidates(image, depth, candidates, options);
  });
  std::vector<std::vector<double>> scores(candidates.size(), std::vector<double>(sample_count));
  for (std::size_t s = 0; s < sample_count; ++s)
    for (std::size_t c = 0; c < candidates.size(); ++c) scores[c][s] = per_sample[s][c];
  return scores;
}

struct EvalResult {
  std::string id;
  Family family;
  double rho;
  double spearman_abs;
  double p_value;
  std::size_t n;
};

/// |rho| of every candidate against the proxy, sorted by |rho| descending
/// then id. A candidate whose scores are all equal gets rho = 0, p = 1.
inline std::vector<EvalResult> evaluate_scores(const std::vector<Candidate>& candidates,
                                               const std::vector<std::vector<double>>& scores,
                                               std::span<const double> proxy) {
  if (proxy.size() < 3) throw Error("evaluation needs at least 3 samples, got " + std::to_string(proxy.size()));
  if (std::all_of(proxy.begin(), proxy.end(), [&](double v) { return v == proxy[0]; }))
    throw Error("ground-truth proxy is constant: zero rank variance");
  std::vector<EvalResult> results;
  results.reserve(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const auto& s = scores[c];
    EvalResult r{candidates[c].id, candidates[c].family, 0.0, 0.0, 1.0, proxy.size()};
    if (!std::all_of(s.begin(), s.end(), [&](double v) { return v == s[0]; })) {
      const auto sp = spearman(s, proxy);
      r.rho = sp.rho;
      r.spearman_abs = std::abs(sp.rho);
      r.p_value = sp.p_value;
    }
    results.push_back(std::move(r));
  }
  std::sort(results.begin(), results.end(), [](const EvalResult& a, const EvalResult& b) {
    return a.spearman_abs > b.spearman_abs || (a.spearman_abs == b.spearman_abs && a.id < b.id);
  });
  return results;
}

inline std::vector<double> proxy_values(const std::vector<LabeledSample>& samples) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.truth.value);
  return out;
}

/// Loads each sample's image and raw depth; errors name the sample.
inline SampleLoader file_loader(const std::vector<LabeledSample>& samples, double d_max) {
  return [&samples, d_max](std::size_t i) -> std::pair<RasterImage, DepthMap> {
    const auto& s = samples[i];
    try {
      auto image = load_image(s.image_path);
      DepthSource source = s.depth_source;
      source.normalize = false;
      auto depth = depth_for(source, Shape{image.width(), image.height()}, d_max);
      return {std::move(image), std::move(depth)};
    } catch (const Error& e) {
      throw Error("sample '" + s.image_path.string() + "': " + e.what());
    }
  };
}

inline std::vector<EvalResult> grid_search(const std::vector<LabeledSample>& samples,
                                           const std::vector<Candidate>& candidates, const GridOptions& options) {
  if (samples.empty()) throw Error("no samples to evaluate");
  for (const auto& s : samples) s.truth.validate();
  const auto proxy = proxy_values(samples);
  if (std::all_of(proxy.begin(), proxy.end(), [&](double v) { return v == proxy[0]; }))
    throw Error("ground-truth proxy is constant: zero rank variance");
  const auto scores = score_matrix(samples.size(), file_loader(samples, options.d_max), candidates, options);
  return evaluate_scores(candidates, scores, proxy);
}

/// Best result per family, in the order trans, depth, both, baselines.
inline std::vector<EvalResult> best_per_family(const std::vector<EvalResult>& sorted_results) {
  std::vector<EvalResult> out;
  for (auto f : {Family::trans, Family::depth, Family::both, Family::baseline}) {
    for (const auto& r : sorted_results) {
      if (r.family == f) {
        out.push_back(r);
        break;
      }
    }
  }
  return out;
}

inline const csv::Row& results_header() {
  static const csv::Row header{"variant", "spearman_abs", "rho", "p_value", "n"};
  return header;
}

inline void write_results(const std::filesystem::path& path, const std::vector<EvalResult>& results) {
  std::vector<csv::Row> rows;
  for (const auto& r : results)
    rows.push_back({r.id, detail::format_double(r.spearman_abs), detail::format_double(r.rho),
                    detail::format_double(r.p_value), std::to_string(r.n)});
  csv::write(path, results_header(), rows);
}

// ---------------------------------------------------------------------------
// Three-level calibration

enum class HazeClass { clear, light, heavy };

inline std::string_view to_string(HazeClass c) {
  switch (c) {
    case HazeClass::clear: return "Clear";
    case HazeClass::light: return "Light";
    case HazeClass::heavy: return "Heavy";
  }
  return "?";
}

// Cuts live in oriented score space: orientation * score.
struct CalibrationThresholds {
  double low_cut;
  double high_cut;
  int orientation;

  HazeClass classify(double score) const noexcept {
    const double s = orientation * score;
    if (s < low_cut) return HazeClass::clear;
    if (s < high_cut) return HazeClass::light;
    return HazeClass::heavy;
  }
};

/// Orientation from the sign of the rank correlation; cuts at midpoints
/// between adjacent class means. With a class missing, the cut(s) around
/// it collapse onto the neighbouring midpoint.
inline CalibrationThresholds calibrate(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error("calibrate: scores and labels differ in length");
  std::array<double, 3> sum{};
  std::array<std::size_t, 3> count{};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] > 2) throw Error("calibrate: labels must be 0, 1 or 2");
    sum[labels[i]] += scores[i];
    ++count[labels[i]];
  }
  const int classes = (count[0] > 0) + (count[1] > 0) + (count[2] > 0);
  if (classes < 2) throw Error("calibrate: need at least 2 distinct classes");

  std::vector<double> label_values(labels.begin(), labels.end());
  int orientation = 1;
  if (scores.size() >= 3) {
    const bool flat = std::all_of(scores.begin(), scores.end(), [&](double v) { return v == scores[0]; });
    if (flat) throw Error("calibrate: scores are constant");
    orientation = spearman(scores, label_values).rho < 0.0 ? -1 : 1;
  } else {
    double m_lo = 0, m_hi = 0;
    for (int c = 0, seen = 0; c < 3; ++c)
      if (count[c]) (seen++ == 0 ? m_lo : m_hi) = sum[c] / count[c];
    orientation = m_hi < m_lo ? -1 : 1;
  }

  std::array<std::optional<double>, 3> mean;
  for (int c = 0; c < 3; ++c)
    if (count[c]) mean[c] = orientation * sum[c] / static_cast<double>(count[c]);

  CalibrationThresholds cal{0.0, 0.0, orientation};
  if (mean[0] && mean[1] && mean[2]) {
    cal.low_cut = (*mean[0] + *mean[1]) / 2;
    cal.high_cut = (*mean[1] + *mean[2]) / 2;
  } else if (!mean[2]) {
    cal.low_cut = (*mean[0] + *mean[1]) / 2;
    cal.high_cut = std::numeric_limits<double>::max();
  } else if (!mean[0]) {
    cal.high_cut = (*mean[1] + *mean[2]) / 2;
    cal.low_cut = std::numeric_limits<double>::lowest();
  } else {
    cal.low_cut = (*mean[0] + *mean[2]) / 2;
    cal.high_cut = std::nextafter(cal.low_cut, std::numeric_limits<double>::infinity());
  }
  if (!(cal.low_cut < cal.high_cut))
    throw Error("calibrate: class means are not ordered after orientation; scores do not separate the classes");
  return cal;
}

inline void save_calibration(const CalibrationThresholds& cal, const std::filesystem::path& path) {
  const nlohmann::json j = {{"orientation", cal.orientation}, {"low_cut", cal.low_cut}, {"high_cut", cal.high_cut}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

inline CalibrationThresholds load_calibration(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  try {
    const auto j = nlohmann::json::parse(in);
    CalibrationThresholds cal{j.at("low_cut").get<double>(), j.at("high_cut").get<double>(), j.at("orientation").get<int>()};
    if (cal.orientation != 1 && cal.orientation != -1) throw Error("orientation must be +1 or -1");
    if (!(cal.low_cut < cal.high_cut)) throw Error("low_cut must be below high_cut");
    return cal;
  } catch (const nlohmann::json::exception& e) {
    throw Error("'" + path.string() + "': " + e.what());
  } catch (const Error& e) {
    throw Error("'" + path.string() + "': " + e.what());
  }
}

}  // namespace hazelevel
