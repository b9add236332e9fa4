#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "hazelevel/image.hpp"

namespace hazelevel {

// Where d(X) comes from for one sample.
struct DepthSource {
  enum class Kind { ground_truth, uniform, precomputed };

  Kind kind = Kind::uniform;
  std::filesystem::path path;  // file-based kinds only
  double value = 1.0;          // uniform only
  bool normalize = false;

  static DepthSource uniform_depth(double value) { return {Kind::uniform, {}, value, false}; }
  static DepthSource ground_truth_file(std::filesystem::path p) { return {Kind::ground_truth, std::move(p), 1.0, false}; }
  static DepthSource precomputed_file(std::filesystem::path p) { return {Kind::precomputed, std::move(p), 1.0, false}; }

  void validate() const {
    if (kind == Kind::uniform) {
      if (!(value > 0.0)) throw Error("uniform depth must be > 0");
    } else if (path.empty()) {
      throw Error("file-based depth source needs a path");
    }
  }
};

inline std::string_view to_string(DepthSource::Kind k) {
  switch (k) {
    case DepthSource::Kind::ground_truth: return "ground_truth";
    case DepthSource::Kind::uniform: return "uniform";
    case DepthSource::Kind::precomputed: return "precomputed";
  }
  return "?";
}

inline DepthSource::Kind parse_depth_kind(std::string_view s) {
  if (s == "ground_truth") return DepthSource::Kind::ground_truth;
  if (s == "uniform") return DepthSource::Kind::uniform;
  if (s == "precomputed") return DepthSource::Kind::precomputed;
  throw Error("unknown depth kind '" + std::string(s) + "'");
}

// Ground-truth haze proxy attached to a photo.
struct Truth {
  enum class Kind { k_true, pm25, ordinal };

  Kind kind = Kind::k_true;
  double value = 0.0;

  void validate() const {
    if (!std::isfinite(value)) throw Error("truth value must be finite");
    if (kind == Kind::pm25 && value < 0.0) throw Error("pm25 must be >= 0");
    if (kind == Kind::ordinal && value != 0.0 && value != 1.0 && value != 2.0)
      throw Error("ordinal truth must be 0, 1 or 2");
  }
};

inline std::string_view to_string(Truth::Kind k) {
  switch (k) {
    case Truth::Kind::k_true: return "k_true";
    case Truth::Kind::pm25: return "pm25";
    case Truth::Kind::ordinal: return "ordinal";
  }
  return "?";
}

inline Truth::Kind parse_truth_kind(std::string_view s) {
  if (s == "k_true") return Truth::Kind::k_true;
  if (s == "pm25") return Truth::Kind::pm25;
  if (s == "ordinal") return Truth::Kind::ordinal;
  throw Error("unknown truth kind '" + std::string(s) + "'");
}

struct LabeledSample {
  std::filesystem::path image_path;
  DepthSource depth_source;
  Truth truth;
  std::optional<std::chrono::sys_seconds> timestamp;
};

}  // namespace hazelevel
