#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "hazelevel/csv.hpp"
#include "hazelevel/io.hpp"
#include "hazelevel/sample.hpp"

namespace hazelevel {

using Timestamp = std::chrono::sys_seconds;

namespace detail {

inline bool parse_fixed(std::string_view s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  auto res = std::from_chars(s.data() + pos, s.data() + pos + len, out);
  return res.ec == std::errc() && res.ptr == s.data() + pos + len;
}

}  // namespace detail

/// ISO-8601 date-time: `YYYY-MM-DD[T ]HH:MM[:SS[.fff]]` followed by `Z`,
/// `+HH:MM`, `+HHMM` or nothing (taken as UTC). Fractions are truncated.
inline std::optional<Timestamp> parse_timestamp(std::string_view s) {
  using namespace std::chrono;
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  if (!detail::parse_fixed(s, 0, 4, y) || s.size() < 16 || s[4] != '-' || !detail::parse_fixed(s, 5, 2, mo) ||
      s[7] != '-' || !detail::parse_fixed(s, 8, 2, d) || (s[10] != 'T' && s[10] != ' ') ||
      !detail::parse_fixed(s, 11, 2, h) || s[13] != ':' || !detail::parse_fixed(s, 14, 2, mi))
    return std::nullopt;
  std::size_t pos = 16;
  if (pos < s.size() && s[pos] == ':') {
    if (!detail::parse_fixed(s, pos + 1, 2, sec)) return std::nullopt;
    pos += 3;
    if (pos < s.size() && s[pos] == '.') {
      ++pos;
      const std::size_t start = pos;
      while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
      if (pos == start) return std::nullopt;
    }
  }
  int offset_minutes = 0;
  if (pos < s.size()) {
    const char sign = s[pos];
    if (sign == 'Z' && pos + 1 == s.size()) {
      pos += 1;
    } else if (sign == '+' || sign == '-') {
      int oh = 0, om = 0;
      const std::string_view rest = s.substr(pos + 1);
      if (rest.size() == 5 && rest[2] == ':') {
        if (!detail::parse_fixed(rest, 0, 2, oh) || !detail::parse_fixed(rest, 3, 2, om)) return std::nullopt;
      } else if (rest.size() == 4) {
        if (!detail::parse_fixed(rest, 0, 2, oh) || !detail::parse_fixed(rest, 2, 2, om)) return std::nullopt;
      } else if (rest.size() == 2) {
        if (!detail::parse_fixed(rest, 0, 2, oh)) return std::nullopt;
      } else {
        return std::nullopt;
      }
      if (oh > 23 || om > 59) return std::nullopt;
      offset_minutes = (sign == '+' ? 1 : -1) * (oh * 60 + om);
      pos = s.size();
    } else {
      return std::nullopt;
    }
  }
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 60) return std::nullopt;
  return sys_days{ymd} + hours{h} + minutes{mi} + seconds{sec} - minutes{offset_minutes};
}

/// `YYYY-MM-DDTHH:MM:SSZ`.
inline std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const hh_mm_ss hms{t - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                static_cast<long>(hms.seconds().count()));
  return buf;
}

struct PM25Record {
  Timestamp hour;
  double value;
};

struct PM25Load {
  std::vector<PM25Record> records;
  std::size_t dropped = 0;
};

/// Reads `timestamp,pm25` rows. Timestamps are truncated to the hour.
/// Rows with unparseable timestamps, non-numeric / negative / non-finite
/// values, or an hour already seen are dropped and counted.
inline PM25Load load_pm25(const std::filesystem::path& path) {
  const auto table = csv::read(path, {"timestamp", "pm25"});
  if (table.rows.empty()) throw Error("'" + path.string() + "' contains no records");
  PM25Load out;
  std::set<Timestamp> seen;
  for (const auto& row : table.rows) {
    const auto t = row.size() == 2 ? parse_timestamp(row[0]) : std::nullopt;
    const auto v = row.size() == 2 ? detail::parse_double(row[1]) : std::nullopt;
    if (!t || !v || !std::isfinite(*v) || *v < 0.0) {
      ++out.dropped;
      continue;
    }
    const auto hour = std::chrono::floor<std::chrono::hours>(*t);
    if (!seen.insert(hour).second) {
      ++out.dropped;
      continue;
    }
    out.records.push_back({hour, *v});
  }
  std::sort(out.records.begin(), out.records.end(), [](const auto& a, const auto& b) { return a.hour < b.hour; });
  return out;
}

struct PhotoRow {
  std::filesystem::path path;
  std::optional<Timestamp> time;  // empty when the row is invalid
};

/// Reads a `path,timestamp` manifest. Rows with a bad timestamp or field
/// count are kept with an empty time so callers can account for them.
inline std::vector<PhotoRow> read_photo_manifest(const std::filesystem::path& path) {
  const auto table = csv::read(path, {"path", "timestamp"});
  std::vector<PhotoRow> rows;
  rows.reserve(table.rows.size());
  for (const auto& r : table.rows) {
    if (r.size() != 2 || r[0].empty()) {
      rows.push_back({r.empty() ? std::string() : r[0], std::nullopt});
      continue;
    }
    std::filesystem::path p = r[0];
    if (p.is_relative()) p = path.parent_path() / p;
    rows.push_back({p, parse_timestamp(r[1])});
  }
  return rows;
}

struct JoinOptions {
  double tolerance_minutes = 30.0;
  // Depth source given to every joined photo; with depth_dir set, each photo
  // instead gets depth_dir/<stem>.pfm as a precomputed source.
  DepthSource depth = DepthSource::uniform_depth(1.0);
  std::filesystem::path depth_dir;
};

struct JoinResult {
  std::vector<LabeledSample> samples;
  std::size_t excluded = 0;
  std::size_t invalid = 0;
};

/// Matches each photo to the nearest record hour (earlier hour on an exact
/// tie). Photos farther than the tolerance from every record are excluded.
/// Output is sorted by path, then timestamp.
inline JoinResult join_photos(const std::vector<PhotoRow>& photos, const std::vector<PM25Record>& records,
                              const JoinOptions& options) {
  if (records.empty()) throw Error("join: no PM2.5 records");
  if (!(options.tolerance_minutes >= 0.0)) throw Error("join: tolerance must be >= 0");
  std::vector<PM25Record> sorted = records;
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.hour < b.hour; });
  const double tolerance_s = options.tolerance_minutes * 60.0;

  JoinResult out;
  for (const auto& photo : photos) {
    if (!photo.time) {
      ++out.invalid;
      continue;
    }
    const Timestamp t = *photo.time;
    auto it = std::lower_bound(sorted.begin(), sorted.end(), t, [](const PM25Record& r, Timestamp v) { return r.hour < v; });
    const PM25Record* best = nullptr;
    double best_gap = 0.0;
    if (it != sorted.begin()) {
      best = &*std::prev(it);
      best_gap = static_cast<double>((t - best->hour).count());
    }
    if (it != sorted.end()) {
      const double gap = static_cast<double>((it->hour - t).count());
      if (!best || gap < best_gap) {
        best = &*it;
        best_gap = gap;
      }
    }
    if (best_gap > tolerance_s) {
      ++out.excluded;
      continue;
    }
    LabeledSample s;
    s.image_path = photo.path;
    s.truth = {Truth::Kind::pm25, best->value};
    s.timestamp = t;
    if (!options.depth_dir.empty()) {
      s.depth_source = DepthSource::precomputed_file(options.depth_dir / (photo.path.stem().string() + ".pfm"));
    } else {
      s.depth_source = options.depth;
    }
    out.samples.push_back(std::move(s));
  }
  std::sort(out.samples.begin(), out.samples.end(), [](const LabeledSample& a, const LabeledSample& b) {
    return a.image_path != b.image_path ? a.image_path < b.image_path : a.timestamp < b.timestamp;
  });
  return out;
}

inline JoinResult join_photos(const std::filesystem::path& manifest, const std::vector<PM25Record>& records,
                              const JoinOptions& options) {
  return join_photos(read_photo_manifest(manifest), records, options);
}

inline const csv::Row& samples_header() {
  static const csv::Row header{"path", "truth_kind", "truth_value", "depth_kind", "depth_path"};
  return header;
}

/// Uniform depth sources store their value in the depth_path column.
inline void write_samples(const std::filesystem::path& path, const std::vector<LabeledSample>& samples) {
  std::vector<csv::Row> rows;
  rows.reserve(samples.size());
  for (const auto& s : samples) {
    const auto& d = s.depth_source;
    rows.push_back({s.image_path.generic_string(), std::string(to_string(s.truth.kind)),
                    detail::format_double(s.truth.value), std::string(to_string(d.kind)),
                    d.kind == DepthSource::Kind::uniform ? detail::format_double(d.value) : d.path.generic_string()});
  }
  csv::write(path, samples_header(), rows);
}

/// Relative image and depth paths resolve against the CSV's directory.
inline std::vector<LabeledSample> read_samples(const std::filesystem::path& path) {
  const auto table = csv::read(path, samples_header());
  std::vector<LabeledSample> out;
  out.reserve(table.rows.size());
  auto resolve = [&](std::filesystem::path p) { return p.is_relative() ? path.parent_path() / p : p; };
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    const std::string where = "'" + path.string() + "' row " + std::to_string(i + 2);
    if (r.size() != 5) throw Error(where + ": expected 5 fields");
    LabeledSample s;
    s.image_path = resolve(r[0]);
    try {
      s.truth.kind = parse_truth_kind(r[1]);
      const auto v = detail::parse_double(r[2]);
      if (!v) throw Error("bad truth value '" + r[2] + "'");
      s.truth.value = *v;
      s.truth.validate();
      s.depth_source.kind = parse_depth_kind(r[3]);
      if (s.depth_source.kind == DepthSource::Kind::uniform) {
        const auto dv = detail::parse_double(r[4]);
        if (!dv) throw Error("uniform depth needs a numeric value, got '" + r[4] + "'");
        s.depth_source.value = *dv;
      } else {
        s.depth_source.path = resolve(r[4]);
      }
      s.depth_source.validate();
    } catch (const Error& e) {
      throw Error(where + ": " + e.what());
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace hazelevel
