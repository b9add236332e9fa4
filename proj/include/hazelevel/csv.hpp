#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hazelevel/image.hpp"

namespace hazelevel::csv {

using Row = std::vector<std::string>;

// Splits one line; supports double-quoted fields with "" escapes.
inline Row split_line(std::string_view line) {
  Row fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back().push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back().push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back().push_back(c);
    }
  }
  return fields;
}

inline std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::string join(const Row& row) {
  std::string out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out.push_back(',');
    out += quote(row[i]);
  }
  return out;
}

struct Table {
  Row header;
  std::vector<Row> rows;
};

/// Reads a CSV with a header line. Blank lines are skipped. Throws if the
/// file is missing or empty, or if the header differs from `expected`.
inline Table read(const std::filesystem::path& path, const Row& expected) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  Table table;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    if (!have_header) {
      if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);
      table.header = split_line(line);
      have_header = true;
      continue;
    }
    table.rows.push_back(split_line(line));
  }
  if (!have_header) throw Error("'" + path.string() + "' is empty");
  if (table.header != expected)
    throw Error("'" + path.string() + "': malformed header, expected '" + join(expected) + "'");
  return table;
}

inline void write(const std::filesystem::path& path, const Row& header, const std::vector<Row>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << join(header) << '\n';
  for (const auto& r : rows) out << join(r) << '\n';
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

}  // namespace hazelevel::csv
