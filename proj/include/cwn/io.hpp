#pragma once

// ASCII point-cloud side files. Every format is one record per line, fields
// separated by whitespace, LF line endings:
//   .xyz      "x y z"
//   .normals  "nx ny nz"   (row-aligned with .xyz)
//   .conf     "c"
//   .pidx     "i"          (query subset)
// Reals are written with 17 significant digits so doubles round-trip exactly.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cwn/error.hpp"
#include "cwn/point_cloud.hpp"

namespace cwn::io {

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view tok, const std::string& path, std::size_t line_no) {
  T value{};
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (!tok.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw Error(ErrorKind::parse, path + ":" + std::to_string(line_no) + ": cannot parse '" +
                                      std::string(tok) + "'");
  }
  return value;
}

/// Calls `fn(tokens, line_no)` for every non-blank line; throws when the file
/// cannot be opened or holds no records.
template <typename Fn>
void for_each_record(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  std::size_t records = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    fn(tokens, line_no);
    ++records;
  }
  if (records == 0) throw Error(ErrorKind::empty_input, "'" + path + "' holds no records");
}

inline std::vector<Vec3> read_triples(const std::string& path) {
  std::vector<Vec3> out;
  for_each_record(path, [&](const std::vector<std::string_view>& tok, std::size_t line_no) {
    if (tok.size() != 3) {
      throw Error(ErrorKind::parse, path + ":" + std::to_string(line_no) + ": expected 3 values, got " +
                                        std::to_string(tok.size()));
    }
    out.emplace_back(parse_number<double>(tok[0], path, line_no),
                     parse_number<double>(tok[1], path, line_no),
                     parse_number<double>(tok[2], path, line_no));
  });
  return out;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write '" + path + "'");
  return out;
}

}  // namespace detail

/// Formats a double with 17 significant digits (lossless).
inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline PointCloud load_xyz(const std::string& path) {
  return PointCloud(detail::read_triples(path));
}

/// Raw vectors as stored; callers decide whether to renormalize.
inline std::vector<Vec3> load_normals(const std::string& path) { return detail::read_triples(path); }

inline std::vector<double> load_conf(const std::string& path) {
  std::vector<double> out;
  detail::for_each_record(path, [&](const auto& tok, std::size_t line_no) {
    if (tok.size() != 1) {
      throw Error(ErrorKind::parse, path + ":" + std::to_string(line_no) + ": expected 1 value");
    }
    out.push_back(detail::parse_number<double>(tok[0], path, line_no));
  });
  return out;
}

inline std::vector<std::size_t> load_pidx(const std::string& path) {
  std::vector<std::size_t> out;
  detail::for_each_record(path, [&](const auto& tok, std::size_t line_no) {
    if (tok.size() != 1) {
      throw Error(ErrorKind::parse, path + ":" + std::to_string(line_no) + ": expected 1 index");
    }
    out.push_back(detail::parse_number<std::uint64_t>(tok[0], path, line_no));
  });
  return out;
}

inline void save_triples(const std::string& path, const std::vector<Vec3>& v) {
  auto out = detail::open_out(path);
  for (const auto& p : v) {
    out << format_real(p.x()) << ' ' << format_real(p.y()) << ' ' << format_real(p.z()) << '\n';
  }
  if (!out) throw Error(ErrorKind::io, "write failed for '" + path + "'");
}

inline void save_xyz(const std::string& path, const PointCloud& cloud) {
  save_triples(path, cloud.points());
}

inline void save_normals(const std::string& path, const std::vector<Vec3>& normals) {
  save_triples(path, normals);
}

inline void save_conf(const std::string& path, const std::vector<double>& conf) {
  auto out = detail::open_out(path);
  for (double c : conf) out << format_real(c) << '\n';
  if (!out) throw Error(ErrorKind::io, "write failed for '" + path + "'");
}

inline void save_pidx(const std::string& path, const std::vector<std::size_t>& idx) {
  auto out = detail::open_out(path);
  for (auto i : idx) out << i << '\n';
  if (!out) throw Error(ErrorKind::io, "write failed for '" + path + "'");
}

/// Loads an .xyz file together with its row-aligned .normals file.
inline PointCloud load_xyz_with_normals(const std::string& xyz, const std::string& normals) {
  PointCloud cloud = load_xyz(xyz);
  auto n = load_normals(normals);
  if (n.size() != cloud.size()) {
    throw Error(ErrorKind::size, "'" + normals + "' has " + std::to_string(n.size()) +
                                     " rows, cloud has " + std::to_string(cloud.size()));
  }
  cloud.set_normals(normalized(std::move(n)));
  return cloud;
}

}  // namespace cwn::io
