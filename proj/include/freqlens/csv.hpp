#pragma once

// Feature CSV (`id,label,cluster,f0,...`) and plain numeric CSV readers.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "freqlens/matrix.hpp"
#include "freqlens/separation.hpp"

namespace freqlens {

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline double parse_double(std::string_view s, const std::string& where) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw std::runtime_error(where + ": not a finite number: '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace detail

struct LabeledFeatures {
  FeatureSet set;
  std::vector<std::string> ids;
};

inline LabeledFeatures parse_feature_csv(const std::vector<std::string>& lines, const std::string& name) {
  if (lines.empty()) throw std::runtime_error(name + ": empty file");
  const auto header = detail::split_csv_line(lines.front());
  if (header.size() < 4 || header[0] != "id" || header[1] != "label" || header[2] != "cluster")
    throw std::runtime_error(name + ": header must be id,label,cluster,f0,...");
  const std::size_t d = header.size() - 3;
  for (std::size_t j = 0; j < d; ++j)
    if (header[3 + j] != "f" + std::to_string(j))
      throw std::runtime_error(name + ": feature column " + std::to_string(j) + " must be named f" + std::to_string(j));

  LabeledFeatures out;
  out.set.features = Matrix(lines.size() - 1, d);
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const std::string where = name + ":" + std::to_string(r + 1);
    const auto cells = detail::split_csv_line(lines[r]);
    if (cells.size() != header.size()) throw std::runtime_error(where + ": expected " + std::to_string(header.size()) + " fields");
    out.ids.emplace_back(cells[0]);
    if (cells[1] != "0" && cells[1] != "1") throw std::runtime_error(where + ": label must be 0 or 1");
    out.set.labels.push_back(cells[1] == "1" ? 1 : 0);
    out.set.clusters.emplace_back(cells[2]);
    for (std::size_t j = 0; j < d; ++j) out.set.features(r - 1, j) = detail::parse_double(cells[3 + j], where);
  }
  return out;
}

inline LabeledFeatures read_feature_csv(const std::filesystem::path& path) {
  return parse_feature_csv(detail::read_lines(path), path.string());
}

inline void write_feature_csv(std::ostream& os, const FeatureSet& fs, const std::vector<std::string>& ids = {}) {
  os << "id,label,cluster";
  for (std::size_t j = 0; j < fs.dims(); ++j) os << ",f" << j;
  os << '\n';
  os.precision(17);
  for (std::size_t i = 0; i < fs.size(); ++i) {
    os << (ids.empty() ? std::to_string(i) : ids[i]) << ',' << fs.labels[i] << ',' << fs.clusters[i];
    for (std::size_t j = 0; j < fs.dims(); ++j) os << ',' << fs.features(i, j);
    os << '\n';
  }
}

/// Concatenates feature sets; all must share one feature dimension.
inline LabeledFeatures merge_features(const std::vector<LabeledFeatures>& parts, const std::vector<std::string>& names) {
  if (parts.empty()) throw std::invalid_argument("merge_features: nothing to merge");
  const std::size_t d = parts.front().set.dims();
  std::size_t rows = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    if (parts[k].set.dims() != d)
      throw std::invalid_argument("feature dimension mismatch: " + names.front() + " has " + std::to_string(d) + ", " +
                                  names[k] + " has " + std::to_string(parts[k].set.dims()));
    rows += parts[k].set.size();
  }
  LabeledFeatures out;
  out.set.features = Matrix(rows, d);
  std::size_t r = 0;
  for (const LabeledFeatures& p : parts) {
    for (std::size_t i = 0; i < p.set.size(); ++i, ++r) {
      for (std::size_t j = 0; j < d; ++j) out.set.features(r, j) = p.set.features(i, j);
      out.set.labels.push_back(p.set.labels[i]);
      out.set.clusters.push_back(p.set.clusters[i]);
      out.ids.push_back(p.ids[i]);
    }
  }
  return out;
}

struct NumericTable {
  std::vector<std::string> names;
  std::vector<Vector> columns;
};

/// Numeric CSV with a header row; every cell must be a finite number.
inline NumericTable read_numeric_csv(const std::filesystem::path& path) {
  const auto lines = detail::read_lines(path);
  const std::string name = path.string();
  if (lines.empty()) throw std::runtime_error(name + ": empty file");
  NumericTable t;
  for (auto h : detail::split_csv_line(lines.front())) t.names.emplace_back(h);
  t.columns.assign(t.names.size(), {});
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto cells = detail::split_csv_line(lines[r]);
    const std::string where = name + ":" + std::to_string(r + 1);
    if (cells.size() != t.names.size()) throw std::runtime_error(where + ": wrong number of fields");
    for (std::size_t j = 0; j < cells.size(); ++j) t.columns[j].push_back(detail::parse_double(cells[j], where));
  }
  return t;
}

}  // namespace freqlens
