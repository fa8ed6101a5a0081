#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "matpac/error.hpp"

namespace matpac {

/// One row of a dataset manifest.
struct ManifestEntry {
  std::string path;                 ///< resolved against the manifest's directory
  std::vector<std::string> labels;  ///< empty for unlabeled pretraining data
  std::string split;                ///< "train" | "valid" | "test", empty when the manifest is fold-based
  std::optional<int> fold;
};

/// CSV manifest with header `path,labels,split` or `path,labels,fold`.
/// Labels are pipe-separated for multi-label tasks. The third column is optional
/// for pretraining manifests.
struct Manifest {
  std::vector<ManifestEntry> entries;
  bool has_split = false;
  bool has_fold = false;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }

  /// Sorted distinct label names.
  std::vector<std::string> label_set() const {
    std::vector<std::string> all;
    for (const auto& e : entries) all.insert(all.end(), e.labels.begin(), e.labels.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    return all;
  }

  /// Sorted distinct fold ids.
  std::vector<int> folds() const {
    std::vector<int> f;
    for (const auto& e : entries)
      if (e.fold) f.push_back(*e.fold);
    std::sort(f.begin(), f.end());
    f.erase(std::unique(f.begin(), f.end()), f.end());
    return f;
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::vector<std::string> split_labels(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, '|'))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace detail

inline Manifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir = {}) {
  std::string line;
  if (!std::getline(in, line)) throw DomainError("manifest: empty");
  const auto header = detail::split_csv_line(line);
  int c_path = -1, c_labels = -1, c_split = -1, c_fold = -1;
  for (int i = 0; i < static_cast<int>(header.size()); ++i) {
    const auto& h = header[static_cast<std::size_t>(i)];
    if (h == "path") c_path = i;
    else if (h == "labels") c_labels = i;
    else if (h == "split") c_split = i;
    else if (h == "fold") c_fold = i;
  }
  if (c_path < 0) throw DomainError("manifest: missing 'path' column");
  Manifest m;
  m.has_split = c_split >= 0;
  m.has_fold = c_fold >= 0;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cols = detail::split_csv_line(line);
    auto col = [&](int c) -> std::string {
      if (c < 0) return {};
      if (c >= static_cast<int>(cols.size()))
        throw DomainError("manifest line " + std::to_string(lineno) + ": too few columns");
      return cols[static_cast<std::size_t>(c)];
    };
    ManifestEntry e;
    std::filesystem::path p(col(c_path));
    e.path = (p.is_relative() && !base_dir.empty() ? base_dir / p : p).string();
    e.labels = detail::split_labels(col(c_labels));
    e.split = col(c_split);
    if (c_fold >= 0) {
      const auto f = col(c_fold);
      try {
        e.fold = std::stoi(f);
      } catch (const std::exception&) {
        throw DomainError("manifest line " + std::to_string(lineno) + ": fold '" + f + "' is not an integer");
      }
    }
    if (m.has_split && !(e.split == "train" || e.split == "valid" || e.split == "test"))
      throw DomainError("manifest line " + std::to_string(lineno) + ": split must be train|valid|test");
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("manifest: cannot open " + path.string());
  return parse_manifest(in, path.parent_path());
}

inline void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw DomainError("manifest: cannot write " + path.string());
  out << "path,labels";
  if (m.has_split) out << ",split";
  if (m.has_fold) out << ",fold";
  out << "\n";
  const auto base = std::filesystem::absolute(path).parent_path();
  for (const auto& e : m.entries) {
    std::filesystem::path p = std::filesystem::absolute(e.path);
    auto rel = p.lexically_relative(base);
    if (!rel.empty() && *rel.begin() != "..") p = rel;
    out << p.string() << ",";
    for (std::size_t i = 0; i < e.labels.size(); ++i) out << (i ? "|" : "") << e.labels[i];
    if (m.has_split) out << "," << e.split;
    if (m.has_fold) out << "," << (e.fold ? std::to_string(*e.fold) : "");
    out << "\n";
  }
}

}  // namespace matpac
