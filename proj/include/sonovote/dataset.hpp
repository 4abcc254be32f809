#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sonovote/image.hpp"
#include "sonovote/image_io.hpp"
#include "sonovote/label.hpp"

namespace sonovote {

struct ManifestEntry {
  std::string sample_id;
  std::string path;
  ClassLabel label = ClassLabel::normal;
  std::string origin;
};

// Entries are kept sorted by sample_id so fold plans depend only on the
// manifest contents, never on directory enumeration order.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::array<std::size_t, kNumClasses> class_counts{};
  std::size_t skipped_files = 0;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }

  void recount() {
    class_counts.fill(0);
    for (const auto& e : entries) ++class_counts[label_index(e.label)];
  }
};

using WarnSink = std::function<void(const std::string&)>;

namespace detail {

inline void check_unique_ids(const DatasetManifest& m) {
  std::set<std::string> seen;
  for (const auto& e : m.entries) {
    if (!seen.insert(e.sample_id).second) {
      throw std::runtime_error("duplicate sample_id: " + e.sample_id);
    }
  }
}

inline void sort_by_id(DatasetManifest& m) {
  std::sort(m.entries.begin(), m.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) {
              return a.sample_id < b.sample_id;
            });
}

}  // namespace detail

// Scans <root>/<class>/<file> for decodable images. Files that are not
// readable images are skipped with a warning; a subdirectory that is not a
// class name is a hard error, as is an entirely empty dataset.
inline DatasetManifest ingest(const std::filesystem::path& root,
                              const std::string& origin_tag,
                              const WarnSink& warn = {}) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) {
    throw std::runtime_error("dataset root is not a directory: " +
                             root.string());
  }
  DatasetManifest manifest;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const std::string dir_name = entry.path().filename().string();
    ClassLabel label;
    try {
      label = parse_class(dir_name);
    } catch (const std::invalid_argument&) {
      throw std::runtime_error("unknown class subdirectory '" + dir_name +
                               "' in " + root.string());
    }
    for (const auto& file : fs::directory_iterator(entry.path())) {
      if (!file.is_regular_file()) continue;
      const std::string path = file.path().string();
      if (!probe_image(path)) {
        ++manifest.skipped_files;
        if (warn) warn("skipping unreadable image: " + path);
        continue;
      }
      ManifestEntry e;
      e.path = path;
      e.label = label;
      e.origin = origin_tag;
      e.sample_id =
          origin_tag + ":" + dir_name + "/" + file.path().filename().string();
      manifest.entries.push_back(std::move(e));
    }
  }
  if (manifest.entries.empty()) {
    throw std::runtime_error("no samples found under " + root.string());
  }
  // sample_ids embed the class-relative path, so id order equals
  // lexicographic path order within one root while staying independent of
  // where the root is mounted.
  detail::sort_by_id(manifest);
  detail::check_unique_ids(manifest);
  manifest.recount();
  return manifest;
}

inline DatasetManifest merge(const DatasetManifest& a,
                             const DatasetManifest& b) {
  DatasetManifest out;
  out.entries.reserve(a.entries.size() + b.entries.size());
  out.entries.insert(out.entries.end(), a.entries.begin(), a.entries.end());
  out.entries.insert(out.entries.end(), b.entries.begin(), b.entries.end());
  out.skipped_files = a.skipped_files + b.skipped_files;
  detail::sort_by_id(out);
  detail::check_unique_ids(out);
  out.recount();
  return out;
}

// --- CSV persistence: header `sample_id,path,label,origin` ---

namespace detail {

inline std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

}  // namespace detail

inline void write_manifest_csv(const std::filesystem::path& path,
                               const DatasetManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "sample_id,path,label,origin\n";
  for (const auto& e : manifest.entries) {
    out << detail::csv_quote(e.sample_id) << ',' << detail::csv_quote(e.path)
        << ',' << class_name(e.label) << ',' << detail::csv_quote(e.origin)
        << '\n';
  }
  if (!out) throw std::runtime_error("short write: " + path.string());
}

inline DatasetManifest read_manifest_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || detail::csv_split(line) !=
      std::vector<std::string>{"sample_id", "path", "label", "origin"}) {
    throw std::runtime_error("bad manifest header in " + path.string());
  }
  DatasetManifest manifest;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = detail::csv_split(line);
    if (fields.size() != 4) {
      throw std::runtime_error("bad manifest row in " + path.string() + ": " +
                               line);
    }
    ManifestEntry e;
    e.sample_id = fields[0];
    e.path = fields[1];
    e.label = parse_class(fields[2]);
    e.origin = fields[3];
    manifest.entries.push_back(std::move(e));
  }
  detail::sort_by_id(manifest);
  detail::check_unique_ids(manifest);
  manifest.recount();
  return manifest;
}

}  // namespace sonovote
