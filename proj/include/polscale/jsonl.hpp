#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "polscale/common.hpp"

// Line-delimited JSON, one self-describing record per line. All stores in
// this project share the format so anything can be inspected with ordinary
// text tools.

namespace polscale {

using json = nlohmann::json;

inline void append_jsonl(const std::filesystem::path& path,
                         const std::vector<json>& records) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw DataError("cannot open for append: " + path.string());
  for (const auto& r : records) out << r.dump() << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

inline void write_jsonl(const std::filesystem::path& path,
                        const std::vector<json>& records) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw DataError("cannot open for write: " + path.string());
  for (const auto& r : records) out << r.dump() << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

// Calls sink(line_number, record) for every line; 1-based line numbers.
// A malformed line is a DataError naming the line, not a silent skip.
inline void read_jsonl(const std::filesystem::path& path,
                       const std::function<void(size_t, json&&)>& sink) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded())
      throw DataError(path.string() + ": line " + std::to_string(line_no) +
                      ": malformed JSON record");
    sink(line_no, std::move(rec));
  }
}

inline std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::vector<json> out;
  read_jsonl(path, [&](size_t, json&& r) { out.push_back(std::move(r)); });
  return out;
}

// Writes a whole file atomically enough for our purposes: temp then rename.
inline void write_file(const std::filesystem::path& path,
                       std::string_view content) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    if (!out) throw DataError("cannot open for write: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  return content;
}

}  // namespace polscale
