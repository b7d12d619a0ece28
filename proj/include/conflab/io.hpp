#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "conflab/error.hpp"

namespace conflab {

inline std::string read_file_to_string(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open for reading: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw FormatError("read failed: " + path.string());
  return std::move(buf).str();
}

/// Writes to `<path>.partial`, then renames over `path`, so readers never see
/// a half-written artifact.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path partial = path.string() + ".partial";
  {
    std::ofstream out(partial, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open for writing: " + partial.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw FormatError("write failed: " + partial.string());
  }
  std::error_code ec;
  std::filesystem::rename(partial, path, ec);
  if (ec) throw FormatError("rename failed: " + partial.string() + " -> " + path.string());
}

/// Scientific notation, 18 significant digits: enough to reconstruct the
/// exact double on parse, so persisted artifacts round-trip losslessly.
inline std::string format_double_sci(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17e", v);
  return buf;
}

}  // namespace conflab
