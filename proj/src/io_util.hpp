#pragma once

// Internal file helpers shared by the on-disk formats. Not installed.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfair/common.hpp"

namespace cfair::io {

inline std::vector<char> read_bytes(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + file.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<char> bytes(size);
  if (size > 0) in.read(bytes.data(), static_cast<std::streamsize>(size));
  if (!in) throw ValidationError("failed reading file: " + file.string());
  return bytes;
}

/// Writes via a temp file + rename so partially written artifacts never
/// appear under the final name.
inline void write_bytes_atomic(const std::filesystem::path& file, const void* data,
                               std::size_t size) {
  const std::filesystem::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open file for writing: " + tmp.string());
    if (size > 0) out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) throw ValidationError("failed writing file: " + tmp.string());
  }
  std::filesystem::rename(tmp, file);
}

inline void write_text_atomic(const std::filesystem::path& file, const std::string& text) {
  write_bytes_atomic(file, text.data(), text.size());
}

inline void write_json_atomic(const std::filesystem::path& file, const nlohmann::json& j) {
  write_text_atomic(file, j.dump(2) + "\n");
}

inline nlohmann::json read_json(const std::filesystem::path& file) {
  const std::vector<char> bytes = read_bytes(file);
  nlohmann::json j = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr,
                                           /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ValidationError("invalid JSON in " + file.string());
  return j;
}

}  // namespace cfair::io
