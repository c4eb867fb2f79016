#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "core/errors.hpp"

namespace semstab {

using json = nlohmann::json;

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise_io("cannot open file for reading: " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise_io("cannot open file for writing: " + path.string());
  out << content;
  out.flush();
  if (!out) raise_io("write failed: " + path.string());
}

inline json parse_json(std::string_view text, std::string_view what) {
  json parsed = json::parse(text, nullptr, false);
  if (parsed.is_discarded()) raise_config(std::string(what) + ": invalid JSON");
  return parsed;
}

inline json load_json_file(const std::filesystem::path& path) {
  return parse_json(read_file(path), path.string());
}

// Fetch a required field, raising a config error naming the key when absent.
inline const json& require_field(const json& obj, std::string_view key, std::string_view ctx) {
  auto it = obj.find(key);
  if (it == obj.end()) raise_config(std::string(ctx) + ": missing required field \"" + std::string(key) + "\"");
  return *it;
}

}  // namespace semstab
