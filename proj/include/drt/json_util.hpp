#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <string>

#include "drt/math.hpp"

namespace drt::detail {

inline const nlohmann::json& require_field(const nlohmann::json& j, const char* key,
                                           const std::string& where) {
  if (!j.is_object() || !j.contains(key))
    throw ParseError(where + ": missing field '" + key + "'");
  return j.at(key);
}

inline double require_number(const nlohmann::json& j, const char* key,
                             const std::string& where) {
  const nlohmann::json& v = require_field(j, key, where);
  if (!v.is_number()) throw ParseError(where + ": field '" + key + "' must be a number");
  return v.get<double>();
}

inline Vec3d require_vec3(const nlohmann::json& j, const char* key,
                          const std::string& where) {
  const nlohmann::json& v = require_field(j, key, where);
  if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() ||
      !v[2].is_number())
    throw ParseError(where + ": field '" + key + "' must be an array of 3 numbers");
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

inline nlohmann::json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const std::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace drt::detail
