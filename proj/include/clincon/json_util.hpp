#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "clincon/errors.hpp"

namespace clincon {

/// Rejects keys outside `allowed`; `context` names the object in errors.
inline void require_known_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                               std::string_view context) {
  if (!j.is_object()) throw ConfigError(std::string(context) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + std::string(context));
  }
}

template <typename T>
void read_if_present(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace clincon
