// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

namespace nasq {

// Throws ConfigError if j is not an object or carries a key outside allowed.
void require_known_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                        std::string_view context);

// Typed member access with a ConfigError naming the key on failure.
template <typename T>
T get_as(const nlohmann::json& j, std::string_view key, std::string_view context);

template <typename T>
T get_or(const nlohmann::json& j, std::string_view key, T fallback, std::string_view context) {
  if (!j.contains(key)) return fallback;
  return get_as<T>(j, key, context);
}

// Parse errors carry the byte offset; I/O failures raise IoError.
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// FNV-1a, used for stable fingerprints that must survive across builds.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace nasq
