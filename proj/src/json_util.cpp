// SPDX-License-Identifier: Apache-2.0
#include "nasq/json_util.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>

#include "nasq/error.hpp"

namespace nasq {

void require_known_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                        std::string_view context) {
  if (!j.is_object()) {
    throw ConfigError(std::string(context) + ": expected a JSON object");
  }
  for (const auto& item : j.items()) {
    bool known = false;
    for (auto k : allowed) {
      if (item.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError(std::string(context) + ": unknown key \"" + item.key() + "\"");
    }
  }
}

template <typename T>
T get_as(const nlohmann::json& j, std::string_view key, std::string_view context) {
  const std::string k(key);
  if (!j.contains(k)) {
    throw ConfigError(std::string(context) + ": missing key \"" + k + "\"");
  }
  const auto& v = j.at(k);
  if constexpr (std::is_same_v<T, int> || std::is_same_v<T, std::int64_t> ||
                std::is_same_v<T, std::uint64_t>) {
    if (!v.is_number_integer()) {
      throw ConfigError(std::string(context) + ": \"" + k + "\" must be an integer");
    }
  } else if constexpr (std::is_same_v<T, double>) {
    if (!v.is_number()) {
      throw ConfigError(std::string(context) + ": \"" + k + "\" must be a number");
    }
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) {
      throw ConfigError(std::string(context) + ": \"" + k + "\" must be a string");
    }
  } else if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) {
      throw ConfigError(std::string(context) + ": \"" + k + "\" must be a boolean");
    }
  }
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(context) + ": \"" + k + "\": " + e.what());
  }
}

template int get_as<int>(const nlohmann::json&, std::string_view, std::string_view);
template std::int64_t get_as<std::int64_t>(const nlohmann::json&, std::string_view, std::string_view);
template std::uint64_t get_as<std::uint64_t>(const nlohmann::json&, std::string_view, std::string_view);
template double get_as<double>(const nlohmann::json&, std::string_view, std::string_view);
template bool get_as<bool>(const nlohmann::json&, std::string_view, std::string_view);
template std::string get_as<std::string>(const nlohmann::json&, std::string_view, std::string_view);
template std::vector<int> get_as<std::vector<int>>(const nlohmann::json&, std::string_view,
                                                   std::string_view);
template std::vector<std::string> get_as<std::vector<std::string>>(const nlohmann::json&,
                                                                   std::string_view,
                                                                   std::string_view);

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": parse error at byte " + std::to_string(e.byte) + ": " +
                      e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << text;
  out.flush();
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace nasq
