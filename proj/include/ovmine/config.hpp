// Copyright 2026 The ovmine Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <string_view>

#include "ovmine/error.hpp"

namespace ovmine {

// Flat `key = value` configuration, `#` starts a comment. Used for dataset
// manifests, weight bundles, run.meta records and CLI config files.
using KeyValues = std::map<std::string, std::string>;

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace detail

inline KeyValues parse_key_values(std::istream& in, const std::string& origin = "config") {
  KeyValues out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = detail::trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw DataError(origin + ":" + std::to_string(line_no) + ": expected `key = value`");
    }
    const std::string key(detail::trim(view.substr(0, eq)));
    const std::string value(detail::trim(view.substr(eq + 1)));
    if (key.empty()) throw DataError(origin + ":" + std::to_string(line_no) + ": empty key");
    if (!out.emplace(key, value).second) {
      throw DataError(origin + ":" + std::to_string(line_no) + ": duplicate key `" + key + "`");
    }
  }
  return out;
}

inline KeyValues load_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing file: " + path.string());
  return parse_key_values(in, path.string());
}

inline void write_key_values(std::ostream& out, const KeyValues& kv) {
  for (const auto& [key, value] : kv) out << key << " = " << value << '\n';
}

inline void reject_unknown_keys(const KeyValues& kv, const std::set<std::string>& allowed,
                                const std::string& origin) {
  for (const auto& [key, value] : kv) {
    if (!allowed.contains(key)) throw ParamError(origin + ": unknown key `" + key + "`");
  }
}

// Shortest round-trip decimal form of a double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace ovmine
