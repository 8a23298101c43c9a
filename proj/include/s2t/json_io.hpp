#pragma once

// JSON helpers shared by reports and tables: fixed-precision output, strict
// parsing with typed errors, and JSON Lines input.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2t/checkpoint.hpp"
#include "s2t/error.hpp"

namespace s2t::json_io {

/// Round to `digits` fractional digits through the decimal text, so the
/// stored value is exactly what a reader of the formatted output gets back.
inline double quantize(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  const double q = std::strtod(buf, nullptr);
  return q == 0.0 ? 0.0 : q;  // no negative zero
}

namespace detail {

inline void dump_fixed(const nlohmann::ordered_json& j, int digits, int indent, std::ostringstream& os) {
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  const std::string inner(static_cast<std::size_t>(indent + 1) * 2, ' ');
  if (j.is_object()) {
    if (j.empty()) {
      os << "{}";
      return;
    }
    os << "{\n";
    bool first = true;
    for (const auto& [k, v] : j.items()) {
      if (!first) os << ",\n";
      first = false;
      os << inner << nlohmann::json(k).dump() << ": ";
      dump_fixed(v, digits, indent + 1, os);
    }
    os << "\n" << pad << "}";
  } else if (j.is_array()) {
    if (j.empty()) {
      os << "[]";
      return;
    }
    os << "[\n";
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (i) os << ",\n";
      os << inner;
      dump_fixed(j[i], digits, indent + 1, os);
    }
    os << "\n" << pad << "]";
  } else if (j.is_number_float()) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, quantize(j.get<double>(), digits));
    os << buf;
  } else {
    os << j.dump();
  }
}

}  // namespace detail

/// Pretty-printed JSON whose floating-point numbers carry exactly `digits`
/// fractional digits. Integers, strings, booleans and nulls print as usual.
inline std::string dump_fixed(const nlohmann::ordered_json& j, int digits = 4) {
  std::ostringstream os;
  detail::dump_fixed(j, digits, 0, os);
  os << "\n";
  return os.str();
}

/// Parse a JSON document; syntax errors become ConfigError naming `where`.
inline nlohmann::ordered_json parse(const std::string& text, const std::string& where) {
  try {
    return nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

inline nlohmann::ordered_json load(const std::filesystem::path& p) { return parse(io::read_file(p), p.string()); }

/// JSON Lines: one object per non-blank line. Malformed lines are InputError.
inline std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& p) {
  std::istringstream in(io::read_file(p));
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      if (!j.is_object()) throw InputError(p.string() + ":" + std::to_string(number) + ": expected a JSON object");
      out.push_back(std::move(j));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(p.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

inline std::string to_jsonl(const std::vector<nlohmann::ordered_json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  return out;
}

/// Required string field of a JSONL record.
inline std::string require_string(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_string()) throw InputError(where + ": missing string field '" + key + "'");
  return j[key].get<std::string>();
}

}  // namespace s2t::json_io
