#pragma once

// Teacher embeddings: target vectors the sensor encoder is aligned to.
// Stored as a binary file (magic "S2TE", u32 version 1, u32 dim, then
// records of u16 key length, UTF-8 key, dim x little-endian f32) or as JSON
// {"dim": n, "embeddings": {key: [..]}}; or synthesized from a label.

#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "s2t/checkpoint.hpp"
#include "s2t/error.hpp"
#include "s2t/numerics/array.hpp"
#include "s2t/numerics/rng.hpp"

namespace s2t::encoder {

inline constexpr std::string_view kTeacherMagic = "S2TE";
inline constexpr std::uint32_t kTeacherVersion = 1;

/// Unit-norm Gaussian direction determined by (label, seed, dim). Independent
/// draws in dimension n have cosine similarity of order 1/sqrt(n), so
/// distinct labels land far apart.
inline Array synth_teacher(const std::string& label, std::uint64_t seed, std::size_t dim) {
  if (label.empty()) throw std::invalid_argument("synth_teacher: label must be non-empty");
  if (dim < 2) throw std::invalid_argument("synth_teacher: dim must be at least 2");
  Rng rng(seed ^ fnv1a(label));
  std::vector<double> v(dim);
  double norm2 = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : v) x *= inv;
  return Array::row(std::move(v));
}

class TeacherProvider {
 public:
  enum class Source { file, synthetic };

  static TeacherProvider synthetic(std::uint64_t seed, std::size_t dim) {
    if (dim < 2) throw ConfigError("synthetic teacher dim must be at least 2");
    TeacherProvider t;
    t.source_ = Source::synthetic;
    t.seed_ = seed;
    t.dim_ = dim;
    return t;
  }

  static TeacherProvider from_map(std::size_t dim, std::map<std::string, Array> embeddings) {
    if (dim == 0) throw ConfigError("teacher dim must be positive");
    TeacherProvider t;
    t.source_ = Source::file;
    t.dim_ = dim;
    for (auto& [key, v] : embeddings) t.add(key, std::move(v));
    return t;
  }

  /// Load either format; the binary magic decides.
  static TeacherProvider load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw InputError("teacher file not found: " + path.string());
    const std::string bytes = io::read_file(path);
    if (bytes.starts_with(kTeacherMagic)) return parse_binary(bytes, path.string());
    return parse_json(bytes, path.string());
  }

  static TeacherProvider parse_binary(std::string_view bytes, const std::string& origin) {
    io::Reader r(bytes, origin);
    if (r.str(4) != kTeacherMagic) throw CorruptionError(origin + ": bad magic");
    const std::uint32_t version = r.u32();
    if (version != kTeacherVersion) {
      throw CorruptionError(origin + ": unsupported teacher file version " + std::to_string(version));
    }
    const std::uint32_t dim = r.u32();
    if (dim == 0) throw CorruptionError(origin + ": dim is zero");
    TeacherProvider t;
    t.source_ = Source::file;
    t.dim_ = dim;
    while (!r.done()) {
      std::string key = r.str(r.u16());
      std::vector<double> v(dim);
      for (double& x : v) x = static_cast<double>(r.f32());
      for (double x : v)
        if (!std::isfinite(x)) throw CorruptionError(origin + ": non-finite value for key '" + key + "'");
      if (t.embeddings_.contains(key)) throw CorruptionError(origin + ": duplicate key '" + key + "'");
      t.embeddings_.emplace(std::move(key), Array::row(std::move(v)));
    }
    return t;
  }

  static TeacherProvider parse_json(std::string_view text, const std::string& origin) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(origin + ": teacher file is neither S2TE binary nor JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("dim") || !j.contains("embeddings") || !j["embeddings"].is_object()) {
      throw ConfigError(origin + ": teacher JSON needs \"dim\" and an \"embeddings\" object");
    }
    TeacherProvider t;
    t.source_ = Source::file;
    t.dim_ = j["dim"].get<std::size_t>();
    if (t.dim_ == 0) throw ConfigError(origin + ": dim must be positive");
    for (const auto& [key, arr] : j["embeddings"].items()) {
      if (!arr.is_array()) throw ConfigError(origin + ": embedding for '" + key + "' is not an array");
      t.add(key, Array::row(arr.get<std::vector<double>>()));
    }
    return t;
  }

  Source source() const { return source_; }
  std::size_t dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }
  const std::map<std::string, Array>& embeddings() const { return embeddings_; }

  std::optional<Array> lookup(const std::string& key) const {
    if (source_ == Source::synthetic) {
      if (key.empty()) return std::nullopt;
      return synth_teacher(key, seed_, dim_);
    }
    const auto it = embeddings_.find(key);
    if (it == embeddings_.end()) return std::nullopt;
    return it->second;
  }

  Array require(const std::string& key) const {
    auto v = lookup(key);
    if (!v) throw InputError("no teacher embedding for key '" + key + "'");
    return *std::move(v);
  }

  /// Add or replace an embedding (file-backed providers only).
  void add(const std::string& key, Array v) {
    if (source_ != Source::file) throw std::logic_error("cannot add embeddings to a synthetic teacher");
    if (key.empty() || key.size() > 0xFFFF) throw ConfigError("teacher key must be 1..65535 bytes");
    if (v.size() != dim_) {
      throw ConfigError("teacher embedding '" + key + "' has length " + std::to_string(v.size()) + ", expected " +
                        std::to_string(dim_));
    }
    embeddings_[key] = Array::row(v.vec());
  }

  std::string to_binary() const {
    std::string out(kTeacherMagic);
    io::put_u32(out, kTeacherVersion);
    io::put_u32(out, static_cast<std::uint32_t>(dim_));
    for (const auto& [key, v] : embeddings_) {
      io::put_u16(out, static_cast<std::uint16_t>(key.size()));
      out += key;
      for (double x : v.data()) io::put_f32(out, static_cast<float>(x));
    }
    return out;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json e = nlohmann::ordered_json::object();
    for (const auto& [key, v] : embeddings_) e[key] = v.vec();
    return {{"dim", dim_}, {"embeddings", e}};
  }

 private:
  TeacherProvider() = default;

  Source source_ = Source::file;
  std::size_t dim_ = 0;
  std::uint64_t seed_ = 0;
  std::map<std::string, Array> embeddings_;
};

}  // namespace s2t::encoder
