#pragma once

// Checkpoint directory: manifest.json plus tensors.bin. Each tensor record
// is: u16 name length, UTF-8 name, u8 rank, rank x u32 extents, then the
// values as little-endian f32. Values are rounded to float when a
// checkpoint is built, so a model restored from disk is bit-identical to
// the one that produced it.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2t/error.hpp"
#include "s2t/numerics/parameter.hpp"

namespace s2t {

inline constexpr int kCheckpointFormatVersion = 1;

struct NamedTensor {
  std::string name;
  Array value;
};

struct ModelCheckpoint {
  /// format_version, kind, stage, seed, parent, architecture, plus free-form extras.
  nlohmann::ordered_json manifest;
  std::vector<NamedTensor> tensors;

  const Array& tensor(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return t.value;
    throw CorruptionError("checkpoint has no tensor '" + name + "'");
  }
  bool has_tensor(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return true;
    return false;
  }
};

namespace io {

inline void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }
inline void put_u16(std::string& out, std::uint16_t v) {
  for (int i = 0; i < 2; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

/// Little-endian reader that reports truncation as corruption.
class Reader {
 public:
  Reader(std::string_view bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint16_t u16() {
    auto b = take(2);
    return static_cast<std::uint16_t>(static_cast<unsigned char>(b[0]) | (static_cast<unsigned char>(b[1]) << 8));
  }
  std::uint32_t u32() {
    auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) { return std::string(take(n)); }

 private:
  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw CorruptionError(what_ + ": truncated data");
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::string_view bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError("cannot open " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Write via a temporary sibling and rename, so readers never see a partial file.
inline void atomic_write(const std::filesystem::path& p, std::string_view bytes) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  const auto tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, p);
}

}  // namespace io

inline std::string encode_tensors(const std::vector<NamedTensor>& tensors) {
  std::string out;
  for (const auto& t : tensors) {
    if (t.name.size() > 0xFFFF) throw std::invalid_argument("tensor name too long");
    io::put_u16(out, static_cast<std::uint16_t>(t.name.size()));
    out += t.name;
    io::put_u8(out, static_cast<std::uint8_t>(t.value.rank()));
    for (std::size_t e : t.value.shape()) io::put_u32(out, static_cast<std::uint32_t>(e));
    for (double v : t.value.data()) io::put_f32(out, static_cast<float>(v));
  }
  return out;
}

inline std::vector<NamedTensor> decode_tensors(std::string_view bytes) {
  io::Reader r(bytes, "tensors.bin");
  std::vector<NamedTensor> out;
  while (!r.done()) {
    NamedTensor t;
    t.name = r.str(r.u16());
    const std::size_t rank = r.u8();
    if (rank == 0) throw CorruptionError("tensors.bin: tensor '" + t.name + "' has rank 0");
    Shape shape;
    for (std::size_t i = 0; i < rank; ++i) {
      shape.push_back(r.u32());
      if (shape.back() == 0) throw CorruptionError("tensors.bin: tensor '" + t.name + "' has a zero extent");
    }
    std::vector<double> data(shape_size(shape));
    for (double& v : data) v = static_cast<double>(r.f32());
    try {
      t.value = Array(std::move(shape), std::move(data));
    } catch (const std::invalid_argument& e) {
      throw CorruptionError("tensors.bin: tensor '" + t.name + "': " + e.what());
    }
    out.push_back(std::move(t));
  }
  return out;
}

inline std::string checkpoint_id(const ModelCheckpoint& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(encode_tensors(c.tensors))));
  return buf;
}

/// Writes into a temporary sibling directory and renames it into place, so
/// a checkpoint directory is either absent, the previous one, or complete.
inline void save_checkpoint(const ModelCheckpoint& c, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path target = dir.has_filename() ? dir : dir.parent_path();
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  io::atomic_write(tmp / "tensors.bin", encode_tensors(c.tensors));
  io::atomic_write(tmp / "manifest.json", c.manifest.dump(2) + "\n");
  const fs::path old = target.string() + ".old";
  fs::remove_all(old);
  if (fs::exists(target)) fs::rename(target, old);
  fs::rename(tmp, target);
  fs::remove_all(old);
}

inline ModelCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.json")) throw InputError("no checkpoint at " + dir.string());
  ModelCheckpoint c;
  try {
    c.manifest = nlohmann::ordered_json::parse(io::read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError("checkpoint manifest " + dir.string() + " is not valid JSON: " + e.what());
  }
  if (c.manifest.value("format_version", -1) != kCheckpointFormatVersion) {
    throw CorruptionError("checkpoint " + dir.string() + ": unsupported format version");
  }
  c.tensors = decode_tensors(io::read_file(dir / "tensors.bin"));
  if (c.manifest.contains("tensor_count") && c.manifest["tensor_count"].get<std::size_t>() != c.tensors.size()) {
    throw CorruptionError("checkpoint " + dir.string() + ": tensor count does not match manifest");
  }
  return c;
}

/// Checkpoint for a parameter list: values plus Adam state, rounded to float.
/// Rounds the parameters in place so the live model matches what is saved.
inline ModelCheckpoint make_checkpoint(const std::vector<Parameter*>& params, nlohmann::ordered_json architecture,
                                       std::string kind, std::string stage, std::uint64_t seed,
                                       std::string parent = {}) {
  ModelCheckpoint c;
  nlohmann::ordered_json steps = nlohmann::ordered_json::object();
  for (Parameter* p : params) {
    round_to_float(p->value);
    round_to_float(p->adam_m);
    round_to_float(p->adam_v);
    c.tensors.push_back({p->name, p->value});
    c.tensors.push_back({p->name + "@adam_m", p->adam_m});
    c.tensors.push_back({p->name + "@adam_v", p->adam_v});
    steps[p->name] = p->step_count;
  }
  c.manifest["format_version"] = kCheckpointFormatVersion;
  c.manifest["kind"] = std::move(kind);
  c.manifest["stage"] = std::move(stage);
  c.manifest["seed"] = seed;
  c.manifest["parent"] = parent.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(parent);
  c.manifest["architecture"] = std::move(architecture);
  c.manifest["tensor_count"] = c.tensors.size();
  c.manifest["step_counts"] = steps;
  return c;
}

/// Restore parameter values and Adam state; every parameter must be present
/// with its exact shape.
inline void restore_parameters(const ModelCheckpoint& c, const std::vector<Parameter*>& params) {
  for (Parameter* p : params) {
    if (!c.has_tensor(p->name)) throw CorruptionError("checkpoint lacks parameter '" + p->name + "'");
    const Array& v = c.tensor(p->name);
    if (!v.same_shape(p->value)) {
      throw ConfigError("architecture mismatch: parameter '" + p->name + "' has shape " + shape_string(v.shape()) +
                        ", expected " + shape_string(p->value.shape()));
    }
    p->value = v;
    p->adam_m = c.has_tensor(p->name + "@adam_m") ? c.tensor(p->name + "@adam_m") : Array(v.shape(), 0.0);
    p->adam_v = c.has_tensor(p->name + "@adam_v") ? c.tensor(p->name + "@adam_v") : Array(v.shape(), 0.0);
    p->gradient = Array(v.shape(), 0.0);
    const auto& steps = c.manifest.contains("step_counts") ? c.manifest["step_counts"] : nlohmann::ordered_json{};
    p->step_count = steps.contains(p->name) ? steps[p->name].get<std::uint64_t>() : 0;
  }
}

/// Fail unless the stored architecture equals the expected one.
inline void require_architecture(const ModelCheckpoint& c, const nlohmann::ordered_json& expected) {
  if (!c.manifest.contains("architecture") || c.manifest["architecture"] != expected) {
    throw ConfigError("architecture mismatch: checkpoint has " + c.manifest.value("architecture", nlohmann::ordered_json{}).dump() +
                      ", expected " + expected.dump());
  }
}

}  // namespace s2t
