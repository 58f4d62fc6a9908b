#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "unitsa/common.hpp"
#include "unitsa/nn/tensor.hpp"

namespace unitsa::nn {

/// Named-tensor archive.
///
/// Layout (all integers little-endian):
///   magic     8 bytes  "UTSACKPT"
///   version   u32
///   n_meta    u32, then n_meta x { u32 len, key bytes, u32 len, value bytes }
///   n_tensor  u32, then n_tensor x { u32 len, name bytes, u32 ndim,
///                                    ndim x u64 dim, prod(dim) x f64 }
struct Archive {
  static constexpr char kMagic[8] = {'U', 'T', 'S', 'A', 'C', 'K', 'P', 'T'};
  static constexpr std::uint32_t kVersion = 1;

  struct Entry {
    std::string name;
    Shape shape;
    std::vector<double> values;

    friend bool operator==(const Entry&, const Entry&) = default;
  };

  std::uint32_t version = kVersion;
  std::map<std::string, std::string> metadata;
  std::vector<Entry> tensors;

  friend bool operator==(const Archive&, const Archive&) = default;

  const Entry* find(const std::string& name) const {
    for (const auto& e : tensors) {
      if (e.name == name) return &e;
    }
    return nullptr;
  }

  const std::string& meta(const std::string& key) const {
    auto it = metadata.find(key);
    if (it == metadata.end()) throw FormatError("checkpoint: missing metadata key '" + key + "'");
    return it->second;
  }

  /// Identity of the tensor contents (names, shapes, values).
  std::string fingerprint() const {
    std::uint64_t h = fnv1a64("unitsa-tensors");
    for (const auto& e : tensors) {
      h = fnv1a64(e.name, h);
      for (auto d : e.shape) h = fnv1a64(std::to_string(d), h);
      h = fnv1a64(std::string_view(reinterpret_cast<const char*>(e.values.data()), e.values.size() * sizeof(double)),
                  h);
    }
    return hex64(h);
  }

  std::string serialize() const {
    std::string out(kMagic, sizeof(kMagic));
    put_u32(out, version);
    put_u32(out, static_cast<std::uint32_t>(metadata.size()));
    for (const auto& [k, v] : metadata) {
      put_string(out, k);
      put_string(out, v);
    }
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& e : tensors) {
      if (shape_size(e.shape) != e.values.size()) {
        throw FormatError("checkpoint: tensor '" + e.name + "' has " + std::to_string(e.values.size()) +
                          " values for shape " + shape_string(e.shape));
      }
      put_string(out, e.name);
      put_u32(out, static_cast<std::uint32_t>(e.shape.size()));
      for (auto d : e.shape) put_u64(out, d);
      for (double v : e.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
  }

  static Archive deserialize(std::string_view bytes) {
    Reader r{bytes};
    if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
      throw FormatError("checkpoint: bad magic (not a unitsa checkpoint)");
    }
    r.pos = sizeof(kMagic);
    Archive a;
    a.version = r.u32();
    if (a.version != kVersion) {
      throw FormatError("checkpoint: unsupported version " + std::to_string(a.version));
    }
    const auto n_meta = r.u32();
    for (std::uint32_t i = 0; i < n_meta; ++i) {
      std::string k = r.str();
      a.metadata[k] = r.str();
    }
    const auto n_tensors = r.u32();
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
      Entry e;
      e.name = r.str();
      const auto ndim = r.u32();
      for (std::uint32_t d = 0; d < ndim; ++d) e.shape.push_back(static_cast<std::size_t>(r.u64()));
      const std::size_t n = shape_size(e.shape);
      if (n > (bytes.size() - r.pos) / 8) throw FormatError("checkpoint: truncated tensor '" + e.name + "'");
      e.values.resize(n);
      for (auto& v : e.values) v = std::bit_cast<double>(r.u64());
      a.tensors.push_back(std::move(e));
    }
    if (r.pos != bytes.size()) throw FormatError("checkpoint: trailing bytes");
    return a;
  }

  void save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("checkpoint: cannot write " + path.string());
    const std::string bytes = serialize();
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw FormatError("checkpoint: write failed for " + path.string());
  }

  static Archive load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("checkpoint: cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return deserialize(ss.str());
  }

 private:
  struct Reader {
    std::string_view bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const {
      if (bytes.size() - pos < n) throw FormatError("checkpoint: truncated file");
    }
    std::uint64_t le(std::size_t n) {
      need(n);
      std::uint64_t v = 0;
      for (std::size_t i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
      pos += n;
      return v;
    }
    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }
    std::string str() {
      const auto n = u32();
      need(n);
      std::string s(bytes.substr(pos, n));
      pos += n;
      return s;
    }
  };

  static void put_le(std::string& out, std::uint64_t v, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  static void put_u32(std::string& out, std::uint32_t v) { put_le(out, v, 4); }
  static void put_u64(std::string& out, std::uint64_t v) { put_le(out, v, 8); }
  static void put_string(std::string& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out += s;
  }
};

/// Copies every tensor of `store` (or only those whose name satisfies
/// `filter`) into archive entries.
template <typename T, typename Filter>
std::vector<Archive::Entry> export_tensors(const ParameterStore<T>& store, Filter&& filter) {
  std::vector<Archive::Entry> out;
  for (const auto& e : store) {
    if (!filter(e.name)) continue;
    Archive::Entry a{e.name, e.value.shape, {}};
    a.values.reserve(e.value.size());
    for (T v : e.value.values) a.values.push_back(static_cast<double>(v));
    out.push_back(std::move(a));
  }
  return out;
}

template <typename T>
std::vector<Archive::Entry> export_tensors(const ParameterStore<T>& store) {
  return export_tensors(store, [](const std::string&) { return true; });
}

/// Loads named entries into existing parameters; names and shapes must match.
template <typename T>
void import_tensors(ParameterStore<T>& store, const std::vector<Archive::Entry>& entries) {
  for (const auto& a : entries) {
    auto idx = store.find(a.name);
    if (!idx) throw FormatError("checkpoint: tensor '" + a.name + "' has no matching parameter");
    auto& p = store[*idx];
    if (p.value.shape != a.shape) {
      throw FormatError("checkpoint: tensor '" + a.name + "' shape " + shape_string(a.shape) +
                        " does not match parameter shape " + shape_string(p.value.shape));
    }
    for (std::size_t i = 0; i < a.values.size(); ++i) p.value[i] = static_cast<T>(a.values[i]);
  }
}

}  // namespace unitsa::nn
