#pragma once

// Versioned named-array container used for checkpoints and embedding caches.
//
// Layout (little-endian):
//   [0, 8)    magic "MATPACK\0"
//   [8, 12)   u32 format version
//   [12, 20)  u64 header length H
//   [20, 20+H) JSON header:
//       { "format_version": 1, "kind": str, "meta": {...}, "payload_bytes": n,
//         "payload_fnv1a": hex str,
//         "arrays": [ {"name", "dtype": "f32"|"f64", "shape": [rows, cols],
//                      "offset", "nbytes"} ... ] }
//   zero padding to an 8-byte boundary, then the payload. Array offsets are
//   relative to the payload start; arrays are row-major.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "matpac/error.hpp"
#include "matpac/tensor.hpp"

namespace matpac {

static_assert(std::endian::native == std::endian::little, "container format assumes a little-endian host");

inline constexpr char kContainerMagic[8] = {'M', 'A', 'T', 'P', 'A', 'C', 'K', '\0'};
inline constexpr std::uint32_t kContainerVersion = 1;

inline std::uint64_t fnv1a64(const unsigned char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <class T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>) return "f32";
  else if constexpr (std::is_same_v<T, double>) return "f64";
  else static_assert(sizeof(T) == 0, "unsupported dtype");
}

class ArrayContainer {
 public:
  struct Record {
    std::string name;
    std::string dtype;
    Index rows = 0;
    Index cols = 0;
    std::vector<unsigned char> bytes;
  };

  explicit ArrayContainer(std::string kind = "arrays") : kind_(std::move(kind)) {}

  const std::string& kind() const { return kind_; }
  nlohmann::json& meta() { return meta_; }
  const nlohmann::json& meta() const { return meta_; }
  const std::vector<Record>& records() const { return records_; }

  bool has(const std::string& name) const { return find(name) != nullptr; }

  template <class T>
  void put(const std::string& name, const Matrix<T>& m) {
    if (has(name)) throw CheckpointError("container: duplicate array '" + name + "'");
    Record r{name, dtype_name<T>(), m.rows(), m.cols(), {}};
    r.bytes.resize(static_cast<std::size_t>(m.size()) * sizeof(T));
    if (!r.bytes.empty()) std::memcpy(r.bytes.data(), m.data(), r.bytes.size());
    records_.push_back(std::move(r));
  }

  template <class T>
  Matrix<T> get(const std::string& name) const {
    const Record* r = find(name);
    if (r == nullptr) throw CheckpointError("container: missing array '" + name + "'");
    if (r->dtype != dtype_name<T>())
      throw CheckpointError("container: array '" + name + "' has dtype " + r->dtype + ", expected " +
                            dtype_name<T>());
    Matrix<T> m(r->rows, r->cols);
    if (!r->bytes.empty()) std::memcpy(m.data(), r->bytes.data(), r->bytes.size());
    return m;
  }

  /// Shape-checked read: throws ShapeError naming the array when dimensions differ.
  template <class T>
  Matrix<T> get(const std::string& name, Index rows, Index cols) const {
    const Record* r = find(name);
    if (r != nullptr && (r->rows != rows || r->cols != cols))
      throw ShapeError("checkpoint array '" + name + "' has shape " + std::to_string(r->rows) + "x" +
                       std::to_string(r->cols) + ", model expects " + std::to_string(rows) + "x" +
                       std::to_string(cols));
    return get<T>(name);
  }

  std::string serialize() const {
    nlohmann::json arrays = nlohmann::json::array();
    std::uint64_t offset = 0;
    std::string payload;
    for (const auto& r : records_) {
      arrays.push_back({{"name", r.name},
                        {"dtype", r.dtype},
                        {"shape", {r.rows, r.cols}},
                        {"offset", offset},
                        {"nbytes", r.bytes.size()}});
      payload.append(reinterpret_cast<const char*>(r.bytes.data()), r.bytes.size());
      offset += r.bytes.size();
    }
    nlohmann::json header = {{"format_version", kContainerVersion},
                             {"kind", kind_},
                             {"meta", meta_},
                             {"arrays", arrays},
                             {"payload_bytes", payload.size()},
                             {"payload_fnv1a", to_hex(fnv1a64(reinterpret_cast<const unsigned char*>(payload.data()),
                                                              payload.size()))}};
    const std::string h = header.dump();
    std::string out(kContainerMagic, 8);
    append_le(out, kContainerVersion);
    append_le(out, static_cast<std::uint64_t>(h.size()));
    out += h;
    out.append((8 - out.size() % 8) % 8, '\0');
    out += payload;
    return out;
  }

  static ArrayContainer deserialize(const std::string& bytes) {
    if (bytes.size() < 20 || std::memcmp(bytes.data(), kContainerMagic, 8) != 0)
      throw CheckpointError("container: bad magic (not a matpac array file)");
    std::uint32_t version = 0;
    std::uint64_t hlen = 0;
    std::memcpy(&version, bytes.data() + 8, 4);
    std::memcpy(&hlen, bytes.data() + 12, 8);
    if (version != kContainerVersion)
      throw CheckpointError("container: format version " + std::to_string(version) + " not supported (expected " +
                            std::to_string(kContainerVersion) + ")");
    if (hlen > bytes.size() - 20) throw CheckpointError("container: truncated header");
    nlohmann::json header;
    try {
      header = nlohmann::json::parse(bytes.begin() + 20, bytes.begin() + 20 + static_cast<std::ptrdiff_t>(hlen));
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointError(std::string("container: corrupt header: ") + e.what());
    }
    std::size_t start = 20 + hlen;
    start += (8 - start % 8) % 8;
    try {
      const auto payload_bytes = header.at("payload_bytes").get<std::uint64_t>();
      if (start > bytes.size() || bytes.size() - start != payload_bytes)
        throw CheckpointError("container: payload size mismatch (truncated or padded file)");
      const auto* payload = reinterpret_cast<const unsigned char*>(bytes.data() + start);
      if (to_hex(fnv1a64(payload, payload_bytes)) != header.at("payload_fnv1a").get<std::string>())
        throw CheckpointError("container: payload checksum mismatch");
      ArrayContainer c(header.at("kind").get<std::string>());
      c.meta_ = header.at("meta");
      for (const auto& a : header.at("arrays")) {
        Record r;
        r.name = a.at("name").get<std::string>();
        r.dtype = a.at("dtype").get<std::string>();
        r.rows = a.at("shape").at(0).get<Index>();
        r.cols = a.at("shape").at(1).get<Index>();
        const auto off = a.at("offset").get<std::uint64_t>();
        const auto n = a.at("nbytes").get<std::uint64_t>();
        const std::size_t width = r.dtype == "f32" ? 4 : r.dtype == "f64" ? 8 : 0;
        if (width == 0) throw CheckpointError("container: unknown dtype " + r.dtype);
        if (off + n > payload_bytes || n != static_cast<std::uint64_t>(r.rows * r.cols) * width)
          throw CheckpointError("container: array '" + r.name + "' out of bounds");
        r.bytes.assign(payload + off, payload + off + n);
        c.records_.push_back(std::move(r));
      }
      return c;
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointError(std::string("container: malformed header: ") + e.what());
    }
  }

  void save(const std::filesystem::path& path) const {
    const auto bytes = serialize();
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary);
      if (!out) throw CheckpointError("container: cannot write " + tmp);
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      if (!out) throw CheckpointError("container: write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
  }

  static ArrayContainer load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("container: cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
  }

 private:
  const Record* find(const std::string& name) const {
    for (const auto& r : records_)
      if (r.name == name) return &r;
    return nullptr;
  }

  template <class U>
  static void append_le(std::string& out, U v) {
    char buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    out.append(buf, sizeof(U));
  }

  static std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    return s;
  }

  std::string kind_;
  nlohmann::json meta_ = nlohmann::json::object();
  std::vector<Record> records_;
};

}  // namespace matpac
