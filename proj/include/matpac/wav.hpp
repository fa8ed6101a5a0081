#pragma once

// RIFF/WAVE reading and writing. Reads 8/16/24/32-bit integer PCM and 32/64-bit
// float, including WAVE_FORMAT_EXTENSIBLE; writes 16-bit PCM or 32-bit float.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "matpac/error.hpp"

namespace matpac::wav {

struct Audio {
  int sample_rate = 0;
  int channels = 0;
  std::vector<float> interleaved;  ///< frames * channels values in [-1, 1]

  std::size_t frames() const { return channels == 0 ? 0 : interleaved.size() / static_cast<std::size_t>(channels); }
};

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}
inline std::uint16_t read_u16(const unsigned char* p) { return std::uint16_t(p[0] | (p[1] << 8)); }

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

}  // namespace detail

inline Audio decode(const std::vector<unsigned char>& bytes, const std::string& origin = "<memory>") {
  using namespace detail;
  auto fail = [&](const std::string& why) { throw IngestionError(origin + ": " + why); };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    fail("not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  bool have_fmt = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || size > avail) fail("truncated fmt chunk");
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (format == 0xFFFE && size >= 40) format = read_u16(chunk + 32);  // sub-format GUID prefix
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = std::min<std::size_t>(size, avail);
    }
    pos = body + size + (size & 1u);
    if (size > avail) break;
  }
  if (!have_fmt) fail("missing fmt chunk");
  if (data == nullptr) fail("missing data chunk");
  if (channels == 0 || rate == 0) fail("invalid channel count or sample rate");

  const std::size_t width = bits / 8u;
  if (width == 0) fail("invalid bit depth");
  const bool is_float = format == 3;
  if (!(format == 1 || is_float)) fail("unsupported format tag " + std::to_string(format));
  if (is_float && bits != 32 && bits != 64) fail("unsupported float width");
  if (!is_float && (bits < 8 || bits > 32 || bits % 8 != 0)) fail("unsupported PCM width");

  const std::size_t n = data_size / width;
  Audio a;
  a.sample_rate = static_cast<int>(rate);
  a.channels = channels;
  a.interleaved.resize(n - n % channels);
  for (std::size_t i = 0; i < a.interleaved.size(); ++i) {
    const unsigned char* p = data + i * width;
    float v = 0.0F;
    if (is_float && bits == 32) {
      v = std::bit_cast<float>(read_u32(p));
    } else if (is_float) {
      std::uint64_t u = std::uint64_t(read_u32(p)) | (std::uint64_t(read_u32(p + 4)) << 32);
      v = static_cast<float>(std::bit_cast<double>(u));
    } else if (bits == 8) {
      v = (static_cast<float>(p[0]) - 128.0F) / 128.0F;
    } else {
      std::uint32_t u = 0;
      for (std::size_t b = 0; b < width; ++b) u |= std::uint32_t(p[b]) << (8 * b);
      const int shift = 32 - static_cast<int>(bits);
      const auto s = static_cast<std::int32_t>(u << shift) >> shift;
      v = static_cast<float>(static_cast<double>(s) / std::ldexp(1.0, static_cast<int>(bits) - 1));
    }
    if (!std::isfinite(v)) fail("non-finite sample");
    a.interleaved[i] = v;
  }
  if (a.interleaved.empty()) fail("no samples");
  return a;
}

inline Audio read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError(path + ": cannot open");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.empty()) throw IngestionError(path + ": empty file");
  return decode(bytes, path);
}

enum class Encoding { pcm16, float32 };

inline std::string encode(const Audio& a, Encoding enc = Encoding::pcm16) {
  using namespace detail;
  const std::uint16_t bits = enc == Encoding::pcm16 ? 16 : 32;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(a.interleaved.size() * (bits / 8u));
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, enc == Encoding::pcm16 ? 1 : 3);
  put_u16(out, static_cast<std::uint16_t>(a.channels));
  put_u32(out, static_cast<std::uint32_t>(a.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(a.sample_rate * a.channels * (bits / 8)));
  put_u16(out, static_cast<std::uint16_t>(a.channels * (bits / 8)));
  put_u16(out, bits);
  out += "data";
  put_u32(out, data_bytes);
  for (float v : a.interleaved) {
    if (enc == Encoding::pcm16) {
      const float c = std::clamp(v, -1.0F, 1.0F);
      put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lrint(c * 32767.0F))));
    } else {
      put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
  }
  return out;
}

inline void write(const std::string& path, const Audio& a, Encoding enc = Encoding::pcm16) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError(path + ": cannot open for writing");
  const auto bytes = encode(a, enc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace matpac::wav
