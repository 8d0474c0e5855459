#pragma once

// 16-bit PCM mono WAV I/O.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "lwce/common.hpp"

namespace lwce {

struct AudioClip {
  int sample_rate = 16000;
  std::vector<double> samples;

  std::size_t size() const { return samples.size(); }
  friend bool operator==(const AudioClip&, const AudioClip&) = default;
};

namespace detail {

inline std::uint32_t read_le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_le32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_le16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace detail

/// Parses an in-memory WAV image. `what` names the source in diagnostics.
inline AudioClip parse_wav(const std::string& bytes, const std::string& what = "<memory>") {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0) {
    throw DataError(what + ": not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  int rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= n) {
    const unsigned char* chunk = p + pos;
    const std::uint32_t len = detail::read_le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16 || body + 16 > n) throw DataError(what + ": truncated fmt chunk");
      const std::uint16_t format = detail::read_le16(p + body);
      const std::uint16_t channels = detail::read_le16(p + body + 2);
      rate = static_cast<int>(detail::read_le32(p + body + 4));
      const std::uint16_t bits = detail::read_le16(p + body + 14);
      if (format != 1) throw DataError(what + ": unsupported format code " + std::to_string(format) + " (need PCM 1)");
      if (channels != 1) throw DataError(what + ": " + std::to_string(channels) + " channels (need mono)");
      if (bits != 16) throw DataError(what + ": " + std::to_string(bits) + "-bit samples (need 16-bit)");
      if (rate <= 0) throw DataError(what + ": invalid sample rate");
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw DataError(what + ": data chunk before fmt chunk");
      if (body + len > n) throw DataError(what + ": truncated data chunk");
      if (len % 2 != 0) throw DataError(what + ": odd data chunk length");
      AudioClip clip;
      clip.sample_rate = rate;
      clip.samples.resize(len / 2);
      for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        const auto s = static_cast<std::int16_t>(detail::read_le16(p + body + 2 * i));
        clip.samples[i] = static_cast<double>(s) / 32768.0;
      }
      return clip;
    }
    pos = body + len + (len & 1u);
  }
  throw DataError(what + (have_fmt ? ": missing data chunk" : ": missing fmt chunk"));
}

inline AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_wav(bytes, path.string());
}

inline std::int16_t quantize_sample(double x) {
  const double c = std::clamp(x, -1.0, 1.0);
  return static_cast<std::int16_t>(std::lround(c * 32767.0));
}

inline std::string encode_wav(const AudioClip& clip) {
  if (clip.sample_rate <= 0) throw std::invalid_argument("encode_wav: sample rate must be positive");
  const auto data_len = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  detail::put_le32(out, 36 + data_len);
  out += "WAVEfmt ";
  detail::put_le32(out, 16);
  detail::put_le16(out, 1);
  detail::put_le16(out, 1);
  detail::put_le32(out, static_cast<std::uint32_t>(clip.sample_rate));
  detail::put_le32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  detail::put_le16(out, 2);
  detail::put_le16(out, 16);
  out += "data";
  detail::put_le32(out, data_len);
  for (double x : clip.samples) detail::put_le16(out, static_cast<std::uint16_t>(quantize_sample(x)));
  return out;
}

inline void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::string bytes = encode_wav(clip);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace lwce
