#pragma once

// PCM WAV reader/writer. Supported input: RIFF/WAVE, format tag 1 (PCM),
// 16-bit signed little-endian, mono. Samples are scaled by 1/32768 into
// [-1, 1). The writer emits the same layout and exists so synthetic clips
// and round-trip tests share one code path.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace asda {

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  std::uint32_t sample_rate = 16000;

  double seconds() const {
    return sample_rate ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t read_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_u32le(std::vector<unsigned char>& v, std::uint32_t x) {
  v.push_back(x & 0xff);
  v.push_back((x >> 8) & 0xff);
  v.push_back((x >> 16) & 0xff);
  v.push_back((x >> 24) & 0xff);
}
inline void put_u16le(std::vector<unsigned char>& v, std::uint16_t x) {
  v.push_back(x & 0xff);
  v.push_back((x >> 8) & 0xff);
}

}  // namespace detail

inline Waveform load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_wav: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error("load_wav: " + path + " is not a RIFF/WAVE file");

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t data_off = 0, data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t len = detail::read_u32le(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size())
      throw std::runtime_error("load_wav: truncated chunk '" + std::string(id, 4) + "' in " + path);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw std::runtime_error("load_wav: truncated fmt chunk in " + path);
      format = detail::read_u16le(bytes.data() + body);
      channels = detail::read_u16le(bytes.data() + body + 2);
      rate = detail::read_u32le(bytes.data() + body + 4);
      bits = detail::read_u16le(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_off = body;
      data_len = len;
    }
    pos = body + len + (len & 1);  // chunks are word-aligned
  }
  if (!have_fmt || data_off == 0)
    throw std::runtime_error("load_wav: missing fmt or data chunk in " + path);
  if (format != 1)
    throw std::runtime_error("load_wav: unsupported format tag " + std::to_string(format) +
                             " (only PCM) in " + path);
  if (channels != 1)
    throw std::runtime_error("load_wav: unsupported channel count " + std::to_string(channels) +
                             " (only mono) in " + path);
  if (bits != 16)
    throw std::runtime_error("load_wav: unsupported bit depth " + std::to_string(bits) +
                             " (only 16-bit) in " + path);

  Waveform w;
  w.sample_rate = rate;
  const std::size_t n = data_len / 2;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::int16_t s = static_cast<std::int16_t>(
        detail::read_u16le(bytes.data() + data_off + 2 * i));
    w.samples[i] = static_cast<double>(s) / 32768.0;
  }
  return w;
}

inline void save_wav(const std::string& path, const Waveform& w) {
  std::vector<unsigned char> bytes;
  bytes.reserve(44 + 2 * w.samples.size());
  const std::uint32_t data_len = static_cast<std::uint32_t>(2 * w.samples.size());
  bytes.insert(bytes.end(), {'R', 'I', 'F', 'F'});
  detail::put_u32le(bytes, 36 + data_len);
  bytes.insert(bytes.end(), {'W', 'A', 'V', 'E'});
  bytes.insert(bytes.end(), {'f', 'm', 't', ' '});
  detail::put_u32le(bytes, 16);
  detail::put_u16le(bytes, 1);  // PCM
  detail::put_u16le(bytes, 1);  // mono
  detail::put_u32le(bytes, w.sample_rate);
  detail::put_u32le(bytes, w.sample_rate * 2);  // byte rate
  detail::put_u16le(bytes, 2);                  // block align
  detail::put_u16le(bytes, 16);                 // bits
  bytes.insert(bytes.end(), {'d', 'a', 't', 'a'});
  detail::put_u32le(bytes, data_len);
  for (double v : w.samples) {
    double clamped = std::max(-1.0, std::min(1.0, v));
    int s = static_cast<int>(std::lround(clamped * 32767.0));
    detail::put_u16le(bytes, static_cast<std::uint16_t>(static_cast<std::int16_t>(s)));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_wav: cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("save_wav: short write to " + path);
}

}  // namespace asda
