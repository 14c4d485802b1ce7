#pragma once

// Log-mel filterbank features. 25 ms Hamming frames every 10 ms at 16 kHz
// (400-sample window, 160-sample hop), 512-point zero-padded FFT, 128
// triangular mel filters over 0-8000 Hz, natural log with a fixed energy
// floor. frames(len) = floor((len - 400)/160) + 1, so a 10 s clip gives
// 998 frames.
//
// The FBNK dump format is a 16-byte header -- magic "FBNK", u32 frames,
// u32 mels, u32 reserved, all little-endian -- followed by row-major
// 32-bit LE floats.

#include <complex>
#include <cstdint>
#include <fstream>

#include "asda/tensor.hpp"
#include "asda/wav.hpp"

namespace asda {

struct FbankConfig {
  std::size_t n_mels = 128;
  std::size_t fft_size = 512;
  std::size_t frame_length = 400;  // 25 ms at 16 kHz
  std::size_t frame_shift = 160;   // 10 ms at 16 kHz
  double mel_low_hz = 0.0;
  double mel_high_hz = 8000.0;
  double log_floor = 1e-10;
  bool normalize = false;  // per-utterance mean/variance normalization
};

struct FbankSpectrogram {
  // frames x n_mels, row-major
  std::vector<double> values;
  std::size_t frames = 0;
  std::size_t mels = 0;

  double at(std::size_t t, std::size_t m) const { return values[t * mels + m]; }
};

namespace detail {

// In-place iterative radix-2 FFT; n must be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw std::invalid_argument("fft_radix2: size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        std::complex<double> u = a[i + j];
        std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

inline double hz_to_mel(double hz) { return 1127.0 * std::log1p(hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

}  // namespace detail

// Triangular mel filterbank over FFT bins 0..fft_size/2; filter j rises from
// edge j to edge j+1 and falls to edge j+2, edges equally spaced in mel.
class MelFilterbank {
 public:
  MelFilterbank(const FbankConfig& cfg, std::uint32_t sample_rate) : cfg_(cfg) {
    const std::size_t n_bins = cfg.fft_size / 2 + 1;
    const double mel_lo = detail::hz_to_mel(cfg.mel_low_hz);
    const double mel_hi = detail::hz_to_mel(cfg.mel_high_hz);
    edges_hz_.resize(cfg.n_mels + 2);
    for (std::size_t i = 0; i < edges_hz_.size(); ++i)
      edges_hz_[i] = detail::mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                                    static_cast<double>(cfg.n_mels + 1));
    weights_.assign(cfg.n_mels * n_bins, 0.0);
    const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(cfg.fft_size);
    for (std::size_t j = 0; j < cfg.n_mels; ++j)
      for (std::size_t k = 0; k < n_bins; ++k)
        weights_[j * n_bins + k] = triangle(j, static_cast<double>(k) * bin_hz);
  }

  // Response of filter j at a frequency in Hz.
  double triangle(std::size_t j, double hz) const {
    const double lo = edges_hz_[j], mid = edges_hz_[j + 1], hi = edges_hz_[j + 2];
    if (hz <= lo || hz >= hi) return 0.0;
    return hz <= mid ? (hz - lo) / (mid - lo) : (hi - hz) / (hi - mid);
  }

  double center_hz(std::size_t j) const { return edges_hz_[j + 1]; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t n_bins() const { return cfg_.fft_size / 2 + 1; }

 private:
  FbankConfig cfg_;
  std::vector<double> edges_hz_;
  std::vector<double> weights_;  // n_mels x n_bins
};

inline FbankSpectrogram compute_fbank(const Waveform& w, const FbankConfig& cfg = {}) {
  if (w.sample_rate != 16000)
    throw std::invalid_argument("compute_fbank: sample rate " + std::to_string(w.sample_rate) +
                                " unsupported, expected 16000");
  if (w.samples.size() < cfg.frame_length)
    throw std::invalid_argument("compute_fbank: clip of " + std::to_string(w.samples.size()) +
                                " samples is shorter than one " +
                                std::to_string(cfg.frame_length) + "-sample frame");
  const std::size_t n_frames = (w.samples.size() - cfg.frame_length) / cfg.frame_shift + 1;
  const std::size_t n_bins = cfg.fft_size / 2 + 1;

  // Hamming window
  std::vector<double> window(cfg.frame_length);
  for (std::size_t i = 0; i < cfg.frame_length; ++i)
    window[i] = 0.54 - 0.46 * std::cos(2.0 * M_PI * static_cast<double>(i) /
                                       static_cast<double>(cfg.frame_length - 1));

  MelFilterbank mel(cfg, w.sample_rate);

  FbankSpectrogram out;
  out.frames = n_frames;
  out.mels = cfg.n_mels;
  out.values.resize(n_frames * cfg.n_mels);

  std::vector<std::complex<double>> buf(cfg.fft_size);
  std::vector<double> power(n_bins);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const double* src = w.samples.data() + t * cfg.frame_shift;
    for (std::size_t i = 0; i < cfg.fft_size; ++i)
      buf[i] = i < cfg.frame_length ? std::complex<double>(src[i] * window[i], 0.0)
                                    : std::complex<double>(0.0, 0.0);
    detail::fft_radix2(buf);
    for (std::size_t k = 0; k < n_bins; ++k) power[k] = std::norm(buf[k]);
    const auto& wts = mel.weights();
    for (std::size_t j = 0; j < cfg.n_mels; ++j) {
      double e = 0.0;
      for (std::size_t k = 0; k < n_bins; ++k) e += wts[j * n_bins + k] * power[k];
      out.values[t * cfg.n_mels + j] = std::log(std::max(e, cfg.log_floor));
    }
  }

  if (cfg.normalize) {
    double mu = 0.0;
    for (double v : out.values) mu += v;
    mu /= static_cast<double>(out.values.size());
    double var = 0.0;
    for (double v : out.values) var += (v - mu) * (v - mu);
    var /= static_cast<double>(out.values.size());
    const double inv = 1.0 / std::sqrt(var + 1e-10);
    for (double& v : out.values) v = (v - mu) * inv;
  }
  return out;
}

inline void save_fbnk(const std::string& path, const FbankSpectrogram& spec) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_fbnk: cannot open " + path + " for writing");
  unsigned char header[16] = {'F', 'B', 'N', 'K'};
  auto put32 = [&](std::size_t off, std::uint32_t v) {
    header[off] = v & 0xff;
    header[off + 1] = (v >> 8) & 0xff;
    header[off + 2] = (v >> 16) & 0xff;
    header[off + 3] = (v >> 24) & 0xff;
  };
  put32(4, static_cast<std::uint32_t>(spec.frames));
  put32(8, static_cast<std::uint32_t>(spec.mels));
  put32(12, 0);
  out.write(reinterpret_cast<const char*>(header), 16);
  std::vector<float> f32(spec.values.begin(), spec.values.end());
  out.write(reinterpret_cast<const char*>(f32.data()),
            static_cast<std::streamsize>(f32.size() * sizeof(float)));
  if (!out) throw std::runtime_error("save_fbnk: short write to " + path);
}

inline FbankSpectrogram load_fbnk(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_fbnk: cannot open " + path);
  unsigned char header[16];
  in.read(reinterpret_cast<char*>(header), 16);
  if (in.gcount() != 16 || std::memcmp(header, "FBNK", 4) != 0)
    throw std::runtime_error("load_fbnk: bad header in " + path);
  auto get32 = [&](std::size_t off) {
    return static_cast<std::uint32_t>(header[off]) | (header[off + 1] << 8) |
           (header[off + 2] << 16) | (static_cast<std::uint32_t>(header[off + 3]) << 24);
  };
  FbankSpectrogram spec;
  spec.frames = get32(4);
  spec.mels = get32(8);
  std::vector<float> f32(spec.frames * spec.mels);
  in.read(reinterpret_cast<char*>(f32.data()),
          static_cast<std::streamsize>(f32.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(f32.size() * sizeof(float)))
    throw std::runtime_error("load_fbnk: truncated payload in " + path);
  spec.values.assign(f32.begin(), f32.end());
  return spec;
}

}  // namespace asda
