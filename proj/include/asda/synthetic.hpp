#pragma once

// Synthetic clip generator: label-bearing tone/chirp/noise mixtures with
// class-dependent spectral patterns, so toy classification and pretraining
// run without any dataset download.
//
//   class 0  low tone   (centered near 500 Hz)
//   class 1  high tone  (centered near 2 kHz)
//   class 2  rising chirp 500 Hz -> 2.5 kHz
//   class 3  broadband noise burst
// Extra classes cycle tones at interleaved center frequencies.

#include <random>

#include "asda/wav.hpp"

namespace asda {

struct SyntheticClip {
  Waveform wave;
  int label = -1;
};

inline SyntheticClip synth_clip(int class_id, std::mt19937_64& rng, double seconds = 1.0) {
  const std::uint32_t rate = 16000;
  const std::size_t n = static_cast<std::size_t>(seconds * rate);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double amplitude = 0.25 + 0.15 * unit(rng);
  const double phase = 2.0 * M_PI * unit(rng);
  const double jitter = 0.9 + 0.2 * unit(rng);

  SyntheticClip clip;
  clip.label = class_id;
  clip.wave.sample_rate = rate;
  clip.wave.samples.resize(n);

  auto tone_at = [&](double hz) {
    for (std::size_t i = 0; i < n; ++i)
      clip.wave.samples[i] =
          amplitude * std::sin(phase + 2.0 * M_PI * hz * static_cast<double>(i) / rate);
  };

  const int kind = class_id % 4;
  if (kind == 0) {
    tone_at(500.0 * jitter);
  } else if (kind == 1) {
    tone_at(2000.0 * jitter);
  } else if (kind == 2) {
    // linear chirp 500 -> 2500 Hz
    const double f0 = 500.0 * jitter, f1 = 2500.0 * jitter;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / rate;
      const double inst = f0 + (f1 - f0) * t / (2.0 * seconds);  // phase integral
      clip.wave.samples[i] = amplitude * std::sin(phase + 2.0 * M_PI * inst * t);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i)
      clip.wave.samples[i] = 0.5 * amplitude * gauss(rng);
  }
  // higher class indices reuse the tone shape at shifted frequencies
  if (class_id >= 4 && (kind == 0 || kind == 1)) tone_at((700.0 + 450.0 * class_id) * jitter);

  // low noise floor on every clip
  for (double& v : clip.wave.samples) v += 0.01 * gauss(rng);
  return clip;
}

// Round-robin over classes, deterministic under seed.
inline std::vector<SyntheticClip> synth_dataset(std::size_t count, std::size_t n_classes,
                                                std::uint64_t seed, double seconds = 1.0) {
  std::mt19937_64 rng(seed);
  std::vector<SyntheticClip> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(synth_clip(static_cast<int>(i % n_classes), rng, seconds));
  return out;
}

}  // namespace asda
