#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "token2vec/corpus_io.hpp"

namespace token2vec {

struct LogmelConfig {
  std::uint32_t sample_rate = 16000;
  std::size_t n_mels = 80;
  double frame_ms = 25.0;
  double hop_ms = 20.0;
  double energy_floor = 1e-10;

  std::size_t frame_length() const;
  std::size_t hop_length() const;
  // Smallest power of two >= frame_length().
  std::size_t fft_size() const;
};

struct LogmelResult {
  FeatureMatrix features;
  // Set when the input held less than one full frame; features are then 0 x n_mels.
  bool too_short = false;
};

std::size_t logmel_frame_count(std::size_t num_samples, const LogmelConfig& config);

// HTK-style triangular filters over the one-sided power spectrum,
// [n_mels x (fft_size/2 + 1)] row-major.
std::vector<double> mel_filterbank(const LogmelConfig& config);

// Hann-windowed log mel-filterbank energies; log(max(energy, energy_floor)).
// Throws ConfigError when sample_rate differs from config.sample_rate.
LogmelResult logmel_extract(std::span<const double> samples, std::uint32_t sample_rate,
                            const LogmelConfig& config = {});

}  // namespace token2vec
