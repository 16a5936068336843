#include "token2vec/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "token2vec/errors.hpp"

namespace token2vec {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

struct FftwPlan {
  explicit FftwPlan(std::size_t n)
      : in(fftw_alloc_real(n)), out(fftw_alloc_complex(n / 2 + 1)),
        plan(fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE)) {}
  ~FftwPlan() {
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
  FftwPlan(const FftwPlan&) = delete;
  FftwPlan& operator=(const FftwPlan&) = delete;

  double* in;
  fftw_complex* out;
  fftw_plan plan;
};

}  // namespace

std::size_t LogmelConfig::frame_length() const {
  return static_cast<std::size_t>(std::lround(sample_rate * frame_ms / 1000.0));
}

std::size_t LogmelConfig::hop_length() const {
  return static_cast<std::size_t>(std::lround(sample_rate * hop_ms / 1000.0));
}

std::size_t LogmelConfig::fft_size() const {
  std::size_t n = 1;
  while (n < frame_length()) n <<= 1;
  return n;
}

std::size_t logmel_frame_count(std::size_t num_samples, const LogmelConfig& config) {
  const std::size_t frame = config.frame_length(), hop = config.hop_length();
  if (num_samples < frame) return 0;
  return 1 + (num_samples - frame) / hop;
}

std::vector<double> mel_filterbank(const LogmelConfig& config) {
  const std::size_t bins = config.fft_size() / 2 + 1;
  const double nyquist = config.sample_rate / 2.0;
  const double mel_hi = hz_to_mel(nyquist);
  std::vector<double> edges(config.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_hi * static_cast<double>(i) / static_cast<double>(config.n_mels + 1));
  }
  std::vector<double> bank(config.n_mels * bins, 0.0);
  for (std::size_t m = 0; m < config.n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t b = 0; b < bins; ++b) {
      const double hz = static_cast<double>(b) * config.sample_rate / static_cast<double>(config.fft_size());
      double w = 0.0;
      if (hz > lo && hz <= mid) w = (hz - lo) / (mid - lo);
      else if (hz > mid && hz < hi) w = (hi - hz) / (hi - mid);
      bank[m * bins + b] = w;
    }
  }
  return bank;
}

LogmelResult logmel_extract(std::span<const double> samples, std::uint32_t sample_rate, const LogmelConfig& config) {
  if (sample_rate != config.sample_rate) {
    throw ConfigError("logmel_extract: sample rate " + std::to_string(sample_rate) + " Hz, expected " +
                      std::to_string(config.sample_rate) + " Hz (resampling is not supported)");
  }
  if (config.n_mels == 0 || config.frame_length() == 0 || config.hop_length() == 0) {
    throw ConfigError("logmel_extract: n_mels, frame and hop must be positive");
  }
  LogmelResult result;
  const std::size_t frames = logmel_frame_count(samples.size(), config);
  result.too_short = frames == 0;
  const std::size_t frame_len = config.frame_length(), hop = config.hop_length();
  const std::size_t nfft = config.fft_size(), bins = nfft / 2 + 1;

  std::vector<double> window(frame_len);
  for (std::size_t i = 0; i < frame_len; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(frame_len));
  }
  const auto bank = mel_filterbank(config);
  std::vector<double> values(frames * config.n_mels);
  std::vector<double> power(bins);

  if (frames > 0) {
    FftwPlan fft(nfft);
    for (std::size_t f = 0; f < frames; ++f) {
      std::fill(fft.in, fft.in + nfft, 0.0);
      for (std::size_t i = 0; i < frame_len; ++i) fft.in[i] = samples[f * hop + i] * window[i];
      fftw_execute(fft.plan);
      for (std::size_t b = 0; b < bins; ++b) power[b] = fft.out[b][0] * fft.out[b][0] + fft.out[b][1] * fft.out[b][1];
      for (std::size_t m = 0; m < config.n_mels; ++m) {
        double e = 0.0;
        for (std::size_t b = 0; b < bins; ++b) e += bank[m * bins + b] * power[b];
        values[f * config.n_mels + m] = std::log(std::max(e, config.energy_floor));
      }
    }
  }
  result.features.frames = Tensor(Shape{frames, config.n_mels}, std::move(values));
  return result;
}

}  // namespace token2vec
