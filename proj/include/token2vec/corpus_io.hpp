#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "token2vec/tensor.hpp"
#include "token2vec/token_sequence.hpp"

namespace token2vec {

// ---------------------------------------------------------------------------
// Frame features
// ---------------------------------------------------------------------------

/// Per-utterance [num_frames x feat_dim] frame features. Stored on disk as
/// a "TV2F" container: magic, u32 version=1, u32 num_frames, u32 feat_dim,
/// then float32 values in row-major order, all little-endian.
struct FeatureMatrix {
  std::string id;
  Tensor frames{Shape{0, 0}};

  std::size_t num_frames() const { return frames.shape()[0]; }
  std::size_t feat_dim() const { return frames.shape()[1]; }
};

inline constexpr std::uint32_t kFeatureFileVersion = 1;

FeatureMatrix read_feature_file(const std::string& path);
// Values are narrowed to float32; the utterance id is not stored.
void write_feature_file(const std::string& path, const FeatureMatrix& features);
// Reads only the header and returns {num_frames, feat_dim}.
std::pair<std::uint32_t, std::uint32_t> read_feature_header(const std::string& path);

// ---------------------------------------------------------------------------
// Manifest (JSON lines: {"id", "path", "frames"})
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string id;
  std::string path;
  std::uint64_t frames = 0;

  bool operator==(const ManifestEntry&) const = default;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
};

// Relative paths in the file are resolved against the manifest's directory.
Manifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const Manifest& manifest);
// Checks id uniqueness and that every frame count matches its feature file.
void validate_manifest(const Manifest& manifest);

// ---------------------------------------------------------------------------
// Lexicon ("WORD PH1 PH2 ...", ';' comments)
// ---------------------------------------------------------------------------

struct Lexicon {
  std::map<std::string, std::vector<std::string>> entries;
  std::size_t duplicate_warnings = 0;

  std::set<std::string> inventory() const;
  const std::vector<std::string>* find(const std::string& word) const;
};

Lexicon parse_lexicon(const std::string& path);
Lexicon parse_lexicon_text(const std::string& text);

// ---------------------------------------------------------------------------
// Duration statistics (TSV "PHONEME<TAB>count:prob,...", "DEFAULT" row)
// ---------------------------------------------------------------------------

/// Distribution over integer repeat counts, sorted by count.
struct RepeatDistribution {
  std::vector<std::pair<std::uint32_t, double>> probs;

  double mean() const;
  bool operator==(const RepeatDistribution&) const = default;
};

struct DurationStats {
  std::map<std::string, RepeatDistribution> per_phoneme;
  RepeatDistribution fallback;
  // Number of rows whose probabilities had to be renormalized on read.
  std::size_t normalization_warnings = 0;

  const RepeatDistribution& lookup(const std::string& phoneme) const;
};

inline constexpr const char* kDefaultDurationKey = "DEFAULT";

DurationStats read_duration_stats(const std::string& path);
DurationStats parse_duration_stats(const std::string& text);
void write_duration_stats(const std::string& path, const DurationStats& stats);
std::string format_duration_stats(const DurationStats& stats);

// ---------------------------------------------------------------------------
// Token corpus ("id<TAB>speech|text<TAB>space separated ids")
// ---------------------------------------------------------------------------

std::vector<TokenSequence> read_token_corpus(const std::string& path);
std::vector<TokenSequence> parse_token_corpus(const std::string& text);
void write_token_corpus(const std::string& path, const std::vector<TokenSequence>& corpus);
std::string format_token_corpus(const std::vector<TokenSequence>& corpus);

// ---------------------------------------------------------------------------
// Audio
// ---------------------------------------------------------------------------

struct Waveform {
  std::uint32_t sample_rate = 16000;
  std::vector<double> samples;  // mono, scaled to [-1, 1)
};

// 16-bit PCM mono RIFF/WAVE only.
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& wave);

}  // namespace token2vec
