#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "token2vec/corpus_io.hpp"
#include "token2vec/token_sequence.hpp"

namespace token2vec {

/// Bijection between positional phonemes ("AH_B", "T_E", ...) and
/// contiguous ids, numbered in lexicographic order.
class PhonemeVocab {
 public:
  PhonemeVocab() = default;
  explicit PhonemeVocab(std::vector<std::string> sorted_symbols);

  std::size_t size() const { return symbols_.size(); }
  std::optional<std::int64_t> id(const std::string& symbol) const;
  const std::string& symbol(std::int64_t id) const;
  const std::vector<std::string>& symbols() const { return symbols_; }

  bool operator==(const PhonemeVocab& other) const { return symbols_ == other.symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::map<std::string, std::int64_t> index_;
};

// Position tag for phoneme `index` of a word with `length` phonemes.
std::string positional_phoneme(const std::string& base, std::size_t index, std::size_t length);

PhonemeVocab build_phoneme_vocab(const Lexicon& lexicon);
// "PHONEME_TAG<TAB>id" lines.
PhonemeVocab read_phoneme_vocab(const std::string& path);
void write_phoneme_vocab(const std::string& path, const PhonemeVocab& vocab);

struct PhonemizeResult {
  TokenSequence tokens;
  std::size_t oov_words = 0;
};

PhonemizeResult words_to_phonemes(const std::vector<std::string>& words, const Lexicon& lexicon,
                                  const PhonemeVocab& vocab, std::string utterance_id = {});

enum class UpsampleMode { kRepeat, kOriginal };

struct UpsampleConfig {
  UpsampleMode mode = UpsampleMode::kRepeat;
  // Per-phoneme repeat distributions; when absent, repeats are drawn from a
  // geometric distribution on {1, 2, ...} with mean `geometric_mean`.
  std::optional<DurationStats> stats;
  double geometric_mean = 4.0;
  std::uint64_t seed = 0;
};

// Repeats each token r >= 1 times, r drawn independently per occurrence. The
// random stream is derived from (config.seed, seq.id). `vocab` maps ids to
// symbols for per-phoneme stats lookup; without it the DEFAULT row is used.
TokenSequence upsample(const TokenSequence& seq, const UpsampleConfig& config, const PhonemeVocab* vocab = nullptr);

// Mode A: one DEFAULT distribution from the run lengths of speech tokens.
DurationStats estimate_duration_stats(const std::vector<TokenSequence>& speech_corpus);

// Mode B: per-phoneme distributions from observed repeat counts. Each entry
// is (positional phoneme, count); DEFAULT pools all observations.
DurationStats estimate_duration_stats_aligned(const std::vector<std::pair<std::string, std::uint32_t>>& durations);
// Parses "PHONEME<TAB>count count ..." lines into (phoneme, count) pairs.
std::vector<std::pair<std::string, std::uint32_t>> read_aligned_durations(const std::string& path);

}  // namespace token2vec
