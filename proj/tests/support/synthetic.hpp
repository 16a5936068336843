#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "token2vec/corpus_io.hpp"
#include "token2vec/text_tokenizer.hpp"
#include "token2vec/token_sequence.hpp"

namespace token2vec::testing {

struct SyntheticConfig {
  std::size_t base_phonemes = 12;
  std::size_t words = 40;
  std::size_t min_word_phonemes = 2;
  std::size_t max_word_phonemes = 5;
  std::size_t min_sentence_words = 4;
  std::size_t max_sentence_words = 9;
  std::size_t speech_utterances = 200;
  std::size_t text_sentences = 200;
  std::size_t speech_vocab = 64;
  // Each positional phoneme maps to a fixed sequence of this many distinct speech tokens.
  std::size_t tokens_per_phoneme = 1;
  // Each emitted speech token is held for 1 + Geom frames with this mean.
  double mean_run = 3.0;
  std::uint64_t seed = 7;
};

// A paired-distribution corpus: speech tokens are generated from phoneme
// sequences through a fixed random phoneme -> token-run map; text sentences
// are drawn from the same word distribution but are distinct utterances.
struct SyntheticCorpus {
  Lexicon lexicon;
  std::string lexicon_text;
  PhonemeVocab vocab;
  std::vector<std::vector<std::string>> text_sentences;
  std::vector<TokenSequence> speech;
  std::vector<TokenSequence> text_phonemes;  // original (not up-sampled)
  std::vector<std::vector<std::int64_t>> token_map;
};

SyntheticCorpus make_synthetic_corpus(const SyntheticConfig& config = {});

// Writes lexicon.txt, sentences.txt, speech.tsv into `dir`.
void write_synthetic_corpus(const SyntheticCorpus& corpus, const std::string& dir);

}  // namespace token2vec::testing
