#include <gtest/gtest.h>

#include <random>

#include "synthetic.hpp"
#include "tempdir.hpp"
#include "token2vec/errors.hpp"
#include "token2vec/speech_tokenizer.hpp"
#include "token2vec/text_tokenizer.hpp"

namespace token2vec {
namespace {

std::vector<std::string> symbols_of(const TokenSequence& seq, const PhonemeVocab& vocab) {
  std::vector<std::string> out;
  for (auto id : seq.ids) out.push_back(vocab.symbol(id));
  return out;
}

TokenSequence text(std::vector<std::int64_t> ids, std::string id = "t") {
  TokenSequence s;
  s.id = std::move(id);
  s.modality = Modality::kText;
  s.ids = std::move(ids);
  return s;
}

TEST(Phonemize, TaggingRules) {
  const Lexicon lex = parse_lexicon_text("HELLO HH AH L OW\nA AH\nTO T UW\n");
  const PhonemeVocab vocab = build_phoneme_vocab(lex);
  EXPECT_EQ(symbols_of(words_to_phonemes({"hello"}, lex, vocab).tokens, vocab),
            (std::vector<std::string>{"HH_B", "AH_I", "L_I", "OW_E"}));
  EXPECT_EQ(symbols_of(words_to_phonemes({"A"}, lex, vocab).tokens, vocab), (std::vector<std::string>{"AH_S"}));
}

TEST(Phonemize, SentenceMatchesHandLookupAndCountsOov) {
  const Lexicon lex = parse_lexicon_text("HELLO HH AH L OW\nA AH\nTO T UW\n");
  const PhonemeVocab vocab = build_phoneme_vocab(lex);
  const auto r = words_to_phonemes({"TO", "XYZZY", "A", "HELLO"}, lex, vocab);
  EXPECT_EQ(r.oov_words, 1u);
  std::vector<std::int64_t> expected;
  for (const char* s : {"T_B", "UW_E", "AH_S", "HH_B", "AH_I", "L_I", "OW_E"}) expected.push_back(*vocab.id(s));
  EXPECT_EQ(r.tokens.ids, expected);
  EXPECT_EQ(r.tokens.modality, Modality::kText);
  EXPECT_EQ(r.tokens.vocab_size, vocab.size());
}

TEST(Vocab, EnumerationDeterminismAndBound) {
  const Lexicon lex = parse_lexicon_text("A AH\nTO T UW\n");
  const PhonemeVocab v = build_phoneme_vocab(lex);
  EXPECT_EQ(v.symbols(), (std::vector<std::string>{"AH_S", "T_B", "UW_E"}));
  EXPECT_EQ(build_phoneme_vocab(lex), v);
  EXPECT_THROW(build_phoneme_vocab(Lexicon{}), ConfigError);

  const auto corpus = testing::make_synthetic_corpus();
  EXPECT_LE(corpus.vocab.size(), 4 * corpus.lexicon.inventory().size());
}

TEST(Vocab, FileRoundTrip) {
  const PhonemeVocab v = build_phoneme_vocab(parse_lexicon_text("HELLO HH AH L OW\nA AH\n"));
  testing::TempDir dir;
  write_phoneme_vocab(dir.file("v.tsv"), v);
  EXPECT_EQ(read_phoneme_vocab(dir.file("v.tsv")), v);
}

TEST(Upsample, OriginalIsIdentity) {
  UpsampleConfig cfg;
  cfg.mode = UpsampleMode::kOriginal;
  const TokenSequence s = text({4, 1, 1, 9});
  EXPECT_EQ(upsample(s, cfg), s);
}

TEST(Upsample, DegenerateStatsRepeatExactly) {
  UpsampleConfig cfg;
  cfg.stats = parse_duration_stats("DEFAULT\t3:1\n");
  EXPECT_EQ(upsample(text({7, 9}), cfg).ids, (std::vector<std::int64_t>{7, 7, 7, 9, 9, 9}));
}

TEST(Upsample, PerPhonemeStatsNeedVocab) {
  const PhonemeVocab vocab({"AA_B", "BB_E"});
  UpsampleConfig cfg;
  cfg.stats = parse_duration_stats("AA_B\t2:1\nDEFAULT\t5:1\n");
  EXPECT_EQ(upsample(text({0, 1}), cfg, &vocab).ids, (std::vector<std::int64_t>{0, 0, 1, 1, 1, 1, 1}));
}

TEST(Upsample, GeometricFallbackMean) {
  UpsampleConfig cfg;
  cfg.geometric_mean = 4.0;
  cfg.seed = 3;
  std::size_t in = 0, out = 0;
  for (int i = 0; i < 100; ++i) {
    std::vector<std::int64_t> ids(100);
    for (std::size_t j = 0; j < ids.size(); ++j) ids[j] = static_cast<std::int64_t>(j % 2);
    const auto s = text(ids, "s" + std::to_string(i));
    in += s.ids.size();
    out += upsample(s, cfg).ids.size();
  }
  EXPECT_NEAR(static_cast<double>(out) / in, 4.0, 0.08);
}

TEST(Upsample, OnlyMultiplicitiesChangeAndReduceInverts) {
  std::mt19937_64 rng(4);
  UpsampleConfig cfg;
  cfg.seed = 9;
  for (int t = 0; t < 300; ++t) {
    std::vector<std::int64_t> ids;
    for (std::size_t n = rng() % 40; ids.size() < n;) {
      const auto v = static_cast<std::int64_t>(rng() % 6);
      if (ids.empty() || ids.back() != v) ids.push_back(v);
    }
    const auto s = text(ids, "x" + std::to_string(t));
    const auto up = upsample(s, cfg);
    EXPECT_GE(up.ids.size(), s.ids.size());
    EXPECT_EQ(run_length_reduce(up).ids, s.ids);
    EXPECT_EQ(upsample(s, cfg), up);
  }
}

TEST(Upsample, StreamDependsOnUtteranceIdNotCallOrder) {
  UpsampleConfig cfg;
  std::vector<std::int64_t> ids(50);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::int64_t>(i % 2);
  const auto a = upsample(text(ids, "a"), cfg);
  const auto b = upsample(text(ids, "b"), cfg);
  EXPECT_NE(a.ids, b.ids);
  EXPECT_EQ(upsample(text(ids, "a"), cfg), a);
}

TEST(Durations, ModeAExamples) {
  TokenSequence s;
  s.ids = {1, 1, 2, 2, 2, 3};
  const DurationStats d = estimate_duration_stats({s});
  ASSERT_EQ(d.fallback.probs.size(), 3u);
  for (const auto& [c, p] : d.fallback.probs) EXPECT_NEAR(p, 1.0 / 3.0, 1e-12);
  EXPECT_TRUE(d.per_phoneme.empty());
  s.ids = {5, 5, 5, 5, 6, 6, 6, 6};
  const DurationStats four = estimate_duration_stats({s});
  ASSERT_EQ(four.fallback.probs.size(), 1u);
  EXPECT_EQ(four.fallback.probs[0], (std::pair<std::uint32_t, double>{4, 1.0}));
  EXPECT_THROW(estimate_duration_stats({}), ConfigError);
}

TEST(Durations, ModeARecoversGeometricMean) {
  std::mt19937_64 rng(5);
  std::geometric_distribution<int> g(0.25);
  TokenSequence s;
  std::int64_t tok = 0;
  for (int run = 0; run < 10000; ++run) {
    s.ids.insert(s.ids.end(), static_cast<std::size_t>(1 + g(rng)), tok);
    tok = 1 - tok;
  }
  EXPECT_NEAR(estimate_duration_stats({s}).fallback.mean(), 4.0, 0.2);
}

TEST(Durations, ModeBPerPhoneme) {
  const DurationStats d = estimate_duration_stats_aligned({{"AH_B", 2}, {"AH_B", 4}, {"T_E", 1}});
  EXPECT_NEAR(d.lookup("AH_B").mean(), 3.0, 1e-12);
  EXPECT_NEAR(d.lookup("T_E").mean(), 1.0, 1e-12);
  EXPECT_NEAR(d.fallback.mean(), 7.0 / 3.0, 1e-12);
  EXPECT_THROW(estimate_duration_stats_aligned({}), ConfigError);
}

TEST(Separation, PhonemizationIgnoresUpsampling) {
  const auto corpus = testing::make_synthetic_corpus();
  for (std::size_t i = 0; i < 20; ++i) {
    const auto a = words_to_phonemes(corpus.text_sentences[i], corpus.lexicon, corpus.vocab);
    EXPECT_EQ(a.tokens.ids, corpus.text_phonemes[i].ids);
  }
}

}  // namespace
}  // namespace token2vec
