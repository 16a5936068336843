#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <cstring>

#include "random.hpp"
#include "tempdir.hpp"
#include "token2vec/corpus_io.hpp"
#include "token2vec/detail/binary_io.hpp"
#include "token2vec/errors.hpp"
#include "token2vec/features.hpp"

namespace token2vec {
namespace {

using testing::TempDir;

FeatureMatrix make_features(std::size_t frames, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FeatureMatrix f;
  f.id = "u";
  f.frames = testing::random_tensor({frames, dim}, rng);
  // Exactly representable in float32 so the round trip is value-exact.
  for (auto& v : f.frames.mutable_data()) v = static_cast<float>(v);
  return f;
}

TEST(FeatureFile, RoundTrip) {
  TempDir dir;
  const FeatureMatrix f = make_features(2, 3, 1);
  write_feature_file(dir.file("a.tv2f"), f);
  const FeatureMatrix g = read_feature_file(dir.file("a.tv2f"));
  EXPECT_EQ(g.frames.shape(), (Shape{2, 3}));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(g.frames[i], f.frames[i]);
  write_feature_file(dir.file("b.tv2f"), g);
  EXPECT_EQ(detail::read_file_bytes(dir.file("a.tv2f")), detail::read_file_bytes(dir.file("b.tv2f")));
}

TEST(FeatureFile, ZeroFrames) {
  TempDir dir;
  FeatureMatrix f;
  f.frames = Tensor(Shape{0, 80});
  write_feature_file(dir.file("z.tv2f"), f);
  const FeatureMatrix g = read_feature_file(dir.file("z.tv2f"));
  EXPECT_EQ(g.frames.shape(), (Shape{0, 80}));
}

TEST(FeatureFile, LayoutIsLittleEndianHeaderThenFloat32) {
  TempDir dir;
  FeatureMatrix f;
  f.frames = Tensor(Shape{1, 2}, {1.0, -2.0});
  write_feature_file(dir.file("l.tv2f"), f);
  const auto bytes = detail::read_file_bytes(dir.file("l.tv2f"));
  ASSERT_EQ(bytes.size(), 16u + 8u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "TV2F");
  const unsigned char expected_header[12] = {1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0};
  for (int i = 0; i < 12; ++i) EXPECT_EQ(static_cast<unsigned char>(bytes[4 + i]), expected_header[i]);
  float v = 0;
  std::memcpy(&v, bytes.data() + 20, 4);
  EXPECT_EQ(v, -2.0f);
}

TEST(FeatureFile, TruncationAndBadMagicAreFormatErrors) {
  TempDir dir;
  write_feature_file(dir.file("t.tv2f"), make_features(4, 5, 2));
  auto bytes = detail::read_file_bytes(dir.file("t.tv2f"));
  bytes.resize(bytes.size() - 7);
  detail::write_file_bytes(dir.file("cut.tv2f"), bytes);
  try {
    read_feature_file(dir.file("cut.tv2f"));
    FAIL() << "truncated file accepted";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos) << e.what();
  }
  bytes[0] = 'X';
  detail::write_file_bytes(dir.file("magic.tv2f"), bytes);
  EXPECT_THROW(read_feature_file(dir.file("magic.tv2f")), FormatError);
  auto extra = detail::read_file_bytes(dir.file("t.tv2f"));
  extra.push_back(0);
  detail::write_file_bytes(dir.file("long.tv2f"), extra);
  EXPECT_THROW(read_feature_file(dir.file("long.tv2f")), FormatError);
}

TEST(Manifest, RoundTripAndValidation) {
  TempDir dir;
  write_feature_file(dir.file("a.tv2f"), make_features(3, 2, 3));
  write_feature_file(dir.file("b.tv2f"), make_features(5, 2, 4));
  Manifest m;
  m.entries = {{"a", "a.tv2f", 3}, {"b", "b.tv2f", 5}};
  write_manifest(dir.file("manifest.jsonl"), m);
  const Manifest r = read_manifest(dir.file("manifest.jsonl"));
  ASSERT_EQ(r.entries.size(), 2u);
  EXPECT_EQ(r.entries[1].id, "b");
  EXPECT_EQ(std::filesystem::path(r.entries[1].path), dir.path() / "b.tv2f");
  EXPECT_NO_THROW(validate_manifest(r));

  Manifest bad = r;
  bad.entries[0].frames = 4;
  EXPECT_THROW(validate_manifest(bad), FormatError);
  bad = r;
  bad.entries[1].id = "a";
  EXPECT_THROW(validate_manifest(bad), FormatError);
}

TEST(Lexicon, Examples) {
  const Lexicon lex = parse_lexicon_text("; comment\nHELLO HH AH L OW\nA AH\nA EY\n");
  ASSERT_NE(lex.find("hello"), nullptr);
  EXPECT_EQ(*lex.find("HELLO"), (std::vector<std::string>{"HH", "AH", "L", "OW"}));
  EXPECT_EQ(*lex.find("A"), (std::vector<std::string>{"AH"}));
  EXPECT_EQ(lex.duplicate_warnings, 1u);
  EXPECT_EQ(lex.find("MISSING"), nullptr);
}

TEST(Lexicon, WordWithoutPhonemesReportsLine) {
  try {
    parse_lexicon_text("A AH\n\nBAD\n");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Lexicon, InventoryIsUnionAndParsingIsDeterministic) {
  std::mt19937_64 rng(5);
  std::set<std::string> expected;
  std::ostringstream text;
  for (int w = 0; w < 200; ++w) {
    text << "WORD" << w;
    const int n = 1 + static_cast<int>(rng() % 5);
    for (int i = 0; i < n; ++i) {
      const std::string ph = "P" + std::to_string(rng() % 30);
      expected.insert(ph);
      text << ' ' << ph;
    }
    text << '\n';
  }
  const Lexicon a = parse_lexicon_text(text.str());
  EXPECT_EQ(a.entries.size(), 200u);
  EXPECT_EQ(a.inventory(), expected);
  EXPECT_EQ(parse_lexicon_text(text.str()).entries, a.entries);
}

TEST(DurationStats, ParseNormalizeAndReject) {
  const DurationStats s = parse_duration_stats("AH_I\t3:0.5,4:0.5\nX\t1:0.2,2:0.2,3:0.2\nDEFAULT\t1:1\n");
  const auto& ah = s.lookup("AH_I");
  ASSERT_EQ(ah.probs.size(), 2u);
  EXPECT_EQ(ah.probs[0], (std::pair<std::uint32_t, double>{3, 0.5}));
  EXPECT_NEAR(ah.mean(), 3.5, 1e-12);
  for (const auto& [c, p] : s.lookup("X").probs) EXPECT_NEAR(p, 1.0 / 3.0, 1e-12);
  EXPECT_EQ(s.normalization_warnings, 1u);
  EXPECT_EQ(&s.lookup("UNSEEN"), &s.fallback);
  EXPECT_THROW(parse_duration_stats("A\t2:-0.5\nDEFAULT\t1:1\n"), FormatError);
  EXPECT_THROW(parse_duration_stats("A\t-2:0.5\nDEFAULT\t1:1\n"), FormatError);
}

TEST(DurationStats, RandomRoundTrip) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  DurationStats s;
  auto random_dist = [&] {
    RepeatDistribution d;
    double total = 0;
    const int n = 1 + static_cast<int>(rng() % 6);
    for (int c = 1; c <= n; ++c) {
      d.probs.push_back({static_cast<std::uint32_t>(c), u(rng)});
      total += d.probs.back().second;
    }
    for (auto& [c, p] : d.probs) p /= total;
    return d;
  };
  for (int i = 0; i < 20; ++i) s.per_phoneme["PH" + std::to_string(i) + "_B"] = random_dist();
  s.fallback = random_dist();
  TempDir dir;
  write_duration_stats(dir.file("d.tsv"), s);
  const DurationStats r = read_duration_stats(dir.file("d.tsv"));
  ASSERT_EQ(r.per_phoneme.size(), s.per_phoneme.size());
  for (const auto& [k, d] : s.per_phoneme) {
    const auto& e = r.per_phoneme.at(k);
    ASSERT_EQ(e.probs.size(), d.probs.size());
    for (std::size_t i = 0; i < d.probs.size(); ++i) {
      EXPECT_EQ(e.probs[i].first, d.probs[i].first);
      EXPECT_NEAR(e.probs[i].second, d.probs[i].second, 1e-9);
    }
  }
  EXPECT_NEAR(r.fallback.mean(), s.fallback.mean(), 1e-9);
}

TEST(TokenCorpus, ParseExamplesAndErrors) {
  const auto c = parse_token_corpus("utt1\tspeech\t5 5 7\nutt2\ttext\t\n");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].id, "utt1");
  EXPECT_EQ(c[0].modality, Modality::kSpeech);
  EXPECT_EQ(c[0].ids, (std::vector<std::int64_t>{5, 5, 7}));
  EXPECT_TRUE(c[1].ids.empty());
  EXPECT_EQ(c[1].modality, Modality::kText);
  for (const char* bad : {"u\tvideo\t1 2\n", "u\tspeech\t1 x\n", "u\tspeech\t1.5\n"}) {
    try {
      parse_token_corpus(std::string("ok\ttext\t1\n") + bad);
      FAIL() << bad;
    } catch (const FormatError& e) {
      EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    }
  }
}

TEST(TokenCorpus, RandomRoundTripIsByteExact) {
  std::mt19937_64 rng(7);
  std::vector<TokenSequence> corpus;
  for (int i = 0; i < 1000; ++i) {
    TokenSequence s;
    s.id = "utt-" + std::to_string(i);
    s.modality = rng() % 2 ? Modality::kSpeech : Modality::kText;
    s.ids.resize(rng() % 40);
    for (auto& v : s.ids) v = static_cast<std::int64_t>(rng() % 500);
    corpus.push_back(s);
  }
  TempDir dir;
  write_token_corpus(dir.file("c.tsv"), corpus);
  const auto back = read_token_corpus(dir.file("c.tsv"));
  EXPECT_EQ(back, corpus);
  write_token_corpus(dir.file("d.tsv"), back);
  EXPECT_EQ(detail::read_file_text(dir.file("c.tsv")), detail::read_file_text(dir.file("d.tsv")));
}

TEST(Wav, RoundTripSixteenBitMono) {
  TempDir dir;
  Waveform w;
  for (int i = 0; i < 1000; ++i) w.samples.push_back(std::round(std::sin(i * 0.01) * 20000.0) / 32768.0);
  write_wav(dir.file("a.wav"), w);
  const Waveform r = read_wav(dir.file("a.wav"));
  EXPECT_EQ(r.sample_rate, 16000u);
  ASSERT_EQ(r.samples.size(), w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i) EXPECT_EQ(r.samples[i], w.samples[i]);
}

// --- log-mel ---------------------------------------------------------------

std::vector<double> sine(double hz, std::size_t n) {
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = 0.5 * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / 16000.0);
  return s;
}

TEST(Logmel, FrameCountArithmetic) {
  const LogmelConfig c;
  EXPECT_EQ(c.frame_length(), 400u);
  EXPECT_EQ(c.hop_length(), 320u);
  EXPECT_EQ(logmel_frame_count(16000, c), 49u);
  std::mt19937_64 rng(8);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 400 + rng() % 50000;
    EXPECT_EQ(logmel_frame_count(n, c), 1 + (n - 400) / 320) << n;
  }
  const auto r = logmel_extract(sine(440, 16000), 16000, c);
  EXPECT_EQ(r.features.frames.shape(), (Shape{49, 80}));
}

TEST(Logmel, SilenceHitsTheFloor) {
  const auto r = logmel_extract(std::vector<double>(4000, 0.0), 16000);
  for (double v : r.features.frames.data()) EXPECT_EQ(v, std::log(1e-10));
}

TEST(Logmel, ShortInputAndWrongRate) {
  const auto r = logmel_extract(std::vector<double>(399, 0.1), 16000);
  EXPECT_TRUE(r.too_short);
  EXPECT_EQ(r.features.frames.shape(), (Shape{0, 80}));
  EXPECT_THROW(logmel_extract(std::vector<double>(1000, 0.0), 8000), ConfigError);
}

TEST(Logmel, MatchesDirectDftOnOneFrame) {
  const LogmelConfig c;
  const auto samples = sine(440, 16000);
  const auto r = logmel_extract(samples, 16000, c);
  const std::size_t frame = 7, n = c.frame_length(), nfft = c.fft_size();
  std::vector<double> x(nfft, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    x[i] = samples[frame * c.hop_length() + i] * w;
  }
  const std::size_t bins = nfft / 2 + 1;
  std::vector<double> power(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < nfft; ++t) {
      acc += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(nfft));
    }
    power[k] = std::norm(acc);
  }
  // Independent HTK triangle construction.
  auto mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  auto hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  std::size_t argmax = 0;
  double best = -1e300;
  for (std::size_t m = 0; m < c.n_mels; ++m) {
    const double lo = hz(mel(8000.0) * m / (c.n_mels + 1.0)), mid = hz(mel(8000.0) * (m + 1) / (c.n_mels + 1.0)),
                 hi = hz(mel(8000.0) * (m + 2) / (c.n_mels + 1.0));
    double e = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = k * 16000.0 / nfft;
      if (f > lo && f <= mid) e += power[k] * (f - lo) / (mid - lo);
      else if (f > mid && f < hi) e += power[k] * (hi - f) / (hi - mid);
    }
    const double expected = std::log(std::max(e, 1e-10));
    EXPECT_NEAR(r.features.frames.at(frame, m), expected, 1e-8) << "mel bin " << m;
    if (expected > best) {
      best = expected;
      argmax = m;
    }
  }
  const double lo = hz(mel(8000.0) * argmax / (c.n_mels + 1.0)), hi = hz(mel(8000.0) * (argmax + 2) / (c.n_mels + 1.0));
  EXPECT_LT(lo, 440.0);
  EXPECT_GT(hi, 440.0);
  for (std::size_t f = 0; f < r.features.num_frames(); ++f) {
    const double* row = r.features.frames.data().data() + f * c.n_mels;
    EXPECT_EQ(static_cast<std::size_t>(std::max_element(row, row + c.n_mels) - row), argmax) << "frame " << f;
  }
}

}  // namespace
}  // namespace token2vec
