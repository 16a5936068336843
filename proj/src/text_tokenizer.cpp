#include "token2vec/text_tokenizer.hpp"

#include <algorithm>
#include <charconv>
#include <random>
#include <set>
#include <sstream>

#include "token2vec/detail/binary_io.hpp"
#include "token2vec/errors.hpp"
#include "token2vec/rng.hpp"
#include "token2vec/speech_tokenizer.hpp"

namespace token2vec {

namespace {

RepeatDistribution histogram_to_distribution(const std::map<std::uint32_t, std::size_t>& hist) {
  std::size_t total = 0;
  for (const auto& [c, n] : hist) total += n;
  RepeatDistribution d;
  for (const auto& [c, n] : hist) d.probs.emplace_back(c, static_cast<double>(n) / static_cast<double>(total));
  return d;
}

std::uint32_t draw_repeat(const RepeatDistribution& dist, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  double acc = 0.0;
  for (const auto& [count, p] : dist.probs) {
    acc += p;
    if (u < acc) return count;
  }
  return dist.probs.back().first;
}

}  // namespace

PhonemeVocab::PhonemeVocab(std::vector<std::string> sorted_symbols) : symbols_(std::move(sorted_symbols)) {
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (!index_.emplace(symbols_[i], static_cast<std::int64_t>(i)).second) {
      throw FormatError("phoneme vocab: duplicate symbol " + symbols_[i]);
    }
  }
}

std::optional<std::int64_t> PhonemeVocab::id(const std::string& symbol) const {
  auto it = index_.find(symbol);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& PhonemeVocab::symbol(std::int64_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size()) {
    throw IndexError("phoneme vocab: id " + std::to_string(id) + " out of range for size " +
                     std::to_string(symbols_.size()));
  }
  return symbols_[static_cast<std::size_t>(id)];
}

std::string positional_phoneme(const std::string& base, std::size_t index, std::size_t length) {
  if (length == 1) return base + "_S";
  if (index == 0) return base + "_B";
  if (index + 1 == length) return base + "_E";
  return base + "_I";
}

PhonemeVocab build_phoneme_vocab(const Lexicon& lexicon) {
  if (lexicon.entries.empty()) throw ConfigError("build_phoneme_vocab: empty lexicon");
  std::set<std::string> symbols;
  for (const auto& [word, phones] : lexicon.entries) {
    for (std::size_t i = 0; i < phones.size(); ++i) symbols.insert(positional_phoneme(phones[i], i, phones.size()));
  }
  return PhonemeVocab(std::vector<std::string>(symbols.begin(), symbols.end()));
}

PhonemeVocab read_phoneme_vocab(const std::string& path) {
  std::istringstream in(detail::read_file_text(path));
  std::vector<std::pair<std::int64_t, std::string>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    std::int64_t id = -1;
    if (tab == std::string::npos ||
        std::from_chars(line.data() + tab + 1, line.data() + line.size(), id).ec != std::errc()) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected PHONEME<TAB>id");
    }
    rows.emplace_back(id, line.substr(0, tab));
  }
  std::sort(rows.begin(), rows.end());
  std::vector<std::string> symbols;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].first != static_cast<std::int64_t>(i)) {
      throw FormatError(path + ": ids are not contiguous from 0 (missing " + std::to_string(i) + ")");
    }
    symbols.push_back(rows[i].second);
  }
  return PhonemeVocab(std::move(symbols));
}

void write_phoneme_vocab(const std::string& path, const PhonemeVocab& vocab) {
  std::string text;
  for (std::size_t i = 0; i < vocab.size(); ++i) text += vocab.symbols()[i] + "\t" + std::to_string(i) + "\n";
  detail::write_file_text(path, text);
}

PhonemizeResult words_to_phonemes(const std::vector<std::string>& words, const Lexicon& lexicon,
                                  const PhonemeVocab& vocab, std::string utterance_id) {
  PhonemizeResult r;
  r.tokens.id = std::move(utterance_id);
  r.tokens.modality = Modality::kText;
  r.tokens.vocab_size = vocab.size();
  for (const auto& w : words) {
    const auto* phones = lexicon.find(w);
    if (phones == nullptr) {
      ++r.oov_words;
      continue;
    }
    for (std::size_t i = 0; i < phones->size(); ++i) {
      const std::string sym = positional_phoneme((*phones)[i], i, phones->size());
      const auto id = vocab.id(sym);
      if (!id) throw ContractError("words_to_phonemes: " + sym + " missing from vocab (built from another lexicon?)");
      r.tokens.ids.push_back(*id);
    }
  }
  return r;
}

TokenSequence upsample(const TokenSequence& seq, const UpsampleConfig& config, const PhonemeVocab* vocab) {
  if (config.mode == UpsampleMode::kOriginal) return seq;
  if (!config.stats && !(config.geometric_mean >= 1.0)) {
    throw ConfigError("upsample: geometric mean repeat must be >= 1");
  }
  Rng rng(derive_seed(config.seed, "upsample", seq.id));
  std::geometric_distribution<std::uint32_t> geometric(1.0 / config.geometric_mean);
  TokenSequence out = seq;
  out.ids.clear();
  out.ids.reserve(seq.ids.size() * 4);
  for (auto id : seq.ids) {
    std::uint32_t r = 1;
    if (config.stats) {
      const RepeatDistribution& dist =
          vocab != nullptr ? config.stats->lookup(vocab->symbol(id)) : config.stats->fallback;
      if (dist.probs.empty()) throw ConfigError("upsample: empty repeat distribution");
      r = draw_repeat(dist, rng);
    } else {
      r = 1 + geometric(rng);
    }
    out.ids.insert(out.ids.end(), r, id);
  }
  return out;
}

DurationStats estimate_duration_stats(const std::vector<TokenSequence>& speech_corpus) {
  std::map<std::uint32_t, std::size_t> hist;
  for (const auto& seq : speech_corpus) {
    for (auto r : run_lengths(seq.ids)) ++hist[static_cast<std::uint32_t>(r)];
  }
  if (hist.empty()) throw ConfigError("estimate_duration_stats: no speech tokens to estimate from");
  DurationStats stats;
  stats.fallback = histogram_to_distribution(hist);
  return stats;
}

DurationStats estimate_duration_stats_aligned(const std::vector<std::pair<std::string, std::uint32_t>>& durations) {
  if (durations.empty()) throw ConfigError("estimate_duration_stats: no aligned durations");
  std::map<std::string, std::map<std::uint32_t, std::size_t>> per;
  std::map<std::uint32_t, std::size_t> pooled;
  for (const auto& [phone, count] : durations) {
    if (count < 1) throw ConfigError("estimate_duration_stats: repeat count must be >= 1 for " + phone);
    ++per[phone][count];
    ++pooled[count];
  }
  DurationStats stats;
  stats.fallback = histogram_to_distribution(pooled);
  for (const auto& [phone, hist] : per) stats.per_phoneme[phone] = histogram_to_distribution(hist);
  return stats;
}

std::vector<std::pair<std::string, std::uint32_t>> read_aligned_durations(const std::string& path) {
  std::istringstream in(detail::read_file_text(path));
  std::vector<std::pair<std::string, std::uint32_t>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError(path + ":" + std::to_string(lineno) + ": expected PHONEME<TAB>counts");
    const std::string phone = line.substr(0, tab);
    std::istringstream counts(line.substr(tab + 1));
    long long c = 0;
    while (counts >> c) {
      if (c < 1) throw FormatError(path + ":" + std::to_string(lineno) + ": repeat count must be >= 1");
      out.emplace_back(phone, static_cast<std::uint32_t>(c));
    }
    if (!counts.eof()) throw FormatError(path + ":" + std::to_string(lineno) + ": non-integer count");
  }
  return out;
}

}  // namespace token2vec
