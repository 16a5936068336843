#include "token2vec/corpus_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "token2vec/detail/binary_io.hpp"
#include "token2vec/errors.hpp"

namespace token2vec {

namespace fs = std::filesystem;

namespace detail {

std::vector<char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("write failed for " + path);
}

std::string read_file_text(const std::string& path) {
  auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_file_text(const std::string& path, const std::string& text) {
  write_file_bytes(path, std::vector<char>(text.begin(), text.end()));
}

}  // namespace detail

namespace {

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = end + 1;
  }
  return lines;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  if constexpr (std::is_floating_point_v<T>) {
    auto res = std::from_chars(first, first + s.size(), out);
    return res.ec == std::errc() && res.ptr == first + s.size();
  } else {
    auto res = std::from_chars(first, first + s.size(), out);
    return res.ec == std::errc() && res.ptr == first + s.size();
  }
}

}  // namespace

// --- feature files ---------------------------------------------------------

FeatureMatrix read_feature_file(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  detail::ByteReader in(bytes, "feature file " + path);
  in.expect_magic("TV2F");
  const auto version = in.u32("version");
  if (version != kFeatureFileVersion) in.fail("unsupported version " + std::to_string(version));
  const std::uint64_t frames = in.u32("num_frames");
  const std::uint64_t dim = in.u32("feat_dim");
  const std::uint64_t payload = frames * dim * 4;
  if (in.remaining() != payload) {
    in.fail("payload holds " + std::to_string(in.remaining()) + " bytes but header declares " +
            std::to_string(frames) + "x" + std::to_string(dim) + " float32 (" + std::to_string(payload) + " bytes)");
  }
  std::vector<double> values(frames * dim);
  for (auto& v : values) {
    const float f = in.f32("payload");
    if (!std::isfinite(f)) in.fail("non-finite feature value");
    v = f;
  }
  FeatureMatrix fm;
  fm.id = fs::path(path).stem().string();
  fm.frames = Tensor(Shape{frames, dim}, std::move(values));
  return fm;
}

void write_feature_file(const std::string& path, const FeatureMatrix& features) {
  if (features.frames.dim() != 2) throw DimensionError("write_feature_file: frames must be 2-D");
  detail::ByteWriter out;
  out.bytes("TV2F");
  out.u32(kFeatureFileVersion);
  out.u32(static_cast<std::uint32_t>(features.num_frames()));
  out.u32(static_cast<std::uint32_t>(features.feat_dim()));
  for (double v : features.frames.data()) {
    if (!std::isfinite(v)) throw NumericError("write_feature_file: non-finite value for " + features.id);
    out.f32(static_cast<float>(v));
  }
  detail::write_file_bytes(path, out.buffer());
}

std::pair<std::uint32_t, std::uint32_t> read_feature_header(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open " + path);
  std::vector<char> head(16);
  f.read(head.data(), 16);
  head.resize(static_cast<std::size_t>(f.gcount()));
  detail::ByteReader in(head, "feature file " + path);
  in.expect_magic("TV2F");
  const auto version = in.u32("version");
  if (version != kFeatureFileVersion) in.fail("unsupported version " + std::to_string(version));
  const auto frames = in.u32("num_frames");
  const auto dim = in.u32("feat_dim");
  return {frames, dim};
}

// --- manifest --------------------------------------------------------------

Manifest read_manifest(const std::string& path) {
  const auto lines = split_lines(detail::read_file_text(path));
  const fs::path base = fs::path(path).parent_path();
  Manifest m;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(lines[i]);
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      e.path = j.at("path").get<std::string>();
      e.frames = j.at("frames").get<std::uint64_t>();
      if (fs::path(e.path).is_relative()) e.path = (base / e.path).string();
      m.entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(path + ":" + std::to_string(i + 1) + ": bad manifest line: " + ex.what());
    }
  }
  std::unordered_set<std::string> seen;
  for (const auto& e : m.entries) {
    if (!seen.insert(e.id).second) throw FormatError(path + ": duplicate utterance id " + e.id);
  }
  return m;
}

void write_manifest(const std::string& path, const Manifest& manifest) {
  std::string text;
  for (const auto& e : manifest.entries) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["path"] = e.path;
    j["frames"] = e.frames;
    text += j.dump() + "\n";
  }
  detail::write_file_text(path, text);
}

void validate_manifest(const Manifest& manifest) {
  std::unordered_set<std::string> seen;
  for (const auto& e : manifest.entries) {
    if (!seen.insert(e.id).second) throw FormatError("manifest: duplicate utterance id " + e.id);
    const auto [frames, dim] = read_feature_header(e.path);
    if (frames != e.frames) {
      throw FormatError("manifest: " + e.id + " lists " + std::to_string(e.frames) + " frames but " + e.path +
                        " holds " + std::to_string(frames));
    }
    (void)dim;
  }
}

// --- lexicon ---------------------------------------------------------------

std::set<std::string> Lexicon::inventory() const {
  std::set<std::string> phones;
  for (const auto& [word, seq] : entries) phones.insert(seq.begin(), seq.end());
  return phones;
}

const std::vector<std::string>* Lexicon::find(const std::string& word) const {
  std::string key = word;
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::toupper(c); });
  auto it = entries.find(key);
  return it == entries.end() ? nullptr : &it->second;
}

Lexicon parse_lexicon_text(const std::string& text) {
  Lexicon lex;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == ';') continue;
    auto fields = split_ws(line);
    if (fields.size() < 2) {
      throw FormatError("lexicon line " + std::to_string(i + 1) + ": word \"" + fields[0] + "\" has no phonemes");
    }
    std::string word = fields[0];
    std::transform(word.begin(), word.end(), word.begin(), [](unsigned char c) { return std::toupper(c); });
    if (lex.entries.contains(word)) {
      ++lex.duplicate_warnings;
      continue;
    }
    lex.entries.emplace(std::move(word), std::vector<std::string>(fields.begin() + 1, fields.end()));
  }
  return lex;
}

Lexicon parse_lexicon(const std::string& path) { return parse_lexicon_text(detail::read_file_text(path)); }

// --- duration stats --------------------------------------------------------

double RepeatDistribution::mean() const {
  double m = 0.0;
  for (const auto& [count, p] : probs) m += count * p;
  return m;
}

const RepeatDistribution& DurationStats::lookup(const std::string& phoneme) const {
  auto it = per_phoneme.find(phoneme);
  return it == per_phoneme.end() ? fallback : it->second;
}

DurationStats parse_duration_stats(const std::string& text) {
  DurationStats stats;
  bool have_default = false;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = "duration stats line " + std::to_string(i + 1);
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError(where + ": expected PHONEME<TAB>count:prob,...");
    const std::string key = line.substr(0, tab);
    RepeatDistribution dist;
    double total = 0.0;
    for (const auto& item : split_on(line.substr(tab + 1), ',')) {
      const auto colon = item.find(':');
      long long count = 0;
      double prob = 0.0;
      if (colon == std::string::npos || !parse_number(item.substr(0, colon), count) ||
          !parse_number(item.substr(colon + 1), prob)) {
        throw FormatError(where + ": malformed entry \"" + item + "\"");
      }
      if (count < 1) throw FormatError(where + ": repeat count must be >= 1, got " + std::to_string(count));
      if (prob < 0.0 || !std::isfinite(prob)) throw FormatError(where + ": negative or non-finite probability");
      dist.probs.emplace_back(static_cast<std::uint32_t>(count), prob);
      total += prob;
    }
    if (!(total > 0.0)) throw FormatError(where + ": probabilities sum to zero");
    std::sort(dist.probs.begin(), dist.probs.end());
    if (std::abs(total - 1.0) > 1e-9) {
      for (auto& [c, p] : dist.probs) p /= total;
      ++stats.normalization_warnings;
    }
    if (key == kDefaultDurationKey) {
      stats.fallback = std::move(dist);
      have_default = true;
    } else {
      stats.per_phoneme[key] = std::move(dist);
    }
  }
  if (!have_default) throw FormatError("duration stats: missing DEFAULT row");
  return stats;
}

DurationStats read_duration_stats(const std::string& path) { return parse_duration_stats(detail::read_file_text(path)); }

std::string format_duration_stats(const DurationStats& stats) {
  auto row = [](const std::string& key, const RepeatDistribution& d) {
    std::string line = key + "\t";
    for (std::size_t i = 0; i < d.probs.size(); ++i) {
      if (i) line += ',';
      line += std::to_string(d.probs[i].first) + ":" + format_double(d.probs[i].second);
    }
    return line + "\n";
  };
  std::string text = row(kDefaultDurationKey, stats.fallback);
  for (const auto& [key, dist] : stats.per_phoneme) text += row(key, dist);
  return text;
}

void write_duration_stats(const std::string& path, const DurationStats& stats) {
  detail::write_file_text(path, format_duration_stats(stats));
}

// --- token corpus ----------------------------------------------------------

std::string_view modality_name(Modality m) { return m == Modality::kSpeech ? "speech" : "text"; }

Modality parse_modality(std::string_view name) {
  if (name == "speech") return Modality::kSpeech;
  if (name == "text") return Modality::kText;
  throw FormatError("unknown modality tag \"" + std::string(name) + "\"");
}

std::vector<TokenSequence> parse_token_corpus(const std::string& text) {
  std::vector<TokenSequence> corpus;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (line.empty()) continue;
    const std::string where = "token corpus line " + std::to_string(i + 1);
    auto fields = split_on(line, '\t');
    if (fields.size() != 3) throw FormatError(where + ": expected id<TAB>modality<TAB>ids");
    TokenSequence seq;
    seq.id = fields[0];
    try {
      seq.modality = parse_modality(fields[1]);
    } catch (const FormatError& e) {
      throw FormatError(where + ": " + e.what());
    }
    for (const auto& tok : split_ws(fields[2])) {
      std::int64_t v = 0;
      if (!parse_number(tok, v) || v < 0) throw FormatError(where + ": bad token \"" + tok + "\"");
      seq.ids.push_back(v);
    }
    corpus.push_back(std::move(seq));
  }
  return corpus;
}

std::vector<TokenSequence> read_token_corpus(const std::string& path) {
  return parse_token_corpus(detail::read_file_text(path));
}

std::string format_token_corpus(const std::vector<TokenSequence>& corpus) {
  std::string text;
  for (const auto& seq : corpus) {
    if (seq.id.find_first_of("\t\n") != std::string::npos) {
      throw FormatError("token corpus: id \"" + seq.id + "\" contains a tab or newline");
    }
    text += seq.id;
    text += '\t';
    text += modality_name(seq.modality);
    text += '\t';
    for (std::size_t i = 0; i < seq.ids.size(); ++i) {
      if (i) text += ' ';
      text += std::to_string(seq.ids[i]);
    }
    text += '\n';
  }
  return text;
}

void write_token_corpus(const std::string& path, const std::vector<TokenSequence>& corpus) {
  detail::write_file_text(path, format_token_corpus(corpus));
}

// --- WAV -------------------------------------------------------------------

Waveform read_wav(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  detail::ByteReader in(bytes, "wav " + path);
  in.expect_magic("RIFF");
  in.u32("riff size");
  in.expect_magic("WAVE");
  Waveform wave;
  bool have_fmt = false;
  while (in.remaining() >= 8) {
    const std::size_t chunk_start = in.offset();
    const std::string chunk_id(bytes.data() + chunk_start, 4);
    in.seek(chunk_start + 4);
    const std::uint32_t size = in.u32("chunk size");
    const std::size_t body = in.offset();
    in.need(size, "chunk body");
    if (chunk_id == "fmt ") {
      const auto format = in.u16("format");
      const auto channels = in.u16("channels");
      wave.sample_rate = in.u32("sample rate");
      in.u32("byte rate");
      in.u16("block align");
      const auto bits = in.u16("bits per sample");
      if (format != 1 || bits != 16) in.fail("only 16-bit PCM is supported");
      if (channels != 1) in.fail("only mono audio is supported");
      have_fmt = true;
    } else if (chunk_id == "data") {
      if (!have_fmt) in.fail("data chunk before fmt chunk");
      wave.samples.resize(size / 2);
      for (std::size_t i = 0; i < wave.samples.size(); ++i) {
        const auto lo = static_cast<unsigned char>(bytes[body + 2 * i]);
        const auto hi = static_cast<unsigned char>(bytes[body + 2 * i + 1]);
        const auto s = static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
        wave.samples[i] = s / 32768.0;
      }
      return wave;
    }
    in.seek(body + size + (size & 1));
  }
  in.fail("no data chunk");
}

void write_wav(const std::string& path, const Waveform& wave) {
  detail::ByteWriter out;
  const auto data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  out.bytes("RIFF");
  out.u32(36 + data_bytes);
  out.bytes("WAVE");
  out.bytes("fmt ");
  out.u32(16);
  out.u32(1 | (1u << 16));  // PCM, mono
  out.u32(wave.sample_rate);
  out.u32(wave.sample_rate * 2);
  out.u32(2 | (16u << 16));  // block align, bits per sample
  out.bytes("data");
  out.u32(data_bytes);
  std::vector<char> buf = out.buffer();
  for (double s : wave.samples) {
    const double clamped = std::clamp(s, -1.0, 32767.0 / 32768.0);
    const auto v = static_cast<std::int16_t>(std::lround(clamped * 32768.0));
    const auto u = static_cast<std::uint16_t>(v);
    buf.push_back(static_cast<char>(u & 0xFF));
    buf.push_back(static_cast<char>(u >> 8));
  }
  detail::write_file_bytes(path, buf);
}

}  // namespace token2vec
