#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace token2vec {

enum class Modality { kSpeech, kText };

std::string_view modality_name(Modality m);
// Throws FormatError for anything other than "speech" / "text".
Modality parse_modality(std::string_view name);

// A modality-tagged sequence of discrete token ids. vocab_size is 0 when
// unknown (e.g. read back from a corpus file without its vocabulary).
struct TokenSequence {
  std::string id;
  Modality modality = Modality::kSpeech;
  std::vector<std::int64_t> ids;
  std::size_t vocab_size = 0;

  bool operator==(const TokenSequence&) const = default;
};

}  // namespace token2vec
