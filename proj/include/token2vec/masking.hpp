#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "token2vec/token_sequence.hpp"

namespace token2vec {

enum class CorruptionPolicy {
  kFullMask,       // every masked position becomes the mask token
  kEightyTenTen,   // 80% mask token, 10% random token, 10% unchanged
};

enum class Corruption : std::uint8_t { kMaskToken, kRandomToken, kKeep };

struct MaskConfig {
  double start_prob = 0.08;
  double span_mean = 10.0;
  double span_std = 10.0;
  CorruptionPolicy policy = CorruptionPolicy::kFullMask;
};

/// Masked positions of one sequence. `positions` is strictly increasing;
/// `targets[i]` and `corruption[i]` belong to `positions[i]`. Targets are
/// filled by apply_mask from the uncorrupted input.
struct MaskPlan {
  std::size_t length = 0;
  std::vector<std::size_t> positions;
  std::vector<std::int64_t> targets;
  std::vector<Corruption> corruption;

  bool empty() const { return positions.empty(); }
  double fraction() const { return length == 0 ? 0.0 : static_cast<double>(positions.size()) / length; }
};

// Each position starts a span with probability start_prob; a span covers
// clamp(round(N(span_mean, span_std)), 1, length - start) positions to the
// right; overlapping spans merge.
MaskPlan sample_mask(std::size_t length, const MaskConfig& config, std::uint64_t seed);

struct MaskedSequence {
  TokenSequence corrupted;
  MaskPlan plan;  // with targets filled in
};

// Records targets from `seq`, then corrupts masked positions per plan.
// Random replacement tokens are uniform over [0, vocab_size).
MaskedSequence apply_mask(const TokenSequence& seq, MaskPlan plan, std::int64_t mask_token_id,
                          std::size_t vocab_size, std::uint64_t seed);

}  // namespace token2vec
