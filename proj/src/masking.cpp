#include "token2vec/masking.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "token2vec/errors.hpp"
#include "token2vec/rng.hpp"

namespace token2vec {

MaskPlan sample_mask(std::size_t length, const MaskConfig& config, std::uint64_t seed) {
  if (config.start_prob < 0.0 || config.start_prob > 1.0) throw ConfigError("sample_mask: start_prob outside [0, 1]");
  if (config.span_std < 0.0) throw ConfigError("sample_mask: negative span_std");
  MaskPlan plan;
  plan.length = length;
  if (length == 0) return plan;

  Rng rng(derive_seed(seed, "mask"));
  std::bernoulli_distribution is_start(config.start_prob);
  std::normal_distribution<double> span(config.span_mean, config.span_std);
  std::vector<char> masked(length, 0);
  for (std::size_t i = 0; i < length; ++i) {
    if (!is_start(rng)) continue;
    const double draw = config.span_std > 0.0 ? span(rng) : config.span_mean;
    const auto rounded = static_cast<long long>(std::llround(draw));
    const std::size_t len = static_cast<std::size_t>(std::clamp<long long>(
        rounded, 1, static_cast<long long>(length - i)));
    std::fill_n(masked.begin() + static_cast<std::ptrdiff_t>(i), len, 1);
  }
  for (std::size_t i = 0; i < length; ++i) {
    if (masked[i]) plan.positions.push_back(i);
  }

  plan.corruption.assign(plan.positions.size(), Corruption::kMaskToken);
  if (config.policy == CorruptionPolicy::kEightyTenTen) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (auto& c : plan.corruption) {
      const double u = unit(rng);
      c = u < 0.8 ? Corruption::kMaskToken : (u < 0.9 ? Corruption::kRandomToken : Corruption::kKeep);
    }
  }
  return plan;
}

MaskedSequence apply_mask(const TokenSequence& seq, MaskPlan plan, std::int64_t mask_token_id,
                          std::size_t vocab_size, std::uint64_t seed) {
  if (plan.length != seq.ids.size()) {
    throw ContractError("apply_mask: plan length " + std::to_string(plan.length) + " != sequence length " +
                        std::to_string(seq.ids.size()));
  }
  if (plan.corruption.size() != plan.positions.size()) {
    throw ContractError("apply_mask: plan has " + std::to_string(plan.positions.size()) + " positions but " +
                        std::to_string(plan.corruption.size()) + " corruption choices");
  }
  MaskedSequence out;
  out.corrupted = seq;
  plan.targets.resize(plan.positions.size());
  Rng rng(derive_seed(seed, "corrupt"));
  std::uniform_int_distribution<std::int64_t> random_token(0, vocab_size > 0 ? static_cast<std::int64_t>(vocab_size) - 1 : 0);
  for (std::size_t i = 0; i < plan.positions.size(); ++i) {
    const std::size_t pos = plan.positions[i];
    if (pos >= seq.ids.size()) throw ContractError("apply_mask: position out of range");
    plan.targets[i] = seq.ids[pos];
    switch (plan.corruption[i]) {
      case Corruption::kMaskToken:
        out.corrupted.ids[pos] = mask_token_id;
        break;
      case Corruption::kRandomToken:
        if (vocab_size == 0) throw ContractError("apply_mask: random replacement needs vocab_size > 0");
        out.corrupted.ids[pos] = random_token(rng);
        break;
      case Corruption::kKeep:
        break;
    }
  }
  out.plan = std::move(plan);
  return out;
}

}  // namespace token2vec
