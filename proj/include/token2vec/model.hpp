#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "token2vec/masking.hpp"
#include "token2vec/ops.hpp"
#include "token2vec/tensor.hpp"
#include "token2vec/token_sequence.hpp"

namespace token2vec {

struct ModelConfig {
  std::size_t d_model = 256;
  std::size_t layers = 6;
  std::size_t heads = 4;
  std::size_t mlp_dim = 1024;
  std::size_t speech_vocab = 500;  // C, excluding the mask token
  std::size_t text_vocab = 347;    // P, excluding the mask token
  std::size_t max_len = 512;
  double tau = 0.1;
  double ln_eps = 1e-5;
  double init_std = 0.02;
  bool final_layer_norm = true;
  // z = MLP(LN(z_hat) + z_hat) instead of z = MLP(LN(z_hat)) + z_hat.
  bool strict_equation = false;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct NamedParam {
  std::string name;
  Tensor value;
};

struct EncoderBlock {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gain, ln2_bias;
  Tensor w1, b1, w2, b2;
};

struct EncoderOutput {
  Tensor hidden;
  // z^0 .. z^L when requested, before the optional final layer norm.
  std::vector<Tensor> layers;
};

/// Shared encoder plus per-modality embedding tables. Row `vocab` of each
/// token table is the mask token; output embeddings are tied to the input
/// tables with the mask row excluded from the candidate set.
class JointModel {
 public:
  JointModel() = default;
  JointModel(const ModelConfig& config, std::uint64_t seed);
  // Parameters are shared tensor handles, so copies would alias; use clone().
  JointModel(const JointModel&) = delete;
  JointModel& operator=(const JointModel&) = delete;
  JointModel(JointModel&&) = default;
  JointModel& operator=(JointModel&&) = default;

  JointModel clone() const;

  const ModelConfig& config() const { return config_; }
  std::size_t vocab_size(Modality m) const;
  std::int64_t mask_id(Modality m) const { return static_cast<std::int64_t>(vocab_size(m)); }
  const Tensor& token_table(Modality m) const { return m == Modality::kSpeech ? speech_embed_ : text_embed_; }
  const Tensor& position_table(Modality m) const { return m == Modality::kSpeech ? speech_pos_ : text_pos_; }
  const Tensor& head_projection() const { return head_w_; }
  const std::vector<EncoderBlock>& blocks() const { return blocks_; }

  // Stable order; names are used as checkpoint keys.
  std::vector<NamedParam> parameters() const;

  Tensor embed(const TokenSequence& seq) const;
  // Packs several sequences of one modality into [sum(len) x d].
  Tensor embed_packed(Modality m, std::span<const std::vector<std::int64_t>> sequences,
                      std::vector<Segment>& segments) const;

  EncoderOutput encode(const Tensor& x, bool keep_layers = false) const;
  EncoderOutput encode(const Tensor& x, std::span<const Segment> segments, bool keep_layers = false) const;

  // [rows x vocab] cosine logits scaled by 1/tau against the modality's
  // token table (mask row excluded).
  Tensor tmlm_logits(const Tensor& hidden, Modality m) const;

 private:
  Tensor block_forward(const EncoderBlock& b, const Tensor& x, std::span<const Segment> segments) const;

  ModelConfig config_;
  Tensor speech_embed_, speech_pos_, text_embed_, text_pos_;
  std::vector<EncoderBlock> blocks_;
  Tensor final_gain_, final_bias_;
  Tensor head_w_;

  friend JointModel load_model(const std::string& path, std::uint64_t* step);
  friend JointModel model_from_parameters(const ModelConfig&, const std::vector<NamedParam>&);
};

struct LossResult {
  Tensor loss;
  // No masked positions: loss is 0 and carries no gradient.
  bool empty = false;
};

// Mean negative log-likelihood of plan targets at plan positions.
LossResult tmlm_loss(const Tensor& logits, const MaskPlan& plan);

// "TV2M" checkpoint: magic, u32 version, config block, u64 step, u32 count,
// index of (name, shape, byte offset), then float32 little-endian data.
inline constexpr std::uint32_t kModelFileVersion = 1;
void save_model(const std::string& path, const JointModel& model, std::uint64_t step);
JointModel load_model(const std::string& path, std::uint64_t* step = nullptr);
// Builds a model whose parameters are copies of `params` (matched by name).
JointModel model_from_parameters(const ModelConfig& config, const std::vector<NamedParam>& params);

}  // namespace token2vec
