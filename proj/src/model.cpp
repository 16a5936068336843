#include "token2vec/model.hpp"

#include <random>

#include "token2vec/errors.hpp"
#include "token2vec/rng.hpp"

namespace token2vec {

namespace {

Tensor normal_param(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(std::move(shape), true);
  for (auto& v : t.mutable_data()) v = dist(rng);
  return t;
}

Tensor constant_param(std::size_t n, double value) {
  Tensor t(Shape{n}, true);
  for (auto& v : t.mutable_data()) v = value;
  return t;
}

}  // namespace

void ModelConfig::validate() const {
  if (d_model == 0 || heads == 0 || d_model % heads != 0) {
    throw ConfigError("model: d_model " + std::to_string(d_model) + " must be a positive multiple of heads " +
                      std::to_string(heads));
  }
  if (mlp_dim == 0 || max_len == 0) throw ConfigError("model: mlp_dim and max_len must be positive");
  if (speech_vocab == 0 || text_vocab == 0) throw ConfigError("model: vocabularies must be non-empty");
  if (!(tau > 0.0)) throw ConfigError("model: tau must be positive");
  if (!(ln_eps > 0.0)) throw ConfigError("model: ln_eps must be positive");
}

JointModel::JointModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const std::size_t d = config_.d_model;
  Rng rng(derive_seed(seed, "model-init"));
  const double sd = config_.init_std;
  speech_embed_ = normal_param({config_.speech_vocab + 1, d}, sd, rng);
  speech_pos_ = normal_param({config_.max_len, d}, sd, rng);
  text_embed_ = normal_param({config_.text_vocab + 1, d}, sd, rng);
  text_pos_ = normal_param({config_.max_len, d}, sd, rng);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    EncoderBlock b;
    b.ln1_gain = constant_param(d, 1.0);
    b.ln1_bias = constant_param(d, 0.0);
    b.wq = normal_param({d, d}, sd, rng);
    b.bq = constant_param(d, 0.0);
    b.wk = normal_param({d, d}, sd, rng);
    b.bk = constant_param(d, 0.0);
    b.wv = normal_param({d, d}, sd, rng);
    b.bv = constant_param(d, 0.0);
    b.wo = normal_param({d, d}, sd, rng);
    b.bo = constant_param(d, 0.0);
    b.ln2_gain = constant_param(d, 1.0);
    b.ln2_bias = constant_param(d, 0.0);
    b.w1 = normal_param({d, config_.mlp_dim}, sd, rng);
    b.b1 = constant_param(config_.mlp_dim, 0.0);
    b.w2 = normal_param({config_.mlp_dim, d}, sd, rng);
    b.b2 = constant_param(d, 0.0);
    blocks_.push_back(std::move(b));
  }
  final_gain_ = constant_param(d, 1.0);
  final_bias_ = constant_param(d, 0.0);
  head_w_ = normal_param({d, d}, sd, rng);
}

JointModel JointModel::clone() const {
  std::vector<NamedParam> copies;
  for (auto& p : parameters()) copies.push_back({p.name, p.value.clone()});
  return model_from_parameters(config_, copies);
}

std::size_t JointModel::vocab_size(Modality m) const {
  return m == Modality::kSpeech ? config_.speech_vocab : config_.text_vocab;
}

std::vector<NamedParam> JointModel::parameters() const {
  std::vector<NamedParam> ps;
  ps.push_back({"speech.embed", speech_embed_});
  ps.push_back({"speech.pos", speech_pos_});
  ps.push_back({"text.embed", text_embed_});
  ps.push_back({"text.pos", text_pos_});
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const auto& b = blocks_[l];
    const std::string p = "encoder." + std::to_string(l) + ".";
    ps.push_back({p + "ln1.gain", b.ln1_gain});
    ps.push_back({p + "ln1.bias", b.ln1_bias});
    ps.push_back({p + "attn.wq", b.wq});
    ps.push_back({p + "attn.bq", b.bq});
    ps.push_back({p + "attn.wk", b.wk});
    ps.push_back({p + "attn.bk", b.bk});
    ps.push_back({p + "attn.wv", b.wv});
    ps.push_back({p + "attn.bv", b.bv});
    ps.push_back({p + "attn.wo", b.wo});
    ps.push_back({p + "attn.bo", b.bo});
    ps.push_back({p + "ln2.gain", b.ln2_gain});
    ps.push_back({p + "ln2.bias", b.ln2_bias});
    ps.push_back({p + "mlp.w1", b.w1});
    ps.push_back({p + "mlp.b1", b.b1});
    ps.push_back({p + "mlp.w2", b.w2});
    ps.push_back({p + "mlp.b2", b.b2});
  }
  ps.push_back({"final_ln.gain", final_gain_});
  ps.push_back({"final_ln.bias", final_bias_});
  ps.push_back({"head.w", head_w_});
  return ps;
}

JointModel model_from_parameters(const ModelConfig& config, const std::vector<NamedParam>& params) {
  JointModel m(config, 0);
  auto targets = m.parameters();
  if (targets.size() != params.size()) {
    throw FormatError("model: expected " + std::to_string(targets.size()) + " parameters, got " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& src = params[i];
    auto& dst = targets[i];
    if (src.name != dst.name) throw FormatError("model: parameter " + std::to_string(i) + " is " + src.name +
                                                ", expected " + dst.name);
    if (src.value.shape() != dst.value.shape()) {
      throw FormatError("model: parameter " + src.name + " has shape " + shape_to_string(src.value.shape()) +
                        ", expected " + shape_to_string(dst.value.shape()));
    }
    std::copy(src.value.data().begin(), src.value.data().end(), dst.value.mutable_data().begin());
  }
  return m;
}

Tensor JointModel::embed(const TokenSequence& seq) const {
  std::vector<Segment> segments;
  std::vector<std::vector<std::int64_t>> one{seq.ids};
  return embed_packed(seq.modality, one, segments);
}

Tensor JointModel::embed_packed(Modality m, std::span<const std::vector<std::int64_t>> sequences,
                                std::vector<Segment>& segments) const {
  std::vector<std::int64_t> ids, positions;
  segments.clear();
  for (const auto& s : sequences) {
    if (s.size() > config_.max_len) {
      throw ContractError("embed: sequence length " + std::to_string(s.size()) + " exceeds max_len " +
                          std::to_string(config_.max_len) + " (crop first)");
    }
    segments.push_back({ids.size(), s.size()});
    ids.insert(ids.end(), s.begin(), s.end());
    for (std::size_t p = 0; p < s.size(); ++p) positions.push_back(static_cast<std::int64_t>(p));
  }
  return add(embedding_lookup(token_table(m), ids), embedding_lookup(position_table(m), positions));
}

Tensor JointModel::block_forward(const EncoderBlock& b, const Tensor& x, std::span<const Segment> segments) const {
  const Tensor h = layer_norm(x, b.ln1_gain, b.ln1_bias, config_.ln_eps);
  const Tensor q = add_row(matmul(h, b.wq), b.bq);
  const Tensor k = add_row(matmul(h, b.wk), b.bk);
  const Tensor v = add_row(matmul(h, b.wv), b.bv);
  const Tensor attn = multi_head_attention(q, k, v, segments, config_.heads);
  const Tensor z_hat = add(x, add_row(matmul(attn, b.wo), b.bo));
  auto mlp = [&](const Tensor& in) {
    return add_row(matmul(gelu(add_row(matmul(in, b.w1), b.b1)), b.w2), b.b2);
  };
  const Tensor normed = layer_norm(z_hat, b.ln2_gain, b.ln2_bias, config_.ln_eps);
  if (config_.strict_equation) return mlp(add(normed, z_hat));
  return add(mlp(normed), z_hat);
}

EncoderOutput JointModel::encode(const Tensor& x, bool keep_layers) const {
  const Segment whole{0, x.shape()[0]};
  return encode(x, std::span<const Segment>(&whole, 1), keep_layers);
}

EncoderOutput JointModel::encode(const Tensor& x, std::span<const Segment> segments, bool keep_layers) const {
  if (x.dim() != 2 || x.shape()[1] != config_.d_model) {
    throw DimensionError("encode: input " + shape_to_string(x.shape()) + " does not have width " +
                         std::to_string(config_.d_model));
  }
  EncoderOutput out;
  Tensor z = x;
  if (keep_layers) out.layers.push_back(z);
  for (const auto& b : blocks_) {
    z = block_forward(b, z, segments);
    if (keep_layers) out.layers.push_back(z);
  }
  if (config_.final_layer_norm && !blocks_.empty()) z = layer_norm(z, final_gain_, final_bias_, config_.ln_eps);
  out.hidden = z;
  return out;
}

Tensor JointModel::tmlm_logits(const Tensor& hidden, Modality m) const {
  const Tensor projected = matmul(hidden, head_w_);
  const Tensor candidates = slice_rows(token_table(m), 0, vocab_size(m));
  return cosine_logits(projected, candidates, 1.0 / config_.tau);
}

LossResult tmlm_loss(const Tensor& logits, const MaskPlan& plan) {
  if (logits.dim() != 2 || logits.shape()[0] != plan.length) {
    throw DimensionError("tmlm_loss: logits " + shape_to_string(logits.shape()) + " vs plan length " +
                         std::to_string(plan.length));
  }
  if (plan.targets.size() != plan.positions.size()) {
    throw ContractError("tmlm_loss: plan targets missing (apply_mask records them)");
  }
  if (plan.positions.empty()) return {Tensor::scalar(0.0), true};
  std::vector<std::int64_t> rows(plan.positions.begin(), plan.positions.end());
  return {cross_entropy(embedding_lookup(logits, rows), plan.targets), false};
}

}  // namespace token2vec
