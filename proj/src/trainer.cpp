#include "token2vec/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "token2vec/detail/binary_io.hpp"
#include "token2vec/errors.hpp"
#include "token2vec/rng.hpp"

namespace token2vec {

void TrainConfig::validate() const {
  if (!(peak_lr > 0.0)) throw ConfigError("train: peak_lr must be positive");
  if (total_steps == 0) throw ConfigError("train: total_steps must be positive");
  if (warmup_steps >= total_steps) {
    throw ConfigError("train: warmup_steps (" + std::to_string(warmup_steps) + ") must be below total_steps (" +
                      std::to_string(total_steps) + ")");
  }
  if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train: betas must be in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("train: eps must be positive");
  if (tokens_per_batch == 0) throw ConfigError("train: tokens_per_batch must be positive");
  if (speech_ratio + text_ratio == 0) throw ConfigError("train: modality ratio is 0:0");
}

double lr_at(std::size_t step, const TrainConfig& config) {
  if (step > config.total_steps) {
    throw ContractError("lr_at: step " + std::to_string(step) + " beyond total_steps " +
                        std::to_string(config.total_steps));
  }
  if (step <= config.warmup_steps) {
    if (config.warmup_steps == 0) return config.peak_lr;
    return config.peak_lr * static_cast<double>(step) / static_cast<double>(config.warmup_steps);
  }
  return config.peak_lr * static_cast<double>(config.total_steps - step) /
         static_cast<double>(config.total_steps - config.warmup_steps);
}

void AdamState::init(const std::vector<NamedParam>& params) {
  step = 0;
  m.clear();
  v.clear();
  for (const auto& p : params) {
    m.emplace_back(p.value.numel(), 0.0);
    v.emplace_back(p.value.numel(), 0.0);
  }
}

bool decays(const std::string& name) {
  const auto dot = name.rfind('.');
  const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
  if (leaf == "gain" || leaf == "bias") return false;
  if (leaf.size() == 2 && leaf[0] == 'b') return false;  // bq, bk, bv, bo, b1, b2
  return true;
}

StepStatus adam_step(const std::vector<NamedParam>& params, AdamState& state, double lr, const TrainConfig& config) {
  if (state.m.size() != params.size()) throw ContractError("adam_step: state does not match parameter list");
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].value.numel()) {
      throw ContractError("adam_step: moment shape mismatch for " + params[i].name);
    }
    grads.push_back(params[i].value.grad());
    for (double g : grads.back()) {
      if (!std::isfinite(g)) return StepStatus::kSkippedNonFinite;
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].value;
    auto data = theta.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    const double wd = decays(params[i].name) ? config.weight_decay : 0.0;
    for (std::size_t j = 0; j < data.size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      data[j] -= lr * (m_hat / (std::sqrt(v_hat) + config.eps) + wd * data[j]);
    }
  }
  return StepStatus::kApplied;
}

double clip_grad_norm(const std::vector<NamedParam>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.value.has_grad()) continue;
    for (double g : p.value.impl()->grad) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (const auto& p : params) {
      if (!p.value.has_grad()) continue;
      for (double& g : p.value.impl()->grad) g *= factor;
    }
  }
  return norm;
}

std::size_t Batch::tokens() const { return std::accumulate(lengths.begin(), lengths.end(), std::size_t{0}); }

std::vector<Batch> make_batches(const std::vector<TokenSequence>& corpus, std::size_t tokens_per_batch,
                                std::size_t max_len, std::uint64_t seed) {
  if (corpus.empty()) throw ConfigError("make_batches: empty corpus");
  if (tokens_per_batch == 0 || max_len == 0) throw ConfigError("make_batches: budgets must be positive");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "shuffle"));
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Batch> batches;
  Batch current;
  std::size_t used = 0;
  for (std::size_t idx : order) {
    const std::size_t full = corpus[idx].ids.size();
    std::size_t offset = 0, len = full;
    if (full > max_len) {
      Rng crop(derive_seed(seed, "crop", idx));
      offset = std::uniform_int_distribution<std::size_t>(0, full - max_len)(crop);
      len = max_len;
    }
    if (len > tokens_per_batch) {
      throw ConfigError("make_batches: sequence " + corpus[idx].id + " has " + std::to_string(len) +
                        " tokens after cropping, more than tokens_per_batch=" + std::to_string(tokens_per_batch));
    }
    if (!current.indices.empty() && used + len > tokens_per_batch) {
      batches.push_back(std::move(current));
      current = Batch{};
      used = 0;
    }
    current.indices.push_back(idx);
    current.offsets.push_back(offset);
    current.lengths.push_back(len);
    used += len;
  }
  if (!current.indices.empty()) batches.push_back(std::move(current));
  return batches;
}

bool is_speech_step(std::size_t i, std::size_t speech_ratio, std::size_t text_ratio) {
  const std::size_t n = speech_ratio + text_ratio;
  if (text_ratio == 0) return true;
  if (speech_ratio == 0) return false;
  auto ceil_div = [](std::size_t a, std::size_t b) { return (a + b - 1) / b; };
  return ceil_div((i + 1) * speech_ratio, n) - ceil_div(i * speech_ratio, n) == 1;
}

std::string format_metrics_line(const StepRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["modality"] = std::string(modality_name(r.modality));
  j["loss"] = std::isfinite(r.loss) ? nlohmann::ordered_json(r.loss) : nlohmann::ordered_json(nullptr);
  j["masked_acc"] = r.masked_acc;
  j["lr"] = r.lr;
  j["mask_fraction"] = r.mask_fraction;
  if (!r.applied) j["skipped"] = true;
  return j.dump();
}

Trainer::Trainer(JointModel& model, TrainConfig config, std::vector<TokenSequence> speech,
                 std::vector<TokenSequence> text, const PhonemeVocab* text_vocab)
    : model_(model), config_(std::move(config)), speech_(std::move(speech)), text_(std::move(text)),
      text_vocab_(text_vocab) {
  config_.validate();
  if (config_.speech_ratio > 0 && speech_.empty()) throw ConfigError("train: speech steps scheduled but speech corpus is empty");
  if (config_.text_ratio > 0 && text_.empty()) throw ConfigError("train: text steps scheduled but text corpus is empty");
  auto check_vocab = [&](const std::vector<TokenSequence>& corpus, Modality m) {
    const auto vocab = static_cast<std::int64_t>(model_.vocab_size(m));
    for (const auto& seq : corpus) {
      for (auto id : seq.ids) {
        if (id < 0 || id >= vocab) {
          throw ConfigError("train: " + std::string(modality_name(m)) + " utterance " + seq.id + " has token " +
                            std::to_string(id) + " outside model vocab " + std::to_string(vocab));
        }
      }
    }
  };
  check_vocab(speech_, Modality::kSpeech);
  check_vocab(text_, Modality::kText);
  params_ = model_.parameters();
  adam_.init(params_);
  speech_stream_.modality = Modality::kSpeech;
  speech_stream_.source = &speech_;
  text_stream_.modality = Modality::kText;
  text_stream_.source = &text_;
}

void Trainer::build_epoch(Stream& s) {
  const std::string name(modality_name(s.modality));
  const std::vector<TokenSequence>* active = s.source;
  if (s.modality == Modality::kText && config_.upsample.mode == UpsampleMode::kRepeat) {
    UpsampleConfig up = config_.upsample;
    up.seed = derive_seed(config_.seed, "upsample-epoch", config_.freeze_upsample ? 0 : s.epoch);
    s.epoch_corpus.clear();
    for (const auto& seq : *s.source) s.epoch_corpus.push_back(upsample(seq, up, text_vocab_));
    active = &s.epoch_corpus;
  } else {
    s.epoch_corpus = *s.source;
  }
  s.batches = make_batches(*active, config_.tokens_per_batch, model_.config().max_len,
                           derive_seed(config_.seed, "batches-" + name, s.epoch));
  s.built = true;
}

const Batch& Trainer::next_batch(Stream& s) {
  if (!s.built) {
    build_epoch(s);
    s.cursor = 0;
  } else if (s.cursor >= s.batches.size()) {
    ++s.epoch;
    build_epoch(s);
    s.cursor = 0;
  }
  return s.batches[s.cursor++];
}

StepRecord Trainer::train_step() {
  const std::size_t step = step_ + 1;
  StepRecord rec;
  rec.step = step;
  rec.modality = is_speech_step(step_, config_.speech_ratio, config_.text_ratio) ? Modality::kSpeech : Modality::kText;
  rec.lr = lr_at(std::min(step, config_.total_steps), config_);
  Stream& stream = rec.modality == Modality::kSpeech ? speech_stream_ : text_stream_;
  const Batch& batch = next_batch(stream);

  const std::int64_t mask_id = model_.mask_id(rec.modality);
  const std::size_t vocab = model_.vocab_size(rec.modality);
  const std::uint64_t step_seed = derive_seed(config_.seed, "mask-step", step);
  std::vector<std::vector<std::int64_t>> inputs;
  std::vector<std::int64_t> masked_rows, targets;
  std::size_t row_offset = 0;
  for (std::size_t j = 0; j < batch.indices.size(); ++j) {
    const auto& src = stream.epoch_corpus[batch.indices[j]];
    TokenSequence cropped;
    cropped.id = src.id;
    cropped.modality = src.modality;
    cropped.ids.assign(src.ids.begin() + static_cast<std::ptrdiff_t>(batch.offsets[j]),
                       src.ids.begin() + static_cast<std::ptrdiff_t>(batch.offsets[j] + batch.lengths[j]));
    const std::uint64_t seq_seed = derive_seed(step_seed, "seq", j);
    MaskPlan plan = sample_mask(cropped.ids.size(), config_.mask, seq_seed);
    MaskedSequence masked = apply_mask(cropped, std::move(plan), mask_id, vocab, seq_seed);
    for (std::size_t i = 0; i < masked.plan.positions.size(); ++i) {
      masked_rows.push_back(static_cast<std::int64_t>(row_offset + masked.plan.positions[i]));
      targets.push_back(masked.plan.targets[i]);
    }
    row_offset += cropped.ids.size();
    inputs.push_back(std::move(masked.corrupted.ids));
  }
  rec.tokens = row_offset;
  rec.masked_tokens = targets.size();
  rec.mask_fraction = row_offset == 0 ? 0.0 : static_cast<double>(targets.size()) / static_cast<double>(row_offset);

  if (targets.empty()) {
    // Nothing to predict: no loss, no update.
    rec.applied = false;
    ++step_;
    return rec;
  }

  for (auto& p : params_) p.value.zero_grad();
  try {
    GradTape tape;
    std::vector<Segment> segments;
    const Tensor x = model_.embed_packed(rec.modality, inputs, segments);
    const EncoderOutput enc = model_.encode(x, segments);
    const Tensor logits = model_.tmlm_logits(embedding_lookup(enc.hidden, masked_rows), rec.modality);
    const Tensor loss = cross_entropy(logits, targets);
    rec.loss = loss.item();
    std::size_t correct = 0;
    const auto lv = logits.data();
    for (std::size_t r = 0; r < targets.size(); ++r) {
      const auto row = lv.subspan(r * vocab, vocab);
      const auto best = std::max_element(row.begin(), row.end()) - row.begin();
      if (best == targets[r]) ++correct;
    }
    rec.masked_acc = static_cast<double>(correct) / static_cast<double>(targets.size());
    tape.backward(loss);
  } catch (const NumericError&) {
    rec.loss = std::numeric_limits<double>::quiet_NaN();
    rec.applied = false;
    for (auto& p : params_) p.value.zero_grad();
    ++step_;
    return rec;
  }
  if (config_.clip_norm > 0.0) {
    const double norm = clip_grad_norm(params_, config_.clip_norm);
    if (!std::isfinite(norm)) {
      rec.applied = false;
      ++step_;
      return rec;
    }
  }
  rec.applied = adam_step(params_, adam_, rec.lr, config_) == StepStatus::kApplied;
  for (auto& p : params_) p.value.zero_grad();
  ++step_;
  return rec;
}

void Trainer::run(std::size_t until_step, const std::function<void(const StepRecord&)>& on_step,
                  const std::function<void(std::size_t)>& on_checkpoint) {
  while (step_ < until_step) {
    const StepRecord rec = train_step();
    if (on_step) on_step(rec);
    if (on_checkpoint && config_.checkpoint_interval > 0 && step_ % config_.checkpoint_interval == 0) {
      on_checkpoint(step_);
    }
  }
}

void Trainer::save_state(const std::string& path) const {
  detail::ByteWriter out;
  out.bytes("TV2S");
  out.u32(1);
  out.u64(step_);
  out.u64(adam_.step);
  for (const Stream* s : {&speech_stream_, &text_stream_}) {
    out.u32(s->built ? 1 : 0);
    out.u64(s->epoch);
    out.u64(s->cursor);
  }
  out.u32(static_cast<std::uint32_t>(params_.size()));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.str(params_[i].name);
    out.u64(params_[i].value.numel());
    for (double v : params_[i].value.data()) out.f64(v);
    for (double v : adam_.m[i]) out.f64(v);
    for (double v : adam_.v[i]) out.f64(v);
  }
  detail::write_file_bytes(path, out.buffer());
}

void Trainer::load_state(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  detail::ByteReader in(bytes, "optimizer state " + path);
  in.expect_magic("TV2S");
  const auto version = in.u32("version");
  if (version != 1) in.fail("unsupported version " + std::to_string(version));
  const auto step = in.u64("step");
  const auto adam_step_count = in.u64("adam step");
  struct Pos {
    bool built;
    std::uint64_t epoch, cursor;
  } pos[2];
  for (auto& p : pos) {
    p.built = in.u32("stream built") != 0;
    p.epoch = in.u64("stream epoch");
    p.cursor = in.u64("stream cursor");
  }
  const auto count = in.u32("parameter count");
  if (count != params_.size()) in.fail("state has " + std::to_string(count) + " parameters, model has " +
                                       std::to_string(params_.size()));
  AdamState adam;
  adam.init(params_);
  adam.step = adam_step_count;
  std::vector<std::vector<double>> values(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto name = in.str("parameter name");
    if (name != params_[i].name) in.fail("parameter " + name + " where " + params_[i].name + " was expected");
    const auto n = in.u64("numel");
    if (n != params_[i].value.numel()) in.fail("size mismatch for " + name);
    values[i].resize(n);
    for (auto& v : values[i]) v = in.f64("values");
    for (auto& v : adam.m[i]) v = in.f64("first moment");
    for (auto& v : adam.v[i]) v = in.f64("second moment");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    std::copy(values[i].begin(), values[i].end(), params_[i].value.mutable_data().begin());
  }
  adam_ = std::move(adam);
  step_ = step;
  Stream* streams[2] = {&speech_stream_, &text_stream_};
  for (int k = 0; k < 2; ++k) {
    Stream& s = *streams[k];
    s.built = false;
    s.epoch = pos[k].epoch;
    s.cursor = pos[k].cursor;
    if (pos[k].built) build_epoch(s);
  }
}

}  // namespace token2vec
