#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "token2vec/masking.hpp"
#include "token2vec/model.hpp"
#include "token2vec/text_tokenizer.hpp"
#include "token2vec/token_sequence.hpp"

namespace token2vec {

struct TrainConfig {
  double peak_lr = 5e-4;
  std::size_t warmup_steps = 32000;
  std::size_t total_steps = 400000;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  // Global-norm gradient clipping; <= 0 disables.
  double clip_norm = 1.0;
  std::size_t tokens_per_batch = 16384;
  std::size_t speech_ratio = 1;
  std::size_t text_ratio = 1;
  std::uint64_t seed = 0;
  std::size_t checkpoint_interval = 0;  // 0: only the final checkpoint
  MaskConfig mask;
  UpsampleConfig upsample{};
  // Draw text repeats once instead of once per epoch.
  bool freeze_upsample = false;

  void validate() const;
};

double lr_at(std::size_t step, const TrainConfig& config);

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  void init(const std::vector<NamedParam>& params);
};

// Layer-norm gains/biases and bias vectors are exempt from weight decay.
bool decays(const std::string& param_name);

enum class StepStatus { kApplied, kSkippedNonFinite };

// Bias-corrected Adam with decoupled weight decay, reading gradients from
// each parameter's accumulator. A non-finite gradient leaves parameters and
// state untouched.
StepStatus adam_step(const std::vector<NamedParam>& params, AdamState& state, double lr, const TrainConfig& config);

// Scales all gradients so their global L2 norm is at most max_norm;
// returns the norm before clipping.
double clip_grad_norm(const std::vector<NamedParam>& params, double max_norm);

struct Batch {
  std::vector<std::size_t> indices;  // into the corpus
  std::vector<std::size_t> offsets;  // crop start per sequence
  std::vector<std::size_t> lengths;  // cropped length per sequence
  std::size_t tokens() const;
};

// Shuffles (seeded), crops each sequence to a random max_len window and packs
// greedily under tokens_per_batch.
std::vector<Batch> make_batches(const std::vector<TokenSequence>& corpus, std::size_t tokens_per_batch,
                                std::size_t max_len, std::uint64_t seed);

// True when step index `i` (0-based) of the schedule is a speech step.
bool is_speech_step(std::size_t i, std::size_t speech_ratio, std::size_t text_ratio);

struct StepRecord {
  std::size_t step = 0;
  Modality modality = Modality::kSpeech;
  double loss = 0.0;
  double masked_acc = 0.0;
  double lr = 0.0;
  double mask_fraction = 0.0;
  std::size_t masked_tokens = 0;
  std::size_t tokens = 0;
  bool applied = true;
};

// One JSON object: {"step","modality","loss","masked_acc","lr","mask_fraction"}.
std::string format_metrics_line(const StepRecord& record);

/// Joint pre-training loop over one speech and one text corpus.
class Trainer {
 public:
  Trainer(JointModel& model, TrainConfig config, std::vector<TokenSequence> speech,
          std::vector<TokenSequence> text, const PhonemeVocab* text_vocab = nullptr);

  std::size_t step() const { return step_; }
  StepRecord train_step();
  void run(std::size_t until_step, const std::function<void(const StepRecord&)>& on_step,
           const std::function<void(std::size_t)>& on_checkpoint = {});

  // "TV2S" optimizer state: step, stream positions, exact (f64) parameter
  // values and Adam moments.
  void save_state(const std::string& path) const;
  void load_state(const std::string& path);

  const AdamState& adam() const { return adam_; }

 private:
  struct Stream {
    Modality modality;
    const std::vector<TokenSequence>* source = nullptr;
    std::vector<TokenSequence> epoch_corpus;
    std::vector<Batch> batches;
    std::uint64_t epoch = 0;
    std::size_t cursor = 0;
    bool built = false;
  };

  void build_epoch(Stream& s);
  const Batch& next_batch(Stream& s);

  JointModel& model_;
  TrainConfig config_;
  std::vector<TokenSequence> speech_;
  std::vector<TokenSequence> text_;
  const PhonemeVocab* text_vocab_;
  std::vector<NamedParam> params_;
  AdamState adam_;
  Stream speech_stream_;
  Stream text_stream_;
  std::size_t step_ = 0;
};

}  // namespace token2vec
