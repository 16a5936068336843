#include "token2vec/config.hpp"

#include <charconv>
#include <sstream>

#include "token2vec/corpus_io.hpp"
#include "token2vec/detail/binary_io.hpp"
#include "token2vec/errors.hpp"

namespace token2vec {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Values shared by every preset.
void common_defaults(RunConfig& c) {
  c.set("run.seed", "0");
  c.set("model.tau", "0.1");
  c.set("model.ln_eps", "1e-05");
  c.set("model.init_std", "0.02");
  c.set("model.final_layer_norm", "true");
  c.set("model.strict_equation", "false");
  c.set("model.speech_vocab", "500");
  c.set("model.text_vocab", "347");
  c.set("train.peak_lr", "0.0005");
  c.set("train.weight_decay", "0.01");
  c.set("train.beta1", "0.9");
  c.set("train.beta2", "0.98");
  c.set("train.eps", "1e-08");
  c.set("train.clip_norm", "1");
  c.set("train.speech_ratio", "1");
  c.set("train.text_ratio", "1");
  c.set("train.freeze_upsample", "false");
  c.set("mask.start_prob", "0.08");
  c.set("mask.span_mean", "10");
  c.set("mask.span_std", "10");
  c.set("mask.policy", "full");
  c.set("upsample.mode", "repeat");
  c.set("upsample.stats", "");
  c.set("upsample.geometric_mean", "4");
}

}  // namespace

RunConfig RunConfig::preset(const std::string& name) {
  RunConfig c;
  common_defaults(c);
  if (name == "desk") {
    c.set("model.d_model", "32");
    c.set("model.layers", "2");
    c.set("model.heads", "2");
    c.set("model.mlp_dim", "128");
    c.set("model.max_len", "256");
    c.set("train.warmup_steps", "1000");
    c.set("train.total_steps", "20000");
    c.set("train.tokens_per_batch", "4096");
    c.set("train.checkpoint_interval", "5000");
  } else if (name == "paper") {
    c.set("model.d_model", "768");
    c.set("model.layers", "12");
    c.set("model.heads", "12");
    c.set("model.mlp_dim", "3072");
    c.set("model.max_len", "512");
    c.set("train.warmup_steps", "32000");
    c.set("train.total_steps", "400000");
    c.set("train.tokens_per_batch", "16384");
    c.set("train.checkpoint_interval", "25000");
  } else if (name == "small") {
    // Mid-size encoder: width 256, 4 heads, MLP 1024.
    c.set("model.d_model", "256");
    c.set("model.layers", "6");
    c.set("model.heads", "4");
    c.set("model.mlp_dim", "1024");
    c.set("model.max_len", "512");
    c.set("train.warmup_steps", "1000");
    c.set("train.total_steps", "20000");
    c.set("train.tokens_per_batch", "4096");
    c.set("train.checkpoint_interval", "5000");
  } else {
    throw ConfigError("unknown preset \"" + name + "\" (expected desk, small or paper)");
  }
  return c;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos || trim(t.substr(0, eq)).empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected section.key=value");
    }
    c.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return c;
}

RunConfig RunConfig::load(const std::string& path) { return parse(detail::read_file_text(path)); }

void RunConfig::set(const std::string& key, const std::string& value) { values_[key] = value; }

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override \"" + assignment + "\" is not key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::merge(const RunConfig& overrides) {
  for (const auto& [k, v] : overrides.values_) values_[k] = v;
}

std::string RunConfig::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("config key " + key + " is not set");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string s = get_string(key);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("config key " + key + "=" + s + " is not a number");
  }
  return v;
}

std::uint64_t RunConfig::get_uint(const std::string& key) const {
  const std::string s = get_string(key);
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("config key " + key + "=" + s + " is not a non-negative integer");
  }
  return v;
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string s = get_string(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("config key " + key + "=" + s + " is not a boolean");
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

void RunConfig::save(const std::string& path) const { detail::write_file_text(path, serialize()); }

ModelConfig model_config_from(const RunConfig& c) {
  ModelConfig m;
  m.d_model = c.get_uint("model.d_model");
  m.layers = c.get_uint("model.layers");
  m.heads = c.get_uint("model.heads");
  m.mlp_dim = c.get_uint("model.mlp_dim");
  m.max_len = c.get_uint("model.max_len");
  m.speech_vocab = c.get_uint("model.speech_vocab");
  m.text_vocab = c.get_uint("model.text_vocab");
  m.tau = c.get_double("model.tau");
  m.ln_eps = c.get_double("model.ln_eps");
  m.init_std = c.get_double("model.init_std");
  m.final_layer_norm = c.get_bool("model.final_layer_norm");
  m.strict_equation = c.get_bool("model.strict_equation");
  m.validate();
  return m;
}

TrainConfig train_config_from(const RunConfig& c) {
  TrainConfig t;
  t.peak_lr = c.get_double("train.peak_lr");
  t.warmup_steps = c.get_uint("train.warmup_steps");
  t.total_steps = c.get_uint("train.total_steps");
  t.weight_decay = c.get_double("train.weight_decay");
  t.beta1 = c.get_double("train.beta1");
  t.beta2 = c.get_double("train.beta2");
  t.eps = c.get_double("train.eps");
  t.clip_norm = c.get_double("train.clip_norm");
  t.tokens_per_batch = c.get_uint("train.tokens_per_batch");
  t.speech_ratio = c.get_uint("train.speech_ratio");
  t.text_ratio = c.get_uint("train.text_ratio");
  t.checkpoint_interval = c.get_uint("train.checkpoint_interval");
  t.freeze_upsample = c.get_bool("train.freeze_upsample");
  t.seed = c.get_uint("run.seed");
  t.mask.start_prob = c.get_double("mask.start_prob");
  t.mask.span_mean = c.get_double("mask.span_mean");
  t.mask.span_std = c.get_double("mask.span_std");
  const std::string policy = c.get_string("mask.policy");
  if (policy == "full") t.mask.policy = CorruptionPolicy::kFullMask;
  else if (policy == "80-10-10") t.mask.policy = CorruptionPolicy::kEightyTenTen;
  else throw ConfigError("mask.policy must be full or 80-10-10, got " + policy);
  const std::string mode = c.get_string("upsample.mode");
  if (mode == "repeat") t.upsample.mode = UpsampleMode::kRepeat;
  else if (mode == "original") t.upsample.mode = UpsampleMode::kOriginal;
  else throw ConfigError("upsample.mode must be repeat or original, got " + mode);
  t.upsample.geometric_mean = c.get_double("upsample.geometric_mean");
  const std::string stats = c.get_string("upsample.stats");
  if (!stats.empty()) t.upsample.stats = read_duration_stats(stats);
  t.validate();
  return t;
}

}  // namespace token2vec
