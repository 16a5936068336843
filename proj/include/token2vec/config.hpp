#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "token2vec/model.hpp"
#include "token2vec/trainer.hpp"

namespace token2vec {

/// Flat "section.key=value" configuration. Later layers (preset, file,
/// command-line overrides) replace earlier values key by key.
class RunConfig {
 public:
  static RunConfig preset(const std::string& name);
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  // "key=value" form.
  void set_assignment(const std::string& assignment);
  void merge(const RunConfig& overrides);
  bool has(const std::string& key) const { return values_.contains(key); }

  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  // One sorted "key=value" line per entry.
  std::string serialize() const;
  void save(const std::string& path) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

ModelConfig model_config_from(const RunConfig& config);
TrainConfig train_config_from(const RunConfig& config);

}  // namespace token2vec
