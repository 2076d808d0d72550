#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ulfine/data.hpp"
#include "ulfine/fusion.hpp"
#include "ulfine/metrics.hpp"
#include "ulfine/prototypes.hpp"

namespace ulfine {

/// How the synthetic provider derives text prototypes.
enum class TextPrototypeMode {
  kAligned,     // class mean plus Gaussian perturbation, the stand-in for encoder text features
  kOrthonormal  // independent orthonormal rows
};

struct DataConfig {
  std::size_t classes = 10;
  std::size_t dim = 32;
  double separation = 1.0;
  double noise_sigma = 0.25;
  double text_noise = 0.1;
  TextPrototypeMode text_mode = TextPrototypeMode::kAligned;
  std::size_t test_per_class = 100;
  LongTailSpec split;  // class_count follows `classes`
};

struct ModelConfig {
  std::size_t rank = 4;
  double adapter_scale = 1.0;
  double probe_init = 0.01;
  bool freeze_adapter = false;
};

struct TrainConfig {
  std::string arm = "full";
  std::uint64_t seed = 0;
  std::uint64_t iterations = 3000;
  std::size_t batch_labeled = 32;
  std::size_t batch_unlabeled = 32;
  std::uint64_t eval_every = 500;
  double learning_rate = 0.03;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  ModelConfig model;
  PAFConfig paf;
  FusionConfig fusion;  // class_prior is filled from the labeled split, not configured
  AugmentationConfig augment;
  GroupSpec groups;
  StabilityMode stability_mode = StabilityMode::kProbability;
  DataConfig data;

  /// Throws ConfigError on out-of-range values (the class prior is checked by the trainer).
  void validate() const;
};

inline constexpr std::uint64_t kPaperScaleIterations = 15000;

/// Sets one documented key from its textual value. Unknown keys and
/// unparsable values throw ConfigError.
void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Applies `key = value` lines; `#` starts a comment.
void apply_config_text(TrainConfig& cfg, const std::string& text, const std::string& origin = "<config>");
void apply_config_file(TrainConfig& cfg, const std::filesystem::path& path);

/// Applies one `KEY=VALUE` override.
void apply_override(TrainConfig& cfg, const std::string& assignment);

/// Every key with its current value, sorted by key.
std::map<std::string, std::string> config_map(const TrainConfig& cfg);
std::string config_text(const TrainConfig& cfg);

/// All documented keys, sorted.
std::vector<std::string> config_keys();

}  // namespace ulfine
