#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ulfine/config.hpp"
#include "ulfine/data.hpp"
#include "ulfine/error.hpp"
#include "ulfine/metrics.hpp"
#include "ulfine/model.hpp"
#include "ulfine/objective.hpp"
#include "ulfine/prototypes.hpp"
#include "ulfine/rng.hpp"

namespace ulfine {

/// Datasets a run consumes. `unlabeled` keeps its hidden ground truth for
/// diagnostics only; training never reads it.
struct TrainData {
  EmbeddingSet labeled;
  EmbeddingSet unlabeled;
  EmbeddingSet test;
  TextPrototypes text;

  std::vector<std::size_t> labeled_counts() const;
};

/// Pool, held-out test set and text prototypes from the synthetic provider.
struct SyntheticCorpus {
  EmbeddingSet pool;
  EmbeddingSet test;
  TextPrototypes text;
};

/// Deterministic in `seed`: class means use stream 0, the training pool
/// stream 1, the test set stream 2 and text perturbations stream 3. The pool
/// holds N1 + M1 samples per class, enough for every unlabeled mode.
SyntheticCorpus synthesize_corpus(const DataConfig& cfg, std::uint64_t seed);

/// Splits the pool with build_split (stream 4 of `seed`).
TrainData make_train_data(const SyntheticCorpus& corpus, const LongTailSpec& spec, std::uint64_t seed);

struct TrainState {
  ModelParams params;
  OptimizerState optimizer;
  PrototypeState prototypes;
  std::uint64_t iteration = 0;
  Rng rng;
  LossBreakdown loss_sum;  // accumulated since the last evaluation record
  std::uint64_t steps_since_eval = 0;

  bool operator==(const TrainState&) const = default;
};

struct StepMetrics {
  LossBreakdown loss;
  double mask_pass_rate = 0.0;
  std::vector<std::size_t> pseudo_label_histogram;  // masked-in pseudo-labels of the step
};

/// Intermediates of one step, captured on request for inspection.
struct StepTrace {
  std::vector<Vector> labeled_z;
  std::vector<Vector> unlabeled_weak_z;
  BatchMeans means;
  std::vector<LogitBundle> bundles;
  Vector alpha;
  TrainingBatch batch;
  LossBreakdown loss;
};

struct RunResult {
  std::vector<RunReport> reports;
  TrainState final_state;
};

/// A numeric failure during training, carrying the state at the point of failure.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, TrainState state) : NumericError(what), state_(std::move(state)) {}
  const TrainState& state() const { return state_; }

 private:
  TrainState state_;
};

class Trainer {
 public:
  /// Validates the configuration against the data and fills the class prior
  /// from the labeled split.
  Trainer(TrainConfig cfg, TrainData data);

  const TrainConfig& config() const { return cfg_; }
  const TrainData& data() const { return data_; }

  TrainState initial_state() const;

  /// Samples B_l labeled and B_u unlabeled rows with replacement (labeled
  /// indices first, then unlabeled) and runs step_on_batch.
  StepMetrics train_step(TrainState& state) const;

  /// One step on given raw features. Fixed order: augment (labeled weak,
  /// unlabeled weak, unlabeled strong); forward; batch class means; visual
  /// EMA; DLF pseudo-labels and mask on the weak branch; P_u, α and the text
  /// prototype update; loss and gradients; SGD.
  StepMetrics step_on_batch(TrainState& state, std::span<const Vector> labeled, std::span<const std::uint32_t> labels,
                            std::span<const Vector> unlabeled, StepTrace* trace = nullptr) const;

  /// Test-set accuracy groups and stability, plus pseudo-label diagnostics
  /// over the (clean) unlabeled split.
  RunReport evaluate(const TrainState& state) const;

  /// Trains up to `iterations`, recording an evaluation at iteration 0 (fresh
  /// runs only), every eval_every iterations, and at the end. A NumericError
  /// inside a step is rethrown as TrainingAborted.
  RunResult run(std::optional<TrainState> resume = std::nullopt,
                const std::function<void(const RunReport&)>& on_report = {}) const;

 private:
  TrainConfig cfg_;
  TrainData data_;
  ObjectiveConfig objective_;
  std::vector<std::size_t> labeled_counts_;
  std::map<std::string, std::string> provenance_;
};

void save_checkpoint(const TrainState& state, const TrainConfig& cfg, const std::filesystem::path& path);

struct Checkpoint {
  TrainState state;
  std::map<std::string, std::string> config;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Ablation arms in table order.
inline const std::vector<std::string> kAblationArms = {"lp", "lp_adapter", "paf", "dlf", "full"};

/// Component switches of an arm on top of `base`:
///   lp          adapter frozen, η = 1, μ = 0, λ_o = 0, τ_la = 0
///   lp_adapter  η = 1, μ = 0, λ_o = 0, τ_la = 0
///   paf         η = 1 (PAF and logit adjustment as configured)
///   dlf         μ = 0, λ_o = 0 (DLF and logit adjustment as configured)
///   full        everything as configured
TrainConfig arm_config(const TrainConfig& base, const std::string& arm);

struct ArmResult {
  std::string arm;
  std::vector<RunReport> reports;
};

std::vector<ArmResult> ablation_matrix(const TrainConfig& base, const TrainData& data, std::span<const std::string> arms);

/// Fixed-width comparison table of the final record of each arm.
std::string ablation_table(std::span<const ArmResult> results);

}  // namespace ulfine
