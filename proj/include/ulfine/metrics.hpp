#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ulfine/linalg.hpp"
#include "ulfine/model.hpp"

namespace ulfine {

/// Classes with labeled count ≥ head_min are Head, ≤ tail_max are Tail, the rest Medium.
struct GroupSpec {
  std::size_t head_min = 100;
  std::size_t tail_max = 20;

  void validate() const;
};

enum class ClassGroup { kHead, kMedium, kTail };

ClassGroup group_of(std::size_t labeled_count, const GroupSpec& spec);

struct GroupAccuracy {
  std::optional<double> head;
  std::optional<double> medium;
  std::optional<double> tail;
  double overall = 0.0;          // micro accuracy
  std::vector<std::optional<double>> per_class;  // absent when a class has no test samples
};

/// Macro accuracy within each group (mean of per-class accuracies of the
/// group's classes that appear in `truths`), micro accuracy overall. Groups
/// without any evaluated class are absent rather than zero.
GroupAccuracy group_accuracy(std::span<const std::uint32_t> predictions, std::span<const std::uint32_t> truths,
                             std::span<const std::size_t> labeled_counts, const GroupSpec& spec);

/// 1 − population standard deviation. Throws std::invalid_argument when empty.
double classification_stability(std::span<const double> true_class_probs);

/// How p_i is read from model outputs: softmax probability of the true class,
/// or the 0/1 indicator that the true class is the argmax.
enum class StabilityMode { kProbability, kIndicator };

StabilityMode parse_stability_mode(const std::string& name);
std::string to_string(StabilityMode mode);

/// Per-sample p_i from an N×C logit matrix.
std::vector<double> true_class_scores(const Matrix& logits, std::span<const std::uint32_t> truths, StabilityMode mode);

struct PseudoLabelStats {
  std::vector<std::size_t> histogram;  // over masked-in pseudo-labels
  std::size_t masked_in = 0;
  std::size_t false_count = 0;
  double mean_false_confidence = 0.0;  // 0 when no false pseudo-labels
};

PseudoLabelStats pseudo_label_stats(std::span<const std::uint32_t> pseudo_labels, std::span<const double> confidences,
                                    std::span<const std::uint32_t> truths, const std::vector<bool>& mask,
                                    std::size_t classes);

inline constexpr int kReportSchemaVersion = 1;

/// One evaluation record.
struct RunReport {
  std::string arm = "full";
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
  double overall_accuracy = 0.0;
  std::optional<double> head_accuracy;
  std::optional<double> medium_accuracy;
  std::optional<double> tail_accuracy;
  double stability = 0.0;
  std::vector<std::size_t> pseudo_label_histogram;
  std::size_t masked_in = 0;
  std::size_t false_pseudo_labels = 0;
  double mean_false_confidence = 0.0;
  double mask_pass_rate = 0.0;
  LossBreakdown loss;  // mean over the training steps since the previous record
  std::map<std::string, std::string> config;  // effective configuration (provenance)

  bool operator==(const RunReport&) const = default;
};

std::string to_jsonl_line(const RunReport& report);
RunReport parse_jsonl_line(const std::string& line);

/// Writes `<stem>.jsonl` (one record per line) and `<stem>.csv` (header plus
/// one row per record). Throws std::runtime_error with the path on I/O failure.
void emit_report(std::span<const RunReport> series, const std::filesystem::path& stem);

std::vector<RunReport> read_report_jsonl(const std::filesystem::path& path);

/// The histogram column is ';'-joined counts; the config column is ';'-joined key=value pairs.
std::string csv_header();
std::string to_csv_row(const RunReport& report);

}  // namespace ulfine
