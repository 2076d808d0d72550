#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ulfine/linalg.hpp"
#include "ulfine/model.hpp"
#include "ulfine/prototypes.hpp"

namespace ulfine {

/// Which weak-branch probabilities gate the consistency mask.
enum class MaskSource { kFused, kProbe };

MaskSource parse_mask_source(const std::string& name);
std::string to_string(MaskSource source);

struct FusionConfig {
  double eta = 0.7;
  double temperature = 0.05;
  double mask_threshold = 0.95;
  double la_strength = 1.0;
  Vector class_prior;  // P_l, strictly positive, sums to one; filled from the labeled split
  double range_epsilon = 1e-12;
  MaskSource mask_source = MaskSource::kFused;

  void validate(std::size_t classes) const;
};

/// Empirical class prior from labeled counts.
Vector class_prior_from_counts(std::span<const std::size_t> counts);

/// ⟨z, c_t^k⟩ / T
Vector text_logits(std::span<const double> z, const Matrix& text_rows, double temperature);

/// Affine map of p_t onto the [min, max] range of p_v. A p_t whose range is
/// ≤ epsilon maps to the constant mean(p_v).
Vector align_logits(std::span<const double> p_text, std::span<const double> p_probe, double range_epsilon);

/// η·p_v + (1−η)·p̂_t; η ∈ {0, 1} returns the corresponding input unchanged.
Vector fuse(std::span<const double> p_probe, std::span<const double> p_text_aligned, double eta);

Vector softmax(std::span<const double> logits);

struct PseudoLabel {
  std::uint32_t label = 0;  // argmax, lowest index on ties
  double confidence = 0.0;  // max softmax entry
};

PseudoLabel pseudo_label(std::span<const double> logits);

struct LogitLoss {
  double loss = 0.0;
  Vector grad;  // ∂loss/∂logits
};

/// CE(softmax(logits + τ_la·log P_l), y)
LogitLoss adjusted_ce_labeled(std::span<const double> logits, std::uint32_t label, std::span<const double> prior,
                              double la_strength);

struct BatchLogitLoss {
  double loss = 0.0;
  std::vector<Vector> grads;  // per sample ∂loss/∂logits (already divided by B_u)
};

/// (1/B_u)·Σ mask_j·CE(strong_j, q̃_j). Masked-out samples get exact zero gradients.
BatchLogitLoss consistency_loss(std::span<const Vector> strong_logits, std::span<const std::uint32_t> targets,
                                const std::vector<bool>& mask);

/// All per-sample DLF quantities for one weak-branch feature.
struct LogitBundle {
  Vector probe;
  Vector text;
  Vector text_aligned;
  Vector fused;
  std::uint32_t pseudo_label = 0;
  double confidence = 0.0;        // max softmax of the fused logits
  double probe_confidence = 0.0;  // max softmax of the probe logits
  bool mask_pass = false;
};

LogitBundle dual_logits(std::span<const double> z, const ModelParams& params, const Matrix& text_rows,
                        const FusionConfig& cfg);

/// Test-time path: adapted feature, probe and text logits, alignment, fusion.
/// No masking and no logit adjustment.
Vector inference_logits(std::span<const double> x, const ModelParams& params, const Matrix& text_rows,
                        const FusionConfig& cfg);

}  // namespace ulfine
