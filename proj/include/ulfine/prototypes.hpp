#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ulfine/linalg.hpp"

namespace ulfine {

enum class PrototypeSource { kFile, kSynthetic };

struct TextPrototypes {
  Matrix rows;  // C×D, unit rows
  PrototypeSource source = PrototypeSource::kSynthetic;

  bool operator==(const TextPrototypes&) const = default;
};

struct VisualPrototypes {
  Matrix rows;  // C×D, unit rows
  std::vector<bool> seen;

  bool operator==(const VisualPrototypes&) const = default;
};

struct PseudoDistribution {
  Vector probs;  // simplex over C

  static PseudoDistribution uniform(std::size_t classes);
  bool operator==(const PseudoDistribution&) const = default;
};

struct PAFConfig {
  double mu = 0.9;
  double visual_momentum = 0.9;
  double dist_momentum = 0.99;
  double orthogonal_weight = 1.0;
  /// Fold the current batch into P_u before computing α (true) or after.
  bool update_dist_before_alpha = true;

  void validate() const;
};

/// Everything the prototype machinery carries between steps.
struct PrototypeState {
  TextPrototypes text;
  VisualPrototypes visual;
  PseudoDistribution dist;
  std::uint64_t degenerate_text_updates = 0;

  /// Visual prototypes start as a copy of the text prototypes so unseen
  /// classes pull nothing toward an arbitrary direction.
  static PrototypeState from_text(TextPrototypes text);
  bool operator==(const PrototypeState&) const = default;
};

/// Orthonormal rows from Gram-Schmidt on seeded Gaussian draws (requires D ≥ C).
TextPrototypes synthetic_text_prototypes(std::size_t classes, std::size_t dim, std::uint64_t seed);

/// Loads the embedding-format file (has_labels=1, row k labeled k), renormalizing rows.
TextPrototypes load_text_prototypes(const std::filesystem::path& path, std::size_t classes, std::size_t dim);
void save_text_prototypes(const TextPrototypes& tp, const std::filesystem::path& path);

struct BatchMeans {
  Matrix means;  // C×D; rows of absent classes are zero
  std::vector<bool> present;
  std::vector<std::size_t> counts;
  Vector sum_norms;  // |Σ z| / n per class, kept for backprop through the normalization
};

/// Normalized per-class means. A class whose member sum has (near) zero norm
/// is reported as not present.
BatchMeans batch_class_means(std::span<const Vector> features, std::span<const std::uint32_t> labels,
                             std::size_t classes);

/// c_v ← normalize(m_v·c_v + (1−m_v)·mean) for present classes.
void update_visual(VisualPrototypes& vp, const BatchMeans& means, double momentum);

/// P_u ← normalize(m_p·P_u + (1−m_p)·mean(rows)); empty batch is a no-op.
void update_pseudo_distribution(PseudoDistribution& pd, std::span<const Vector> probs, double momentum);

/// α_k = μ·P_u^k / max_i P_u^i. Throws NumericError on an all-zero P_u.
Vector alpha_coefficients(std::span<const double> dist, double mu);

/// c_t^k ← normalize((1−α_k)·c_t^k + α_k·c_v^k). A combination that collapses
/// to zero keeps the previous row; the return value counts such rows.
std::size_t paf_update_text(TextPrototypes& tp, const VisualPrototypes& vp, std::span<const double> alpha);

struct OrthogonalLoss {
  double value = 0.0;
  Matrix grad;  // ∂L/∂rows
};

/// mean over K² entries of (⟨m_i, m_j⟩ − δ_ij)².
OrthogonalLoss orthogonal_loss(const Matrix& rows);

}  // namespace ulfine
