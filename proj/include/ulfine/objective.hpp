#pragma once

#include <cstdint>
#include <vector>

#include "ulfine/linalg.hpp"
#include "ulfine/model.hpp"

namespace ulfine {

/// One optimisation step's inputs after augmentation and pseudo-labelling.
/// Pseudo-labels and the mask come from the weak branch and are constants here.
struct TrainingBatch {
  std::vector<Vector> labeled;  // weak-augmented raw features
  std::vector<std::uint32_t> labels;
  std::vector<Vector> unlabeled_strong;  // strong-augmented raw features
  std::vector<std::uint32_t> pseudo_labels;
  std::vector<bool> mask;
};

struct ObjectiveConfig {
  Vector class_prior;
  double la_strength = 1.0;
  double orthogonal_weight = 1.0;
};

/// Labeled logit-adjusted CE + masked consistency CE + λ_o·L_o over the
/// current labeled batch's class means.
LossBreakdown total_loss(const TrainingBatch& batch, const ModelParams& params, const ObjectiveConfig& cfg);

/// Analytic gradient of total_loss w.r.t. every parameter. Throws
/// NumericError with the term breakdown when the loss is not finite.
Gradients backward(const TrainingBatch& batch, const ModelParams& params, const ObjectiveConfig& cfg);

}  // namespace ulfine
