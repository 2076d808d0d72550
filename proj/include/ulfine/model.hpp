#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "ulfine/linalg.hpp"

namespace ulfine {

/// Trainable state: linear probe over adapted features plus a rank-r
/// residual adapter z = normalize(x + s·B·(A·x)).
struct ModelParams {
  Matrix probe_w;    // C×D
  Vector probe_b;    // C
  Matrix adapter_a;  // r×D
  Matrix adapter_b;  // D×r
  double adapter_scale = 1.0;

  std::size_t classes() const { return probe_w.rows(); }
  std::size_t dim() const { return probe_w.cols(); }
  std::size_t rank() const { return adapter_a.rows(); }

  /// Zero-valued parameters of the given shape.
  static ModelParams zeros(std::size_t classes, std::size_t dim, std::size_t rank, double adapter_scale = 1.0);

  /// Probe W ~ N(0, probe_init²), b = 0, A = 0, B ~ N(0, 1/r). With A = 0
  /// the adapter starts as the identity on features.
  static ModelParams initialize(std::size_t classes, std::size_t dim, std::size_t rank, double adapter_scale,
                                double probe_init, std::uint64_t seed);

  /// Trainable tensors in a fixed order: W, b, A, B.
  std::array<std::span<double>, 4> tensors();
  std::array<std::span<const double>, 4> tensors() const;

  bool all_finite() const;
  bool operator==(const ModelParams&) const = default;
};

/// Intermediates of forward_features kept for the backward pass.
struct FeatureTrace {
  Vector hidden;  // A·x, length r
  Vector residual;  // u = x + s·B·hidden
  double residual_norm = 0.0;
  Vector z;  // u / |u|
};

/// Throws NumericError when the residual collapses to zero or goes non-finite.
FeatureTrace trace_features(const ModelParams& params, std::span<const double> x);

inline Vector forward_features(const ModelParams& params, std::span<const double> x) {
  return trace_features(params, x).z;
}

/// W·z + b
Vector probe_logits(const ModelParams& params, std::span<const double> z);

/// Loss terms as reported by the objective. `orthogonal` is the unweighted
/// L_o; `total = labeled + unlabeled + orthogonal_weight·orthogonal`.
struct LossBreakdown {
  double labeled = 0.0;
  double unlabeled = 0.0;
  double orthogonal = 0.0;
  double orthogonal_weight = 0.0;
  double total = 0.0;

  bool operator==(const LossBreakdown&) const = default;
};

struct Gradients {
  ModelParams grad;  // same shapes as the parameters
  LossBreakdown loss;
};

/// Accumulates ∂L/∂W and ∂L/∂b and overwrites `dz` with ∂L/∂z for one sample given ∂L/∂logits.
void backprop_probe(const ModelParams& params, std::span<const double> z, std::span<const double> dlogits,
                    ModelParams& grad, std::span<double> dz);

/// Accumulates ∂L/∂A and ∂L/∂B for one sample given ∂L/∂z, chaining through
/// the normalization and the residual adapter.
void backprop_features(const ModelParams& params, std::span<const double> x, const FeatureTrace& trace,
                       std::span<const double> dz, ModelParams& grad);

struct OptimizerState {
  ModelParams velocity;
  double learning_rate = 0.03;
  double momentum = 0.9;
  double weight_decay = 5e-4;

  static OptimizerState for_params(const ModelParams& params, double lr, double momentum, double weight_decay);
  bool operator==(const OptimizerState&) const = default;
};

/// Heavy-ball SGD with coupled weight decay:
///   v ← m·v + g + wd·p ;  p ← p − lr·v
/// When `update_adapter` is false the adapter tensors and their buffers are left untouched.
void sgd_step(ModelParams& params, const ModelParams& grad, OptimizerState& opt, bool update_adapter = true);

}  // namespace ulfine
