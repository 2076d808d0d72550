#include "ulfine/model.hpp"

#include <cmath>
#include <string>

#include "ulfine/error.hpp"
#include "ulfine/rng.hpp"

namespace ulfine {

ModelParams ModelParams::zeros(std::size_t classes, std::size_t dim, std::size_t rank, double adapter_scale) {
  ModelParams p;
  p.probe_w = Matrix(classes, dim);
  p.probe_b = Vector(classes, 0.0);
  p.adapter_a = Matrix(rank, dim);
  p.adapter_b = Matrix(dim, rank);
  p.adapter_scale = adapter_scale;
  return p;
}

ModelParams ModelParams::initialize(std::size_t classes, std::size_t dim, std::size_t rank, double adapter_scale,
                                    double probe_init, std::uint64_t seed) {
  ModelParams p = zeros(classes, dim, rank, adapter_scale);
  Rng rng(seed);
  for (double& v : p.probe_w.data()) v = probe_init * rng.normal();
  const double b_sigma = rank > 0 ? 1.0 / std::sqrt(static_cast<double>(rank)) : 0.0;
  for (double& v : p.adapter_b.data()) v = b_sigma * rng.normal();
  return p;
}

std::array<std::span<double>, 4> ModelParams::tensors() {
  return {std::span<double>(probe_w.data()), std::span<double>(probe_b), std::span<double>(adapter_a.data()),
          std::span<double>(adapter_b.data())};
}

std::array<std::span<const double>, 4> ModelParams::tensors() const {
  return {std::span<const double>(probe_w.data()), std::span<const double>(probe_b),
          std::span<const double>(adapter_a.data()), std::span<const double>(adapter_b.data())};
}

bool ModelParams::all_finite() const {
  for (auto t : tensors()) {
    if (!ulfine::all_finite(t)) return false;
  }
  return std::isfinite(adapter_scale);
}

FeatureTrace trace_features(const ModelParams& params, std::span<const double> x) {
  const std::size_t dim = params.dim();
  if (x.size() != dim) throw DimensionError("forward_features: expected D=" + std::to_string(dim));
  FeatureTrace t;
  t.hidden.assign(params.rank(), 0.0);
  matvec(params.adapter_a, x, t.hidden);
  t.residual.assign(x.begin(), x.end());
  for (std::size_t d = 0; d < dim; ++d) {
    t.residual[d] += params.adapter_scale * dot(params.adapter_b.row(d), t.hidden);
  }
  t.residual_norm = norm(t.residual);
  if (!(t.residual_norm > 0.0) || !std::isfinite(t.residual_norm)) {
    throw NumericError("forward_features: degenerate feature (residual norm " + std::to_string(t.residual_norm) + ")");
  }
  t.z = t.residual;
  for (double& v : t.z) v /= t.residual_norm;
  return t;
}

Vector probe_logits(const ModelParams& params, std::span<const double> z) {
  Vector out(params.classes());
  matvec(params.probe_w, z, out);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += params.probe_b[k];
  return out;
}

void backprop_probe(const ModelParams& params, std::span<const double> z, std::span<const double> dlogits,
                    ModelParams& grad, std::span<double> dz) {
  add_outer(grad.probe_w, dlogits, z);
  for (std::size_t k = 0; k < dlogits.size(); ++k) grad.probe_b[k] += dlogits[k];
  matvec_transposed(params.probe_w, dlogits, dz);
}

void backprop_features(const ModelParams& params, std::span<const double> x, const FeatureTrace& trace,
                       std::span<const double> dz, ModelParams& grad) {
  const std::size_t dim = params.dim();
  const std::size_t rank = params.rank();
  if (rank == 0) return;
  // z = u/|u|  ⇒  ∂L/∂u = (g − z·⟨z, g⟩)/|u|
  const double zg = dot(trace.z, dz);
  Vector du(dim);
  for (std::size_t d = 0; d < dim; ++d) du[d] = (dz[d] - trace.z[d] * zg) / trace.residual_norm;
  // u = x + s·B·h
  add_outer(grad.adapter_b, du, trace.hidden, params.adapter_scale);
  Vector dh(rank);
  matvec_transposed(params.adapter_b, du, dh);
  for (double& v : dh) v *= params.adapter_scale;
  // h = A·x
  add_outer(grad.adapter_a, dh, x);
}

OptimizerState OptimizerState::for_params(const ModelParams& params, double lr, double momentum,
                                          double weight_decay) {
  OptimizerState s;
  s.velocity = ModelParams::zeros(params.classes(), params.dim(), params.rank(), params.adapter_scale);
  s.learning_rate = lr;
  s.momentum = momentum;
  s.weight_decay = weight_decay;
  return s;
}

void sgd_step(ModelParams& params, const ModelParams& grad, OptimizerState& opt, bool update_adapter) {
  auto p = params.tensors();
  auto g = grad.tensors();
  auto v = opt.velocity.tensors();
  const std::size_t n_tensors = update_adapter ? 4 : 2;
  for (std::size_t t = 0; t < n_tensors; ++t) {
    if (p[t].size() != g[t].size() || p[t].size() != v[t].size()) {
      throw DimensionError("sgd_step: parameter/gradient shape mismatch");
    }
    for (std::size_t i = 0; i < p[t].size(); ++i) {
      v[t][i] = opt.momentum * v[t][i] + g[t][i] + opt.weight_decay * p[t][i];
      p[t][i] -= opt.learning_rate * v[t][i];
    }
  }
}

}  // namespace ulfine
