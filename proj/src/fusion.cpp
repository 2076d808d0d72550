#include "ulfine/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "ulfine/error.hpp"

namespace ulfine {

MaskSource parse_mask_source(const std::string& name) {
  if (name == "fused") return MaskSource::kFused;
  if (name == "probe") return MaskSource::kProbe;
  throw ConfigError("unknown mask source '" + name + "' (expected fused|probe)");
}

std::string to_string(MaskSource source) { return source == MaskSource::kFused ? "fused" : "probe"; }

void FusionConfig::validate(std::size_t classes) const {
  if (eta < 0.0 || eta > 1.0) throw ConfigError("fusion.eta must lie in [0,1]");
  if (!(temperature > 0.0)) throw ConfigError("fusion.temperature must be positive");
  if (mask_threshold < 0.0) throw ConfigError("fusion.mask_threshold must be non-negative");
  if (la_strength < 0.0) throw ConfigError("fusion.la_strength must be non-negative");
  if (range_epsilon < 0.0) throw ConfigError("fusion.range_epsilon must be non-negative");
  if (class_prior.size() != classes) throw ConfigError("fusion: class prior has wrong length");
  double total = 0.0;
  for (double p : class_prior) {
    if (!(p > 0.0)) throw ConfigError("fusion: class prior entries must be positive");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("fusion: class prior must sum to one");
}

Vector class_prior_from_counts(std::span<const std::size_t> counts) {
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  Vector prior(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k) prior[k] = static_cast<double>(counts[k]) / total;
  return prior;
}

Vector text_logits(std::span<const double> z, const Matrix& text_rows, double temperature) {
  Vector out(text_rows.rows());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = dot(z, text_rows.row(k)) / temperature;
  return out;
}

Vector align_logits(std::span<const double> p_text, std::span<const double> p_probe, double range_epsilon) {
  const auto [t_min, t_max] = std::minmax_element(p_text.begin(), p_text.end());
  const auto [v_min, v_max] = std::minmax_element(p_probe.begin(), p_probe.end());
  const double t_range = *t_max - *t_min;
  Vector out(p_text.size());
  if (!(t_range > range_epsilon)) {
    double mean = 0.0;
    for (double v : p_probe) mean += v;
    mean /= static_cast<double>(p_probe.size());
    std::fill(out.begin(), out.end(), mean);
    return out;
  }
  const double beta = (*v_max - *v_min) / t_range;
  const std::size_t i_min = static_cast<std::size_t>(t_min - p_text.begin());
  const std::size_t i_max = static_cast<std::size_t>(t_max - p_text.begin());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = beta * (p_text[k] - *t_min) + *v_min;
  // Pin the extremes so the range identity holds exactly despite rounding in β.
  out[i_min] = *v_min;
  out[i_max] = *v_max;
  return out;
}

Vector fuse(std::span<const double> p_probe, std::span<const double> p_text_aligned, double eta) {
  if (p_probe.size() != p_text_aligned.size()) throw DimensionError("fuse: logit lengths differ");
  if (eta == 1.0) return Vector(p_probe.begin(), p_probe.end());
  if (eta == 0.0) return Vector(p_text_aligned.begin(), p_text_aligned.end());
  Vector out(p_probe.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = eta * p_probe[k] + (1.0 - eta) * p_text_aligned[k];
  return out;
}

Vector softmax(std::span<const double> logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  Vector out(logits.size());
  double total = 0.0;
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = std::exp(logits[k] - peak);
    total += out[k];
  }
  for (double& v : out) v /= total;
  return out;
}

PseudoLabel pseudo_label(std::span<const double> logits) {
  const Vector probs = softmax(logits);
  PseudoLabel out;
  for (std::size_t k = 1; k < probs.size(); ++k) {
    if (probs[k] > probs[out.label]) out.label = static_cast<std::uint32_t>(k);
  }
  out.confidence = probs[out.label];
  return out;
}

LogitLoss adjusted_ce_labeled(std::span<const double> logits, std::uint32_t label, std::span<const double> prior,
                              double la_strength) {
  Vector adjusted(logits.begin(), logits.end());
  if (la_strength != 0.0) {
    for (std::size_t k = 0; k < adjusted.size(); ++k) adjusted[k] += la_strength * std::log(prior[k]);
  }
  const double peak = *std::max_element(adjusted.begin(), adjusted.end());
  double total = 0.0;
  for (double v : adjusted) total += std::exp(v - peak);
  const double log_z = peak + std::log(total);
  LogitLoss out;
  out.loss = log_z - adjusted[label];
  out.grad.resize(adjusted.size());
  for (std::size_t k = 0; k < adjusted.size(); ++k) out.grad[k] = std::exp(adjusted[k] - log_z);
  out.grad[label] -= 1.0;
  return out;
}

BatchLogitLoss consistency_loss(std::span<const Vector> strong_logits, std::span<const std::uint32_t> targets,
                                const std::vector<bool>& mask) {
  BatchLogitLoss out;
  out.grads.resize(strong_logits.size());
  if (strong_logits.empty()) return out;
  const double inv_batch = 1.0 / static_cast<double>(strong_logits.size());
  for (std::size_t j = 0; j < strong_logits.size(); ++j) {
    if (!mask[j]) {
      out.grads[j].assign(strong_logits[j].size(), 0.0);
      continue;
    }
    const LogitLoss ce = adjusted_ce_labeled(strong_logits[j], targets[j], {}, 0.0);
    out.loss += inv_batch * ce.loss;
    out.grads[j] = ce.grad;
    for (double& g : out.grads[j]) g *= inv_batch;
  }
  return out;
}

LogitBundle dual_logits(std::span<const double> z, const ModelParams& params, const Matrix& text_rows,
                        const FusionConfig& cfg) {
  LogitBundle b;
  b.probe = probe_logits(params, z);
  b.text = text_logits(z, text_rows, cfg.temperature);
  b.text_aligned = align_logits(b.text, b.probe, cfg.range_epsilon);
  b.fused = fuse(b.probe, b.text_aligned, cfg.eta);
  const PseudoLabel fused_pl = pseudo_label(b.fused);
  b.pseudo_label = fused_pl.label;
  b.confidence = fused_pl.confidence;
  b.probe_confidence = pseudo_label(b.probe).confidence;
  const double gate = cfg.mask_source == MaskSource::kFused ? b.confidence : b.probe_confidence;
  b.mask_pass = gate > cfg.mask_threshold;
  return b;
}

Vector inference_logits(std::span<const double> x, const ModelParams& params, const Matrix& text_rows,
                        const FusionConfig& cfg) {
  const Vector z = forward_features(params, x);
  const Vector probe = probe_logits(params, z);
  if (cfg.eta == 1.0) return probe;
  const Vector text = text_logits(z, text_rows, cfg.temperature);
  return fuse(probe, align_logits(text, probe, cfg.range_epsilon), cfg.eta);
}

}  // namespace ulfine
