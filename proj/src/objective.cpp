#include "ulfine/objective.hpp"

#include <cmath>
#include <sstream>

#include "ulfine/error.hpp"
#include "ulfine/fusion.hpp"
#include "ulfine/prototypes.hpp"

namespace ulfine {

namespace {

Gradients evaluate(const TrainingBatch& batch, const ModelParams& params, const ObjectiveConfig& cfg, bool want_grad) {
  const std::size_t classes = params.classes();
  const std::size_t dim = params.dim();
  Gradients out;
  if (want_grad) out.grad = ModelParams::zeros(classes, dim, params.rank(), params.adapter_scale);
  out.loss.orthogonal_weight = cfg.orthogonal_weight;

  // Labeled branch.
  const std::size_t n_lab = batch.labeled.size();
  std::vector<FeatureTrace> lab_traces;
  lab_traces.reserve(n_lab);
  std::vector<Vector> lab_dz(n_lab, Vector(dim, 0.0));
  std::vector<Vector> lab_z;
  lab_z.reserve(n_lab);
  for (std::size_t i = 0; i < n_lab; ++i) {
    lab_traces.push_back(trace_features(params, batch.labeled[i]));
    lab_z.push_back(lab_traces.back().z);
  }
  if (n_lab > 0) {
    const double inv = 1.0 / static_cast<double>(n_lab);
    for (std::size_t i = 0; i < n_lab; ++i) {
      const Vector logits = probe_logits(params, lab_z[i]);
      LogitLoss ce = adjusted_ce_labeled(logits, batch.labels[i], cfg.class_prior, cfg.la_strength);
      out.loss.labeled += inv * ce.loss;
      if (want_grad) {
        for (double& g : ce.grad) g *= inv;
        backprop_probe(params, lab_z[i], ce.grad, out.grad, lab_dz[i]);
      }
    }
  }

  // Orthogonality over the present class means of the labeled batch.
  if (cfg.orthogonal_weight != 0.0 && n_lab > 0) {
    const BatchMeans bm = batch_class_means(lab_z, batch.labels, classes);
    std::vector<std::size_t> present;
    for (std::size_t k = 0; k < classes; ++k) {
      if (bm.present[k]) present.push_back(k);
    }
    Matrix rows(present.size(), dim);
    for (std::size_t a = 0; a < present.size(); ++a) {
      const auto src = bm.means.row(present[a]);
      std::copy(src.begin(), src.end(), rows.row(a).begin());
    }
    const OrthogonalLoss lo = orthogonal_loss(rows);
    out.loss.orthogonal = lo.value;
    if (want_grad) {
      // mean_k = s/|s| with s = (1/n)Σ z_i  ⇒  ∂/∂z_i = (g − mean·⟨mean, g⟩)/(|s|·n)
      std::vector<Vector> ds(classes);
      for (std::size_t a = 0; a < present.size(); ++a) {
        const std::size_t k = present[a];
        const auto g = lo.grad.row(a);
        const auto m = rows.row(a);
        const double mg = dot(m, g);
        ds[k].resize(dim);
        const double scale = cfg.orthogonal_weight / (bm.sum_norms[k] * static_cast<double>(bm.counts[k]));
        for (std::size_t d = 0; d < dim; ++d) ds[k][d] = scale * (g[d] - m[d] * mg);
      }
      for (std::size_t i = 0; i < n_lab; ++i) {
        const auto& dk = ds[batch.labels[i]];
        if (dk.empty()) continue;
        for (std::size_t d = 0; d < dim; ++d) lab_dz[i][d] += dk[d];
      }
    }
  }

  if (want_grad) {
    for (std::size_t i = 0; i < n_lab; ++i) backprop_features(params, batch.labeled[i], lab_traces[i], lab_dz[i], out.grad);
  }

  // Unlabeled strong branch.
  const std::size_t n_unl = batch.unlabeled_strong.size();
  if (n_unl > 0) {
    std::vector<FeatureTrace> traces;
    traces.reserve(n_unl);
    std::vector<Vector> logits;
    logits.reserve(n_unl);
    for (std::size_t j = 0; j < n_unl; ++j) {
      if (!batch.mask[j]) {
        // Masked samples contribute nothing; skip their forward pass entirely.
        traces.emplace_back();
        logits.push_back(Vector(classes, 0.0));
        continue;
      }
      traces.push_back(trace_features(params, batch.unlabeled_strong[j]));
      logits.push_back(probe_logits(params, traces.back().z));
    }
    const BatchLogitLoss cons = consistency_loss(logits, batch.pseudo_labels, batch.mask);
    out.loss.unlabeled = cons.loss;
    if (want_grad) {
      Vector dz(dim);
      for (std::size_t j = 0; j < n_unl; ++j) {
        if (!batch.mask[j]) continue;
        backprop_probe(params, traces[j].z, cons.grads[j], out.grad, dz);
        backprop_features(params, batch.unlabeled_strong[j], traces[j], dz, out.grad);
      }
    }
  }

  out.loss.total = out.loss.labeled + out.loss.unlabeled + cfg.orthogonal_weight * out.loss.orthogonal;
  if (!std::isfinite(out.loss.total)) {
    std::ostringstream msg;
    msg << "non-finite loss: labeled=" << out.loss.labeled << " unlabeled=" << out.loss.unlabeled
        << " orthogonal=" << out.loss.orthogonal << " (weight " << cfg.orthogonal_weight << ")";
    throw NumericError(msg.str());
  }
  return out;
}

}  // namespace

LossBreakdown total_loss(const TrainingBatch& batch, const ModelParams& params, const ObjectiveConfig& cfg) {
  return evaluate(batch, params, cfg, false).loss;
}

Gradients backward(const TrainingBatch& batch, const ModelParams& params, const ObjectiveConfig& cfg) {
  return evaluate(batch, params, cfg, true);
}

}  // namespace ulfine
