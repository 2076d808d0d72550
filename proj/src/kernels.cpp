#include "ulfine/kernels.hpp"

#include <exception>
#include <mutex>

namespace ulfine::kernels {

namespace {

InferenceResult allocate(const EmbeddingSet& set, const ModelParams& params) {
  InferenceResult r;
  r.logits = Matrix(set.rows(), params.classes());
  r.predictions.assign(set.rows(), 0);
  r.confidence.assign(set.rows(), 0.0);
  r.probe_confidence.assign(set.rows(), 0.0);
  return r;
}

void infer_row(const EmbeddingSet& set, const ModelParams& params, const Matrix& text_rows, const FusionConfig& cfg,
               std::size_t i, InferenceResult& r) {
  const Vector x = set.row_as_double(i);
  const Vector z = forward_features(params, x);
  const Vector probe = probe_logits(params, z);
  const Vector fused = cfg.eta == 1.0 ? probe : fuse(probe, align_logits(text_logits(z, text_rows, cfg.temperature), probe, cfg.range_epsilon), cfg.eta);
  const PseudoLabel pl = pseudo_label(fused);
  auto out = r.logits.row(i);
  std::copy(fused.begin(), fused.end(), out.begin());
  r.predictions[i] = pl.label;
  r.confidence[i] = pl.confidence;
  r.probe_confidence[i] = pseudo_label(probe).confidence;
}

}  // namespace

InferenceResult infer_serial(const EmbeddingSet& set, const ModelParams& params, const Matrix& text_rows,
                             const FusionConfig& cfg) {
  InferenceResult r = allocate(set, params);
  for (std::size_t i = 0; i < set.rows(); ++i) infer_row(set, params, text_rows, cfg, i, r);
  return r;
}

InferenceResult infer_parallel(const EmbeddingSet& set, const ModelParams& params, const Matrix& text_rows,
                               const FusionConfig& cfg) {
  InferenceResult r = allocate(set, params);
  const auto n = static_cast<std::ptrdiff_t>(set.rows());
  std::exception_ptr failure;
  std::mutex failure_mutex;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      infer_row(set, params, text_rows, cfg, static_cast<std::size_t>(i), r);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return r;
}

InferenceResult infer(const EmbeddingSet& set, const ModelParams& params, const Matrix& text_rows,
                      const FusionConfig& cfg) {
#ifdef ULFINE_HAVE_OPENMP
  return infer_parallel(set, params, text_rows, cfg);
#else
  return infer_serial(set, params, text_rows, cfg);
#endif
}

}  // namespace ulfine::kernels
