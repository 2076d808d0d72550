#pragma once

// Whole-dataset inference. The serial version is the reference; the OpenMP
// version distributes rows across threads and writes each row's result into
// its own slot, so both produce bit-identical output.

#include <cstdint>
#include <vector>

#include "ulfine/data.hpp"
#include "ulfine/fusion.hpp"
#include "ulfine/linalg.hpp"
#include "ulfine/model.hpp"

namespace ulfine::kernels {

struct InferenceResult {
  Matrix logits;  // N×C fused (DLF) logits
  std::vector<std::uint32_t> predictions;
  std::vector<double> confidence;        // max softmax of the fused logits
  std::vector<double> probe_confidence;  // max softmax of the probe logits

  bool operator==(const InferenceResult&) const = default;
};

InferenceResult infer_serial(const EmbeddingSet& set, const ModelParams& params, const Matrix& text_rows,
                             const FusionConfig& cfg);

InferenceResult infer_parallel(const EmbeddingSet& set, const ModelParams& params, const Matrix& text_rows,
                               const FusionConfig& cfg);

/// Dispatches to infer_parallel when built with OpenMP, otherwise infer_serial.
InferenceResult infer(const EmbeddingSet& set, const ModelParams& params, const Matrix& text_rows,
                      const FusionConfig& cfg);

}  // namespace ulfine::kernels
