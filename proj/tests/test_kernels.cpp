#include <gtest/gtest.h>

#include "oracles.hpp"
#include "ulfine/error.hpp"
#include "ulfine/kernels.hpp"
#include "ulfine/prototypes.hpp"

using namespace ulfine;

namespace {

struct Fixture {
  EmbeddingSet set;
  ModelParams params;
  Matrix text;
  FusionConfig cfg;
};

Fixture make_fixture(double eta) {
  Fixture f;
  const std::vector<std::size_t> per_class(6, 70);
  f.set = synth_embeddings(6, 16, per_class, 1.0, 0.4, 3);
  f.params = ModelParams::initialize(6, 16, 3, 1.0, 0.3, 5);
  Rng rng(7);
  for (double& v : f.params.adapter_a.data()) v = 0.1 * rng.normal();
  f.text = synthetic_text_prototypes(6, 16, 9).rows;
  f.cfg.class_prior = Vector(6, 1.0 / 6.0);
  f.cfg.eta = eta;
  return f;
}

}  // namespace

TEST(Kernels, ParallelMatchesSerialBitwise) {
  for (double eta : {0.0, 0.7, 1.0}) {
    const Fixture f = make_fixture(eta);
    EXPECT_EQ(kernels::infer_parallel(f.set, f.params, f.text, f.cfg), kernels::infer_serial(f.set, f.params, f.text, f.cfg));
    EXPECT_EQ(kernels::infer(f.set, f.params, f.text, f.cfg), kernels::infer_serial(f.set, f.params, f.text, f.cfg));
  }
}

TEST(Kernels, RowsMatchPerSampleInference) {
  const Fixture f = make_fixture(0.7);
  const auto result = kernels::infer_serial(f.set, f.params, f.text, f.cfg);
  ASSERT_EQ(result.logits.rows(), f.set.rows());
  for (std::size_t i = 0; i < f.set.rows(); ++i) {
    const Vector expected = inference_logits(f.set.row_as_double(i), f.params, f.text, f.cfg);
    const auto row = result.logits.row(i);
    EXPECT_TRUE(std::equal(row.begin(), row.end(), expected.begin())) << "row " << i;
    const PseudoLabel pl = pseudo_label(expected);
    EXPECT_EQ(result.predictions[i], pl.label);
    EXPECT_EQ(result.confidence[i], pl.confidence);
    EXPECT_EQ(result.probe_confidence[i],
              pseudo_label(probe_logits(f.params, forward_features(f.params, f.set.row_as_double(i)))).confidence);
  }
}

TEST(Kernels, EtaOnePredictionsEqualProbePredictions) {
  const Fixture f = make_fixture(1.0);
  const auto result = kernels::infer_parallel(f.set, f.params, f.text, f.cfg);
  for (std::size_t i = 0; i < f.set.rows(); ++i) {
    const Vector probe = probe_logits(f.params, forward_features(f.params, f.set.row_as_double(i)));
    EXPECT_EQ(result.predictions[i], pseudo_label(probe).label);
  }
}

TEST(Kernels, ErrorsPropagateFromParallelRegion) {
  Fixture f = make_fixture(0.7);
  // Collapse the residual of every input aligned with e0.
  f.params = ModelParams::zeros(6, 16, 1, 1.0);
  f.params.adapter_a(0, 0) = 1.0;
  f.params.adapter_b(0, 0) = -1.0;
  std::vector<float> feats(16 * 4, 0.0f);
  for (std::size_t i = 0; i < 4; ++i) feats[i * 16] = 1.0f;
  const EmbeddingSet bad(feats, 16, std::nullopt, 6);
  EXPECT_THROW(kernels::infer_parallel(bad, f.params, f.text, f.cfg), NumericError);
  EXPECT_THROW(kernels::infer_serial(bad, f.params, f.text, f.cfg), NumericError);
}
