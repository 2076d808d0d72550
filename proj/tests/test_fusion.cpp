#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "ulfine/error.hpp"
#include "ulfine/fusion.hpp"

using namespace ulfine;

namespace {

Vector random_logits(std::size_t n, Rng& rng, double scale = 3.0) {
  Vector v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

}  // namespace

TEST(TextLogits, OrthonormalPrototypeGivesIndicator) {
  const Matrix eye = [] {
    Matrix m(3, 3);
    for (std::size_t k = 0; k < 3; ++k) m(k, k) = 1.0;
    return m;
  }();
  const Vector p = text_logits(Vector{1.0, 0.0, 0.0}, eye, 1.0);
  EXPECT_EQ(p, (Vector{1.0, 0.0, 0.0}));
}

TEST(TextLogits, MatchesDotProductOracle) {
  Rng rng(6);
  Matrix rows(3, 4);
  for (double& v : rows.data()) v = rng.normal();
  const Vector z = ulfine::testing::random_unit(4, rng);
  const Vector got = text_logits(z, rows, 0.05);
  const Vector raw = ulfine::testing::naive_matvec(rows, z);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(got[k], raw[k] / 0.05, 1e-12);
}

TEST(Align, Examples) {
  const Vector pv{0.3, -1.2, 2.5};
  const Vector same = align_logits(pv, pv, 1e-12);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(same[k], pv[k], 1e-15);
  EXPECT_EQ(align_logits(Vector{0.0, 1.0}, Vector{2.0, 6.0}, 1e-12), (Vector{2.0, 6.0}));
  EXPECT_EQ(align_logits(Vector{3.0, 3.0, 3.0}, Vector{0.0, 1.0, 2.0}, 1e-12), (Vector{1.0, 1.0, 1.0}));
}

TEST(Align, RangeIdentityProperty) {
  Rng rng(12);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t c = 2 + rng.index(12);
    const Vector pt = random_logits(c, rng, 20.0);
    const Vector pv = random_logits(c, rng);
    const Vector a = align_logits(pt, pv, 1e-12);
    EXPECT_NEAR(*std::max_element(a.begin(), a.end()), *std::max_element(pv.begin(), pv.end()), 1e-9);
    EXPECT_NEAR(*std::min_element(a.begin(), a.end()), *std::min_element(pv.begin(), pv.end()), 1e-9);
    // Order preserving: argmax of p̂^t is argmax of p^t.
    EXPECT_EQ(std::max_element(a.begin(), a.end()) - a.begin(), std::max_element(pt.begin(), pt.end()) - pt.begin());
  }
}

TEST(Fuse, Examples) {
  const Vector pv{1.0, 0.0}, pt{0.0, 1.0};
  EXPECT_EQ(fuse(pv, pt, 1.0), pv);
  EXPECT_EQ(fuse(pv, pt, 0.0), pt);
  const Vector mid = fuse(pv, pt, 0.7);
  EXPECT_NEAR(mid[0], 0.7, 1e-15);
  EXPECT_NEAR(mid[1], 0.3, 1e-15);
  EXPECT_THROW(fuse(pv, Vector{1.0}, 0.5), DimensionError);
}

TEST(Fuse, AffineInEta) {
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const Vector pv = random_logits(5, rng), pt = random_logits(5, rng);
    const double eta = rng.uniform();
    const Vector p = fuse(pv, pt, eta);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(p[k], eta * pv[k] + (1 - eta) * pt[k], 1e-14);
  }
}

TEST(PseudoLabel, Examples) {
  const PseudoLabel peaked = pseudo_label(Vector{10.0, 0.0, 0.0});
  EXPECT_EQ(peaked.label, 0u);
  EXPECT_NEAR(peaked.confidence, 0.9999092083843409, 1e-15);
  const PseudoLabel flat = pseudo_label(Vector{2.0, 2.0, 2.0, 2.0});
  EXPECT_EQ(flat.label, 0u);
  EXPECT_DOUBLE_EQ(flat.confidence, 0.25);
  EXPECT_EQ(pseudo_label(Vector{0.0, 5.0, 5.0}).label, 1u);
}

TEST(PseudoLabel, ArgmaxInvariantToShiftAndScale) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const Vector l = random_logits(6, rng);
    const auto base = pseudo_label(l).label;
    Vector shifted = l, scaled = l;
    const double c = 10.0 * rng.normal(), s = 0.1 + 5.0 * rng.uniform();
    for (double& v : shifted) v += c;
    for (double& v : scaled) v *= s;
    EXPECT_EQ(pseudo_label(shifted).label, base);
    EXPECT_EQ(pseudo_label(scaled).label, base);
  }
}

TEST(AdjustedCe, HandExample) {
  const LogitLoss l = adjusted_ce_labeled(Vector{0.0, 0.0}, 1, Vector{0.9, 0.1}, 1.0);
  EXPECT_NEAR(l.loss, std::log(10.0), 1e-12);
  EXPECT_NEAR(l.loss, 2.302585, 1e-6);
  EXPECT_NEAR(l.grad[0], 0.9, 1e-12);
  EXPECT_NEAR(l.grad[1], -0.9, 1e-12);
}

TEST(AdjustedCe, DisabledAndUniformPriorEqualPlainCe) {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const Vector l = random_logits(4, rng);
    const auto y = static_cast<std::uint32_t>(rng.index(4));
    const Vector prior{0.4, 0.3, 0.2, 0.1};
    const LogitLoss off = adjusted_ce_labeled(l, y, prior, 0.0);
    const Vector probs = softmax(l);
    EXPECT_NEAR(off.loss, -std::log(probs[y]), 1e-12);
    const LogitLoss uniform = adjusted_ce_labeled(l, y, Vector(4, 0.25), 1.0);
    EXPECT_NEAR(uniform.loss, off.loss, 1e-12);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(uniform.grad[k], off.grad[k], 1e-14);
  }
}

TEST(Consistency, HandExample) {
  const std::vector<Vector> logits{{2.0, 1.0, 0.0}};
  const std::vector<std::uint32_t> targets{1};
  const BatchLogitLoss l = consistency_loss(logits, targets, {true});
  EXPECT_NEAR(l.loss, 1.4076059644443804, 1e-15);
  EXPECT_NEAR(l.grads[0][0], 0.6652409557748219, 1e-15);
  EXPECT_NEAR(l.grads[0][1], -0.7552715289452023, 1e-15);
  EXPECT_NEAR(l.grads[0][2], 0.09003057317038046, 1e-15);
}

TEST(Consistency, MaskedSamplesContributeNothing) {
  Rng rng(5);
  std::vector<Vector> logits;
  std::vector<std::uint32_t> targets;
  for (int j = 0; j < 6; ++j) {
    logits.push_back(random_logits(4, rng));
    targets.push_back(static_cast<std::uint32_t>(rng.index(4)));
  }
  const BatchLogitLoss none = consistency_loss(logits, targets, std::vector<bool>(6, false));
  EXPECT_EQ(none.loss, 0.0);
  for (const auto& g : none.grads) {
    for (double v : g) EXPECT_EQ(v, 0.0);
  }
  const std::vector<bool> mask{true, false, true, false, false, true};
  const BatchLogitLoss some = consistency_loss(logits, targets, mask);
  double expected = 0.0;
  for (int j = 0; j < 6; ++j) {
    if (mask[j]) expected += -std::log(softmax(logits[j])[targets[j]]) / 6.0;
    if (!mask[j]) {
      for (double v : some.grads[j]) EXPECT_EQ(v, 0.0);
    }
  }
  EXPECT_NEAR(some.loss, expected, 1e-12);
}

TEST(DualLogits, MaskThresholdAndSource) {
  Rng rng(8);
  ModelParams p = ModelParams::zeros(3, 4, 1);
  for (double& v : p.probe_w.data()) v = 4.0 * rng.normal();
  Matrix text(3, 4);
  for (std::size_t k = 0; k < 3; ++k) text(k, k) = 1.0;
  FusionConfig cfg;
  cfg.class_prior = Vector(3, 1.0 / 3.0);
  const Vector z = ulfine::testing::random_unit(4, rng);

  cfg.mask_threshold = 0.0;
  EXPECT_TRUE(dual_logits(z, p, text, cfg).mask_pass);
  cfg.mask_threshold = 1.01;
  EXPECT_FALSE(dual_logits(z, p, text, cfg).mask_pass);

  cfg.eta = 1.0;
  const LogitBundle b = dual_logits(z, p, text, cfg);
  EXPECT_EQ(b.fused, b.probe);
  EXPECT_EQ(b.confidence, b.probe_confidence);

  cfg.eta = 0.0;
  cfg.mask_source = MaskSource::kProbe;
  cfg.mask_threshold = 0.5 * (dual_logits(z, p, text, cfg).confidence + dual_logits(z, p, text, cfg).probe_confidence);
  const LogitBundle gated = dual_logits(z, p, text, cfg);
  EXPECT_EQ(gated.mask_pass, gated.probe_confidence > cfg.mask_threshold);
}

TEST(Inference, EtaOneEqualsProbeAndIsDeterministic) {
  Rng rng(10);
  ModelParams p = ModelParams::initialize(5, 8, 2, 1.0, 0.5, 1);
  for (double& v : p.adapter_a.data()) v = 0.2 * rng.normal();
  const Matrix text = synthetic_text_prototypes(5, 8, 2).rows;
  FusionConfig cfg;
  cfg.class_prior = Vector(5, 0.2);
  cfg.eta = 1.0;
  for (int i = 0; i < 50; ++i) {
    const Vector x = ulfine::testing::random_unit(8, rng);
    EXPECT_EQ(inference_logits(x, p, text, cfg), probe_logits(p, forward_features(p, x)));
  }
  cfg.eta = 0.7;
  const Vector x = ulfine::testing::random_unit(8, rng);
  EXPECT_EQ(inference_logits(x, p, text, cfg), inference_logits(x, p, text, cfg));
}

TEST(FusionConfig, Validation) {
  FusionConfig cfg;
  cfg.class_prior = {0.5, 0.5};
  EXPECT_NO_THROW(cfg.validate(2));
  EXPECT_THROW(cfg.validate(3), ConfigError);
  cfg.eta = 1.5;
  EXPECT_THROW(cfg.validate(2), ConfigError);
  EXPECT_THROW(parse_mask_source("both"), ConfigError);
}
