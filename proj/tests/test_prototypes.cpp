#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "ulfine/data.hpp"
#include "ulfine/error.hpp"
#include "ulfine/prototypes.hpp"

using namespace ulfine;

namespace {

Matrix rows_of(std::initializer_list<Vector> rows) {
  Matrix m(rows.size(), rows.begin()->size());
  std::size_t r = 0;
  for (const auto& v : rows) std::copy(v.begin(), v.end(), m.row(r++).begin());
  return m;
}

}  // namespace

TEST(TextPrototypes, SyntheticRowsAreOrthonormal) {
  const TextPrototypes tp = synthetic_text_prototypes(10, 32, 3);
  for (std::size_t a = 0; a < 10; ++a) {
    EXPECT_NEAR(norm(tp.rows.row(a)), 1.0, 1e-12);
    for (std::size_t b = a + 1; b < 10; ++b) EXPECT_LT(std::abs(dot(tp.rows.row(a), tp.rows.row(b))), 1e-6);
  }
  EXPECT_THROW(synthetic_text_prototypes(10, 4, 3), DimensionError);
}

TEST(TextPrototypes, FileRoundTripAndLabelCheck) {
  const auto path = std::filesystem::temp_directory_path() / "ulfine_text_protos.ulfe";
  TextPrototypes tp{rows_of({{1.0, 0.0, 0.0}, {0.0, 0.6, 0.8}}), PrototypeSource::kFile};
  save_text_prototypes(tp, path);
  const TextPrototypes loaded = load_text_prototypes(path, 2, 3);
  EXPECT_EQ(loaded.source, PrototypeSource::kFile);
  for (std::size_t i = 0; i < tp.rows.size(); ++i) EXPECT_NEAR(loaded.rows.data()[i], tp.rows.data()[i], 1e-7);
  EXPECT_THROW(load_text_prototypes(path, 3, 3), DimensionError);

  const EmbeddingSet swapped(std::vector<float>{1, 0, 0, 0, 1, 0}, 3, std::vector<std::uint32_t>{1, 0}, 2);
  save_embeddings(swapped, path);
  EXPECT_THROW(load_text_prototypes(path, 2, 3), FormatError);
}

TEST(BatchMeans, OneSamplePerClassAndAbsentClass) {
  const std::vector<Vector> z{{3.0, 4.0}, {0.0, 2.0}};
  const std::vector<std::uint32_t> y{0, 2};
  const BatchMeans bm = batch_class_means(z, y, 3);
  EXPECT_TRUE(bm.present[0]);
  EXPECT_FALSE(bm.present[1]);
  EXPECT_TRUE(bm.present[2]);
  EXPECT_DOUBLE_EQ(bm.means(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(bm.means(0, 1), 0.8);
  EXPECT_DOUBLE_EQ(bm.means(2, 1), 1.0);
  EXPECT_EQ(bm.means(1, 0), 0.0);
  EXPECT_EQ(bm.counts[0], 1u);
}

TEST(BatchMeans, AntipodalClassIsNotPresent) {
  const std::vector<Vector> z{{0.6, 0.8}, {-0.6, -0.8}, {1.0, 0.0}};
  const std::vector<std::uint32_t> y{0, 0, 1};
  const BatchMeans bm = batch_class_means(z, y, 2);
  EXPECT_FALSE(bm.present[0]);
  EXPECT_TRUE(bm.present[1]);
  EXPECT_EQ(bm.counts[0], 2u);
}

TEST(UpdateVisual, MomentumEndpointsAndHandCase) {
  BatchMeans bm;
  bm.means = rows_of({{0.0, 0.6, 0.8}, {0.0, 0.0, 0.0}});
  bm.present = {true, false};

  VisualPrototypes vp{rows_of({{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}}), {false, false}};
  VisualPrototypes copy = vp;
  update_visual(copy, bm, 0.0);
  EXPECT_EQ(std::vector<double>(copy.rows.row(0).begin(), copy.rows.row(0).end()), (Vector{0.0, 0.6, 0.8}));
  EXPECT_TRUE(copy.seen[0]);
  EXPECT_FALSE(copy.seen[1]);
  EXPECT_EQ(std::vector<double>(copy.rows.row(1).begin(), copy.rows.row(1).end()), (Vector{0.0, 1.0, 0.0}));

  update_visual(vp, bm, 0.9);
  EXPECT_NEAR(vp.rows(0, 0), 0.9938837346736189, 1e-15);
  EXPECT_NEAR(vp.rows(0, 1), 0.06625891564490792, 1e-15);
  EXPECT_NEAR(vp.rows(0, 2), 0.08834522085987724, 1e-15);
}

TEST(UpdatePseudoDistribution, Examples) {
  PseudoDistribution pd = PseudoDistribution::uniform(3);
  const std::vector<Vector> batch1{{0.7, 0.2, 0.1}, {0.5, 0.3, 0.2}};
  const std::vector<Vector> batch2{{0.1, 0.1, 0.8}};

  PseudoDistribution frozen = pd;
  update_pseudo_distribution(frozen, batch1, 1.0);
  EXPECT_EQ(frozen, pd);
  update_pseudo_distribution(frozen, {}, 0.0);
  EXPECT_EQ(frozen, pd);

  PseudoDistribution instant = pd;
  const std::vector<Vector> uniform_rows(4, Vector(3, 1.0 / 3.0));
  update_pseudo_distribution(instant, uniform_rows, 0.0);
  for (double v : instant.probs) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);

  update_pseudo_distribution(pd, batch1, 0.5);
  EXPECT_NEAR(pd.probs[0], 0.4666666666666667, 1e-15);
  EXPECT_NEAR(pd.probs[1], 0.29166666666666663, 1e-15);
  EXPECT_NEAR(pd.probs[2], 0.24166666666666667, 1e-15);
  update_pseudo_distribution(pd, batch2, 0.5);
  EXPECT_NEAR(pd.probs[0], 0.2833333333333333, 1e-15);
  EXPECT_NEAR(pd.probs[1], 0.1958333333333333, 1e-15);
  EXPECT_NEAR(pd.probs[2], 0.5208333333333334, 1e-15);
}

TEST(Alpha, Examples) {
  for (double v : alpha_coefficients(Vector(5, 0.2), 0.9)) EXPECT_EQ(v, 0.9);
  for (double v : alpha_coefficients(Vector{0.5, 0.3, 0.2}, 0.0)) EXPECT_EQ(v, 0.0);
  const Vector a = alpha_coefficients(Vector{0.5, 0.3, 0.2}, 0.9);
  EXPECT_NEAR(a[0], 0.9, 1e-15);
  EXPECT_NEAR(a[1], 0.54, 1e-15);
  EXPECT_NEAR(a[2], 0.36, 1e-15);
  EXPECT_THROW(alpha_coefficients(Vector(3, 0.0), 0.9), NumericError);
}

TEST(PafUpdateText, Examples) {
  const VisualPrototypes vp{rows_of({{0.0, 1.0}, {0.6, 0.8}}), {true, true}};
  TextPrototypes tp{rows_of({{1.0, 0.0}, {1.0, 0.0}}), PrototypeSource::kSynthetic};

  TextPrototypes same = tp;
  EXPECT_EQ(paf_update_text(same, vp, Vector{0.0, 0.0}), 0u);
  EXPECT_EQ(same, tp);

  TextPrototypes copied = tp;
  paf_update_text(copied, vp, Vector{1.0, 1.0});
  EXPECT_EQ(copied.rows, vp.rows);

  paf_update_text(tp, vp, Vector{0.5, 0.0});
  EXPECT_NEAR(tp.rows(0, 0), std::sqrt(2.0) / 2.0, 1e-15);
  EXPECT_NEAR(tp.rows(0, 1), std::sqrt(2.0) / 2.0, 1e-15);
}

TEST(PafUpdateText, AntipodalKeepsPreviousRow) {
  const VisualPrototypes vp{rows_of({{-1.0, 0.0}}), {true}};
  TextPrototypes tp{rows_of({{1.0, 0.0}}), PrototypeSource::kSynthetic};
  const TextPrototypes before = tp;
  EXPECT_EQ(paf_update_text(tp, vp, Vector{0.5}), 1u);
  EXPECT_EQ(tp, before);
}

TEST(PafUpdateText, MovesTowardVisualMonotonically) {
  Rng rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector t = ulfine::testing::random_unit(6, rng);
    const Vector v = ulfine::testing::random_unit(6, rng);
    TextPrototypes tp{Matrix(1, 6), PrototypeSource::kSynthetic};
    std::copy(t.begin(), t.end(), tp.rows.row(0).begin());
    VisualPrototypes vp{Matrix(1, 6), {true}};
    std::copy(v.begin(), v.end(), vp.rows.row(0).begin());
    double prev = dot(tp.rows.row(0), v);
    for (int step = 0; step < 20; ++step) {
      paf_update_text(tp, vp, Vector{0.3});
      const double now = dot(tp.rows.row(0), v);
      EXPECT_GE(now, prev - 1e-12);
      prev = now;
    }
  }
}

TEST(OrthogonalLoss, Fixtures) {
  const OrthogonalLoss ortho = orthogonal_loss(rows_of({{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}));
  EXPECT_LE(std::abs(ortho.value), 1e-12);
  for (double g : ortho.grad.data()) EXPECT_EQ(g, 0.0);
  EXPECT_DOUBLE_EQ(orthogonal_loss(rows_of({{0.6, 0.8}, {0.6, 0.8}})).value, 0.5);
}

TEST(OrthogonalLoss, GradientMatchesFiniteDifference) {
  Rng rng(31);
  Matrix rows(5, 8);
  for (double& v : rows.data()) v = rng.normal();
  const OrthogonalLoss lo = orthogonal_loss(rows);
  const double eps = 1e-5;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Matrix up = rows, down = rows;
    up.data()[i] += eps;
    down.data()[i] -= eps;
    const double numeric = (orthogonal_loss(up).value - orthogonal_loss(down).value) / (2.0 * eps);
    EXPECT_LT(ulfine::testing::relative_error(lo.grad.data()[i], numeric), 1e-6) << i;
  }
}

TEST(OrthogonalLoss, DescentDecorrelatesRows) {
  const auto r = ulfine::testing::orthogonal_descent(10, 32, 7, 2000, 1.0, 0.1);
  EXPECT_TRUE(r.reached) << "final mean |cos| " << r.final_cos;
  EXPECT_LT(r.final_cos, r.initial_cos);
}

TEST(PrototypeState, FromTextStartsAligned) {
  const PrototypeState s = PrototypeState::from_text(synthetic_text_prototypes(3, 4, 1));
  EXPECT_EQ(s.visual.rows, s.text.rows);
  EXPECT_EQ(s.dist, PseudoDistribution::uniform(3));
  EXPECT_EQ(s.visual.seen, std::vector<bool>(3, false));
}
