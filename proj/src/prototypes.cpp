#include "ulfine/prototypes.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ulfine/data.hpp"
#include "ulfine/error.hpp"

namespace ulfine {

namespace {

constexpr double kDegenerateNorm = 1e-12;

}  // namespace

PseudoDistribution PseudoDistribution::uniform(std::size_t classes) {
  return PseudoDistribution{Vector(classes, 1.0 / static_cast<double>(classes))};
}

void PAFConfig::validate() const {
  if (mu < 0.0 || mu > 1.0) throw ConfigError("paf.mu must lie in [0,1]");
  if (visual_momentum < 0.0 || visual_momentum >= 1.0) throw ConfigError("paf.visual_momentum must lie in [0,1)");
  if (dist_momentum < 0.0 || dist_momentum >= 1.0) throw ConfigError("paf.dist_momentum must lie in [0,1)");
  if (orthogonal_weight < 0.0) throw ConfigError("paf.orthogonal_weight must be non-negative");
}

PrototypeState PrototypeState::from_text(TextPrototypes text) {
  PrototypeState s;
  const std::size_t classes = text.rows.rows();
  s.visual.rows = text.rows;
  s.visual.seen.assign(classes, false);
  s.dist = PseudoDistribution::uniform(classes);
  s.text = std::move(text);
  return s;
}

TextPrototypes synthetic_text_prototypes(std::size_t classes, std::size_t dim, std::uint64_t seed) {
  if (dim < classes) throw DimensionError("synthetic text prototypes need D >= C for orthonormal rows");
  return TextPrototypes{synthetic_class_means(classes, dim, seed), PrototypeSource::kSynthetic};
}

TextPrototypes load_text_prototypes(const std::filesystem::path& path, std::size_t classes, std::size_t dim) {
  const EmbeddingSet set = load_embeddings(path);
  if (set.rows() != classes || set.dim() != dim) {
    throw DimensionError(path.string() + ": text prototypes are " + std::to_string(set.rows()) + "x" +
                         std::to_string(set.dim()) + ", embeddings need " + std::to_string(classes) + "x" +
                         std::to_string(dim));
  }
  if (!set.has_labels()) throw FormatError(path.string() + ": text prototype file must carry labels");
  TextPrototypes tp{Matrix(classes, dim), PrototypeSource::kFile};
  for (std::size_t k = 0; k < classes; ++k) {
    if (set.label(k) != k) throw FormatError(path.string() + ": row " + std::to_string(k) + " is not labeled " + std::to_string(k));
    const auto src = set.row(k);
    auto dst = tp.rows.row(k);
    std::copy(src.begin(), src.end(), dst.begin());
    if (normalize_inplace(dst) == 0.0) throw NumericError(path.string() + ": zero text prototype row " + std::to_string(k));
  }
  return tp;
}

void save_text_prototypes(const TextPrototypes& tp, const std::filesystem::path& path) {
  const std::size_t classes = tp.rows.rows();
  std::vector<float> feats;
  feats.reserve(tp.rows.size());
  for (double v : tp.rows.data()) feats.push_back(static_cast<float>(v));
  std::vector<std::uint32_t> labels(classes);
  for (std::size_t k = 0; k < classes; ++k) labels[k] = static_cast<std::uint32_t>(k);
  save_embeddings(EmbeddingSet(std::move(feats), tp.rows.cols(), std::move(labels), static_cast<std::uint32_t>(classes)),
                  path);
}

BatchMeans batch_class_means(std::span<const Vector> features, std::span<const std::uint32_t> labels,
                             std::size_t classes) {
  const std::size_t dim = features.empty() ? 0 : features.front().size();
  BatchMeans out{Matrix(classes, dim), std::vector<bool>(classes, false), std::vector<std::size_t>(classes, 0),
                 Vector(classes, 0.0)};
  for (std::size_t i = 0; i < features.size(); ++i) {
    const std::uint32_t y = labels[i];
    if (y >= classes) throw DimensionError("batch_class_means: label out of range");
    auto row = out.means.row(y);
    for (std::size_t d = 0; d < dim; ++d) row[d] += features[i][d];
    ++out.counts[y];
  }
  for (std::size_t k = 0; k < classes; ++k) {
    if (out.counts[k] == 0) continue;
    auto row = out.means.row(k);
    for (double& v : row) v /= static_cast<double>(out.counts[k]);
    const double n = norm(row);
    out.sum_norms[k] = n;
    if (n <= kDegenerateNorm) {
      std::fill(row.begin(), row.end(), 0.0);
      continue;
    }
    for (double& v : row) v /= n;
    out.present[k] = true;
  }
  return out;
}

void update_visual(VisualPrototypes& vp, const BatchMeans& means, double momentum) {
  for (std::size_t k = 0; k < vp.rows.rows(); ++k) {
    if (!means.present[k]) continue;
    auto row = vp.rows.row(k);
    const auto m = means.means.row(k);
    Vector next(row.size());
    for (std::size_t d = 0; d < row.size(); ++d) next[d] = momentum * row[d] + (1.0 - momentum) * m[d];
    if (normalize_inplace(next) <= kDegenerateNorm) continue;
    std::copy(next.begin(), next.end(), row.begin());
    vp.seen[k] = true;
  }
}

void update_pseudo_distribution(PseudoDistribution& pd, std::span<const Vector> probs, double momentum) {
  if (probs.empty()) return;
  const std::size_t classes = pd.probs.size();
  Vector mean(classes, 0.0);
  for (const auto& row : probs) {
    for (std::size_t k = 0; k < classes; ++k) mean[k] += row[k];
  }
  double total = 0.0;
  for (std::size_t k = 0; k < classes; ++k) {
    pd.probs[k] = momentum * pd.probs[k] + (1.0 - momentum) * mean[k] / static_cast<double>(probs.size());
    total += pd.probs[k];
  }
  if (total > 0.0) {
    for (double& v : pd.probs) v /= total;
  }
}

Vector alpha_coefficients(std::span<const double> dist, double mu) {
  const double peak = *std::max_element(dist.begin(), dist.end());
  if (!(peak > 0.0)) throw NumericError("alpha_coefficients: pseudo-label distribution is all zero");
  Vector alpha(dist.size());
  for (std::size_t k = 0; k < dist.size(); ++k) alpha[k] = dist[k] == peak ? mu : mu * (dist[k] / peak);
  return alpha;
}

std::size_t paf_update_text(TextPrototypes& tp, const VisualPrototypes& vp, std::span<const double> alpha) {
  std::size_t degenerate = 0;
  for (std::size_t k = 0; k < tp.rows.rows(); ++k) {
    const double a = alpha[k];
    if (a == 0.0) continue;
    auto row = tp.rows.row(k);
    const auto v = vp.rows.row(k);
    if (a == 1.0) {
      std::copy(v.begin(), v.end(), row.begin());
      continue;
    }
    Vector next(row.size());
    for (std::size_t d = 0; d < row.size(); ++d) next[d] = (1.0 - a) * row[d] + a * v[d];
    if (normalize_inplace(next) <= kDegenerateNorm) {
      ++degenerate;
      continue;
    }
    std::copy(next.begin(), next.end(), row.begin());
  }
  return degenerate;
}

OrthogonalLoss orthogonal_loss(const Matrix& rows) {
  const std::size_t k = rows.rows();
  OrthogonalLoss out{0.0, Matrix(k, rows.cols())};
  if (k == 0) return out;
  const double inv = 1.0 / static_cast<double>(k * k);
  // L = (1/K²) Σ_ij (S_ij − δ_ij)²,  ∂L/∂m_a = (4/K²) Σ_j (S_aj − δ_aj)·m_j
  Matrix resid(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double r = dot(rows.row(i), rows.row(j)) - (i == j ? 1.0 : 0.0);
      resid(i, j) = r;
      out.value += r * r;
    }
  }
  out.value *= inv;
  for (std::size_t a = 0; a < k; ++a) {
    auto g = out.grad.row(a);
    for (std::size_t j = 0; j < k; ++j) {
      const double coeff = 4.0 * inv * resid(a, j);
      const auto mj = rows.row(j);
      for (std::size_t d = 0; d < g.size(); ++d) g[d] += coeff * mj[d];
    }
  }
  return out;
}

}  // namespace ulfine
