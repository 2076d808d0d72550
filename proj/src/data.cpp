#include "ulfine/data.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ulfine/binary_io.hpp"
#include "ulfine/error.hpp"

namespace ulfine {

namespace {

constexpr char kEmbeddingMagic[] = "ULFE";
constexpr std::uint32_t kEmbeddingVersion = 1;

}  // namespace

EmbeddingSet::EmbeddingSet(std::size_t rows, std::size_t dim, std::uint32_t class_count)
    : features_(rows * dim, 0.0f), dim_(dim), class_count_(class_count) {}

EmbeddingSet::EmbeddingSet(std::vector<float> features, std::size_t dim,
                           std::optional<std::vector<std::uint32_t>> labels, std::uint32_t class_count)
    : features_(std::move(features)), dim_(dim), labels_(std::move(labels)), class_count_(class_count) {
  if (dim_ == 0 || features_.size() % dim_ != 0) throw DimensionError("feature buffer is not a multiple of D");
  if (labels_ && labels_->size() != rows()) throw DimensionError("label count differs from row count");
}

Vector EmbeddingSet::row_as_double(std::size_t i) const {
  const auto r = row(i);
  return Vector(r.begin(), r.end());
}

void EmbeddingSet::set_labels(std::vector<std::uint32_t> labels) {
  if (labels.size() != rows()) throw DimensionError("label count differs from row count");
  labels_ = std::move(labels);
}

void EmbeddingSet::normalize() {
  for (std::size_t i = 0; i < rows(); ++i) {
    auto r = row(i);
    double s = 0.0;
    for (float v : r) s += static_cast<double>(v) * v;
    const double n = std::sqrt(s);
    if (n > 0.0) {
      for (float& v : r) v = static_cast<float>(v / n);
    }
  }
}

void EmbeddingSet::validate() const {
  if (dim_ < 2) throw FormatError("embedding dimension must be at least 2");
  if (rows() < 1) throw FormatError("embedding set is empty");
  if (class_count_ < 1) throw FormatError("class count must be positive");
  if (labels_) {
    for (std::size_t i = 0; i < labels_->size(); ++i) {
      if ((*labels_)[i] >= class_count_) {
        throw FormatError("label " + std::to_string((*labels_)[i]) + " at row " + std::to_string(i) +
                          " is out of range for C=" + std::to_string(class_count_));
      }
    }
  }
}

EmbeddingSet subset(const EmbeddingSet& set, std::span<const std::size_t> indices) {
  std::vector<float> feats;
  feats.reserve(indices.size() * set.dim());
  std::optional<std::vector<std::uint32_t>> labels;
  if (set.has_labels()) labels.emplace().reserve(indices.size());
  for (std::size_t idx : indices) {
    const auto r = set.row(idx);
    feats.insert(feats.end(), r.begin(), r.end());
    if (labels) labels->push_back(set.label(idx));
  }
  return EmbeddingSet(std::move(feats), set.dim(), std::move(labels), set.class_count());
}

std::vector<std::size_t> class_counts(std::size_t head, double gamma, std::size_t class_count) {
  if (head < 1) throw std::invalid_argument("class_counts: head count must be at least 1");
  if (!(gamma >= 1.0)) throw std::invalid_argument("class_counts: imbalance ratio must be >= 1");
  if (class_count < 2) throw std::invalid_argument("class_counts: need at least two classes");
  std::vector<std::size_t> counts(class_count);
  for (std::size_t c = 0; c < class_count; ++c) {
    const double exact =
        static_cast<double>(head) * std::pow(gamma, -static_cast<double>(c) / static_cast<double>(class_count - 1));
    // Truncation with a small guard so exact integers such as 500/100 survive pow() rounding.
    const auto n = static_cast<std::size_t>(std::floor(exact + 1e-9));
    if (n == 0) {
      throw std::invalid_argument("class_counts: class " + std::to_string(c) + " rounds to zero samples (head=" +
                                  std::to_string(head) + ", gamma=" + std::to_string(gamma) + ")");
    }
    counts[c] = n;
  }
  return counts;
}

UnlabeledMode parse_unlabeled_mode(const std::string& name) {
  if (name == "consistent") return UnlabeledMode::kConsistent;
  if (name == "uniform") return UnlabeledMode::kUniform;
  if (name == "reversed") return UnlabeledMode::kReversed;
  throw ConfigError("unknown unlabeled mode '" + name + "' (expected consistent|uniform|reversed)");
}

std::string to_string(UnlabeledMode mode) {
  switch (mode) {
    case UnlabeledMode::kConsistent:
      return "consistent";
    case UnlabeledMode::kUniform:
      return "uniform";
    case UnlabeledMode::kReversed:
      return "reversed";
  }
  return "?";
}

std::vector<std::size_t> LongTailSpec::labeled_counts() const {
  return class_counts(head_labeled, labeled_imbalance, class_count);
}

std::vector<std::size_t> LongTailSpec::unlabeled_counts() const {
  if (!(unlabeled_imbalance > 0.0)) throw std::invalid_argument("unlabeled imbalance must be positive");
  switch (unlabeled_mode) {
    case UnlabeledMode::kConsistent:
      return class_counts(head_unlabeled, unlabeled_imbalance, class_count);
    case UnlabeledMode::kUniform:
      return std::vector<std::size_t>(class_count, head_unlabeled);
    case UnlabeledMode::kReversed: {
      const double ratio = unlabeled_imbalance < 1.0 ? 1.0 / unlabeled_imbalance : unlabeled_imbalance;
      auto counts = class_counts(head_unlabeled, ratio, class_count);
      std::reverse(counts.begin(), counts.end());
      return counts;
    }
  }
  return {};
}

SplitIndices build_split(const EmbeddingSet& set, const LongTailSpec& spec, std::uint64_t seed) {
  if (!set.has_labels()) throw FormatError("build_split: source set carries no labels");
  if (set.class_count() != spec.class_count) {
    throw DimensionError("build_split: source has C=" + std::to_string(set.class_count()) + " but spec asks for C=" +
                         std::to_string(spec.class_count));
  }
  const auto n_lab = spec.labeled_counts();
  const auto n_unl = spec.unlabeled_counts();

  std::vector<std::vector<std::size_t>> by_class(spec.class_count);
  for (std::size_t i = 0; i < set.rows(); ++i) by_class[set.label(i)].push_back(i);

  std::ostringstream shortfall;
  for (std::size_t c = 0; c < spec.class_count; ++c) {
    const std::size_t need = n_lab[c] + n_unl[c];
    if (by_class[c].size() < need) {
      shortfall << "\n  class " << c << ": need " << need << " (" << n_lab[c] << " labeled + " << n_unl[c]
                << " unlabeled), have " << by_class[c].size() << ", short " << need - by_class[c].size();
    }
  }
  if (!shortfall.str().empty()) throw SupplyError("insufficient per-class supply:" + shortfall.str());

  Rng rng(seed);
  SplitIndices split;
  for (std::size_t c = 0; c < spec.class_count; ++c) {
    auto& pool = by_class[c];
    for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.index(i)]);
    split.labeled.insert(split.labeled.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_lab[c]));
    split.unlabeled.insert(split.unlabeled.end(), pool.begin() + static_cast<std::ptrdiff_t>(n_lab[c]),
                           pool.begin() + static_cast<std::ptrdiff_t>(n_lab[c] + n_unl[c]));
  }
  return split;
}

Matrix synthetic_class_means(std::size_t class_count, std::size_t dim, std::uint64_t seed) {
  if (class_count < 1 || dim < 2) throw std::invalid_argument("synthetic_class_means: need C >= 1 and D >= 2");
  Rng rng(seed);
  Matrix means(class_count, dim);
  if (dim >= class_count) {
    for (std::size_t k = 0; k < class_count; ++k) {
      auto row = means.row(k);
      // Re-draw on the (measure-zero) chance of a dependent draw.
      for (;;) {
        for (double& v : row) v = rng.normal();
        for (int pass = 0; pass < 2; ++pass) {
          for (std::size_t j = 0; j < k; ++j) {
            const double proj = dot(row, means.row(j));
            const auto prev = means.row(j);
            for (std::size_t d = 0; d < dim; ++d) row[d] -= proj * prev[d];
          }
        }
        if (normalize_inplace(row) > 1e-8) break;
      }
    }
    return means;
  }
  double best_score = std::numeric_limits<double>::infinity();
  Matrix candidate(class_count, dim);
  for (int attempt = 0; attempt < 64; ++attempt) {
    for (std::size_t k = 0; k < class_count; ++k) {
      auto row = candidate.row(k);
      for (double& v : row) v = rng.normal();
      normalize_inplace(row);
    }
    double worst = 0.0;
    for (std::size_t a = 0; a < class_count; ++a) {
      for (std::size_t b = a + 1; b < class_count; ++b) worst = std::max(worst, std::abs(dot(candidate.row(a), candidate.row(b))));
    }
    if (worst < best_score) {
      best_score = worst;
      means = candidate;
    }
  }
  return means;
}

EmbeddingSet sample_embeddings(const Matrix& means, std::span<const std::size_t> per_class, double separation,
                               double noise_sigma, std::uint64_t seed) {
  if (per_class.size() != means.rows()) throw DimensionError("sample_embeddings: per-class count length != C");
  if (noise_sigma < 0.0) throw std::invalid_argument("sample_embeddings: noise sigma must be non-negative");
  const std::size_t dim = means.cols();
  const std::size_t total = std::accumulate(per_class.begin(), per_class.end(), std::size_t{0});
  std::vector<float> feats;
  feats.reserve(total * dim);
  std::vector<std::uint32_t> labels;
  labels.reserve(total);
  Rng rng(seed);
  Vector sample(dim);
  for (std::size_t c = 0; c < means.rows(); ++c) {
    const auto mean = means.row(c);
    for (std::size_t i = 0; i < per_class[c]; ++i) {
      for (std::size_t d = 0; d < dim; ++d) sample[d] = separation * mean[d] + noise_sigma * rng.normal();
      if (normalize_inplace(sample) == 0.0) throw NumericError("sample_embeddings: zero sample");
      for (double v : sample) feats.push_back(static_cast<float>(v));
      labels.push_back(static_cast<std::uint32_t>(c));
    }
  }
  return EmbeddingSet(std::move(feats), dim, std::move(labels), static_cast<std::uint32_t>(means.rows()));
}

EmbeddingSet synth_embeddings(std::size_t class_count, std::size_t dim, std::span<const std::size_t> per_class,
                              double separation, double noise_sigma, std::uint64_t seed) {
  const Matrix means = synthetic_class_means(class_count, dim, derive_seed(seed, 0));
  return sample_embeddings(means, per_class, separation, noise_sigma, derive_seed(seed, 1));
}

void AugmentationConfig::validate() const {
  if (weak_sigma < 0.0 || strong_sigma < weak_sigma) {
    throw ConfigError("augmentation: need strong_sigma >= weak_sigma >= 0");
  }
  if (strong_dropout < 0.0 || strong_dropout >= 1.0) throw ConfigError("augmentation: strong_dropout must be in [0,1)");
}

Vector augment(std::span<const double> features, AugmentKind kind, const AugmentationConfig& cfg, Rng& rng) {
  Vector out(features.begin(), features.end());
  const double sigma = kind == AugmentKind::kWeak ? cfg.weak_sigma : cfg.strong_sigma;
  for (double& v : out) v += sigma * rng.normal();
  if (kind == AugmentKind::kStrong) {
    for (double& v : out) {
      if (rng.bernoulli(cfg.strong_dropout)) v = 0.0;
    }
  }
  if (cfg.renormalize) normalize_inplace(out);
  return out;
}

double imbalance_increase(double n1, double nc, double m1, double mc) {
  return (m1 * nc - n1 * mc) / ((nc + mc) * nc);
}

void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  binio::write_magic(os, std::string_view(kEmbeddingMagic, 4));
  binio::write_le<std::uint32_t>(os, kEmbeddingVersion);
  binio::write_le<std::uint64_t>(os, set.rows());
  binio::write_le<std::uint64_t>(os, set.dim());
  binio::write_le<std::uint8_t>(os, set.has_labels() ? 1 : 0);
  binio::write_le<std::uint32_t>(os, set.class_count());
  for (float v : set.features()) binio::write_f32(os, v);
  if (set.has_labels()) {
    for (std::uint32_t y : set.labels()) binio::write_le<std::uint32_t>(os, y);
  }
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

EmbeddingSet load_embeddings(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  binio::Reader in(is, path.string());
  in.expect_magic(std::string_view(kEmbeddingMagic, 4));
  const auto version = in.read_le<std::uint32_t>();
  if (version != kEmbeddingVersion) throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
  const auto n = in.read_le<std::uint64_t>();
  const auto d = in.read_le<std::uint64_t>();
  const auto has_labels = in.read_le<std::uint8_t>();
  const auto c = in.read_le<std::uint32_t>();
  if (d < 2 || n < 1) throw DimensionError(path.string() + ": invalid dimensions N=" + std::to_string(n) + " D=" + std::to_string(d));
  if (has_labels > 1) throw FormatError(path.string() + ": has_labels flag must be 0 or 1");

  const auto remaining = [&] {
    const auto here = is.tellg();
    is.seekg(0, std::ios::end);
    const auto end = is.tellg();
    is.seekg(here);
    return static_cast<std::uint64_t>(end - here);
  }();
  const std::uint64_t expected = n * d * 4 + (has_labels ? n * 4 : 0);
  if (n > std::numeric_limits<std::uint64_t>::max() / (d * 4 + 4) || remaining < expected) {
    throw TruncatedError(path.string() + ": truncated file (need " + std::to_string(expected) + " payload bytes, have " +
                         std::to_string(remaining) + ")");
  }
  if (remaining > expected) throw DimensionError(path.string() + ": trailing bytes after declared N×D payload");

  std::vector<float> feats(n * d);
  for (float& v : feats) v = in.read_f32();
  std::optional<std::vector<std::uint32_t>> labels;
  if (has_labels) {
    labels.emplace(n);
    for (auto& y : *labels) y = in.read_le<std::uint32_t>();
  }
  EmbeddingSet set(std::move(feats), d, std::move(labels), c);
  set.validate();
  return set;
}

void save_embeddings_csv(const EmbeddingSet& set, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os << "label";
  for (std::size_t d = 0; d < set.dim(); ++d) os << ",f" << d;
  os << '\n';
  char buf[32];
  for (std::size_t i = 0; i < set.rows(); ++i) {
    if (set.has_labels()) os << set.label(i);
    for (float v : set.row(i)) {
      const auto res = std::to_chars(buf, buf + sizeof(buf), v);
      os << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    os << '\n';
  }
}

EmbeddingSet load_embeddings_csv(const std::filesystem::path& path, std::uint32_t class_count) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  std::string line;
  if (!std::getline(is, line) || line.rfind("label", 0) != 0) throw FormatError(path.string() + ": missing CSV header");
  const std::size_t dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  std::vector<float> feats;
  std::vector<std::uint32_t> labels;
  bool any_label = false;
  bool any_missing = false;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    std::string_view rest(line);
    for (;;) {
      const auto pos = rest.find(',');
      cells.push_back(rest.substr(0, pos));
      if (pos == std::string_view::npos) break;
      rest.remove_prefix(pos + 1);
    }
    if (cells.size() != dim + 1) throw DimensionError(path.string() + ":" + std::to_string(lineno) + ": wrong column count");
    if (cells[0].empty()) {
      any_missing = true;
      labels.push_back(0);
    } else {
      std::uint32_t y = 0;
      const auto r = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), y);
      if (r.ec != std::errc()) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad label");
      any_label = true;
      labels.push_back(y);
    }
    for (std::size_t d = 0; d < dim; ++d) {
      float v = 0.0f;
      const auto r = std::from_chars(cells[d + 1].data(), cells[d + 1].data() + cells[d + 1].size(), v);
      if (r.ec != std::errc()) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad feature value");
      feats.push_back(v);
    }
  }
  if (any_label && any_missing) throw FormatError(path.string() + ": mixed labeled and unlabeled rows");
  std::optional<std::vector<std::uint32_t>> opt_labels;
  if (any_label) opt_labels = std::move(labels);
  if (class_count == 0 && opt_labels) class_count = *std::max_element(opt_labels->begin(), opt_labels->end()) + 1;
  EmbeddingSet set(std::move(feats), dim, std::move(opt_labels), class_count);
  set.validate();
  return set;
}

}  // namespace ulfine
