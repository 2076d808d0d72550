#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ulfine/linalg.hpp"
#include "ulfine/rng.hpp"

namespace ulfine {

/// N×D feature matrix (float32, row-major) with optional class labels.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;
  EmbeddingSet(std::size_t rows, std::size_t dim, std::uint32_t class_count);
  EmbeddingSet(std::vector<float> features, std::size_t dim, std::optional<std::vector<std::uint32_t>> labels,
               std::uint32_t class_count);

  std::size_t rows() const { return dim_ == 0 ? 0 : features_.size() / dim_; }
  std::size_t dim() const { return dim_; }
  std::uint32_t class_count() const { return class_count_; }
  bool has_labels() const { return labels_.has_value(); }

  std::span<const float> row(std::size_t i) const { return {features_.data() + i * dim_, dim_}; }
  std::span<float> row(std::size_t i) { return {features_.data() + i * dim_, dim_}; }
  Vector row_as_double(std::size_t i) const;

  std::uint32_t label(std::size_t i) const { return (*labels_)[i]; }
  const std::vector<std::uint32_t>& labels() const { return *labels_; }
  void set_labels(std::vector<std::uint32_t> labels);
  void drop_labels() { labels_.reset(); }

  const std::vector<float>& features() const { return features_; }

  /// Scales each nonzero row to unit ℓ2 norm.
  void normalize();

  /// Throws FormatError if D < 2, N < 1, or a label is out of range.
  void validate() const;

  bool operator==(const EmbeddingSet&) const = default;

 private:
  std::vector<float> features_;
  std::size_t dim_ = 0;
  std::optional<std::vector<std::uint32_t>> labels_;
  std::uint32_t class_count_ = 0;
};

/// Rows of `set` selected by `indices`, labels carried along.
EmbeddingSet subset(const EmbeddingSet& set, std::span<const std::size_t> indices);

/// Per-class counts on the exponential profile head·gamma^(−c/(C−1)),
/// truncated toward zero. Throws std::invalid_argument for gamma < 1, C < 2,
/// head < 1, or when any class would receive zero samples.
std::vector<std::size_t> class_counts(std::size_t head, double gamma, std::size_t class_count);

enum class UnlabeledMode { kConsistent, kUniform, kReversed };

UnlabeledMode parse_unlabeled_mode(const std::string& name);
std::string to_string(UnlabeledMode mode);

struct LongTailSpec {
  std::size_t class_count = 10;
  std::size_t head_labeled = 100;
  double labeled_imbalance = 50.0;
  std::size_t head_unlabeled = 800;
  double unlabeled_imbalance = 50.0;
  UnlabeledMode unlabeled_mode = UnlabeledMode::kConsistent;

  std::vector<std::size_t> labeled_counts() const;
  /// Reversed mode accepts γ_u either as a ratio below one (1/50) or above
  /// one (50); both produce the same ascending profile peaking at M1.
  std::vector<std::size_t> unlabeled_counts() const;
};

struct SplitIndices {
  std::vector<std::size_t> labeled;
  std::vector<std::size_t> unlabeled;
};

/// Draws per-class labeled and unlabeled subsets without overlap. Classes
/// are processed in ascending order; within a class the source indices are
/// Fisher-Yates shuffled and the first N_c go to the labeled side, the next
/// M_c to the unlabeled side.
SplitIndices build_split(const EmbeddingSet& set, const LongTailSpec& spec, std::uint64_t seed);

/// C unit rows. D ≥ C: Gram-Schmidt on Gaussian draws (orthonormal).
/// D < C: best of 64 random unit sets by smallest maximum |cos|.
Matrix synthetic_class_means(std::size_t class_count, std::size_t dim, std::uint64_t seed);

/// normalize(separation·mean_c + N(0, noise²)) for `per_class[c]` samples of
/// each class, classes in order.
EmbeddingSet sample_embeddings(const Matrix& means, std::span<const std::size_t> per_class, double separation,
                               double noise_sigma, std::uint64_t seed);

EmbeddingSet synth_embeddings(std::size_t class_count, std::size_t dim, std::span<const std::size_t> per_class,
                              double separation, double noise_sigma, std::uint64_t seed);

struct AugmentationConfig {
  double weak_sigma = 0.05;
  double strong_sigma = 0.15;
  double strong_dropout = 0.2;
  bool renormalize = true;

  void validate() const;
};

enum class AugmentKind { kWeak, kStrong };

/// Embedding-space augmentation. Draw order per call: D Gaussian draws
/// (coordinate order), then for strong, D Bernoulli draws (coordinate order).
Vector augment(std::span<const double> features, AugmentKind kind, const AugmentationConfig& cfg, Rng& rng);

/// (M1·NC − N1·MC) / ((NC + MC)·NC)
double imbalance_increase(double n1, double nc, double m1, double mc);

void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path);
EmbeddingSet load_embeddings(const std::filesystem::path& path);

/// CSV with header `label,f0,...,f{D-1}`; the label column is empty for unlabeled rows.
void save_embeddings_csv(const EmbeddingSet& set, const std::filesystem::path& path);
EmbeddingSet load_embeddings_csv(const std::filesystem::path& path, std::uint32_t class_count);

}  // namespace ulfine
