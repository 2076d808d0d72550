#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace ulfine {

/// Seeded generator with platform-independent derived distributions.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. The standard distributions are implementation-defined, so
/// uniform/normal/index draws are derived here by hand:
///   uniform()  = top 53 bits of one engine word, scaled to [0, 1)
///   normal()   = Box-Muller; consumes two uniforms per pair, caches the sine half
///   index(n)   = rejection sampling on one engine word per attempt
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal();

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t index(std::uint64_t n);

  std::uint64_t next_u64() { return engine_(); }

  /// Textual engine state plus the cached Box-Muller half.
  std::string serialize() const;
  static Rng deserialize(const std::string& state);

  bool operator==(const Rng&) const = default;

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Derives an independent stream seed from (base, stream) with splitmix64.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace ulfine
