#ifndef TRITSMC_RNG_HPP
#define TRITSMC_RNG_HPP

#include <cstdint>
#include <initializer_list>
#include <span>

namespace tritsmc {

/// Counter-based random stream.
///
/// A stream is identified by a 64-bit key derived from a seed and an ordered
/// list of stream ids (for example iteration, particle, step). The n-th draw
/// of a stream is `mix64(key + (n + 1) * golden)`, i.e. SplitMix64 evaluated
/// at an arbitrary position. Draws therefore depend only on (key, n), which
/// makes per-particle substreams independent of scheduling and identical
/// across platforms. Uniform doubles use the top 53 bits.
class CounterRng {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  explicit CounterRng(std::uint64_t seed) : key_(mix64(seed ^ 0x6A09E667F3BCC909ULL)) {}
  CounterRng(std::uint64_t seed, std::initializer_list<std::uint64_t> ids)
      : CounterRng(seed) {
    for (auto id : ids) key_ = derive(key_, id);
  }

  /// Child stream; does not advance this one.
  [[nodiscard]] CounterRng split(std::uint64_t id) const { return CounterRng(derive(key_, id), Raw{}); }
  [[nodiscard]] CounterRng split(std::initializer_list<std::uint64_t> ids) const {
    CounterRng out = *this;
    out.counter_ = 0;
    for (auto id : ids) out.key_ = derive(out.key_, id);
    return out;
  }

  std::uint64_t next_u64() {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
  }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1); safe for log().
  double uniform_open() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  [[nodiscard]] std::uint64_t key() const { return key_; }
  [[nodiscard]] std::uint64_t counter() const { return counter_; }

  static constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  struct Raw {};
  CounterRng(std::uint64_t key, Raw) : key_(key) {}

  static constexpr std::uint64_t derive(std::uint64_t key, std::uint64_t id) {
    return mix64(key ^ mix64(id + kGolden));
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Inverse-CDF draw from normalized probabilities by linear scan. Zero-mass
/// entries are never returned.
inline std::size_t sample_categorical(std::span<const double> probs, double u) {
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_positive = i;
    acc += probs[i];
    if (u < acc) return i;
  }
  return last_positive;
}

}  // namespace tritsmc

#endif  // TRITSMC_RNG_HPP
