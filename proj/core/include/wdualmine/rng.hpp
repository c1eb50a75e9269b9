#pragma once

#include <cstdint>

namespace wdualmine {

// SplitMix64 (Steele/Vigna). A fixed 64-bit counter-based generator so that
// parameter init, augmentation and batch sampling reproduce bit-identically
// across platforms; std::mt19937 + <random> distributions do not guarantee
// that.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) using the top 53 bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Unbiased enough for data sampling; modulo bias is irrelevant at the
  // dataset sizes involved.
  uint64_t next_below(uint64_t n) { return n ? next_u64() % n : 0; }

  uint64_t state() const { return state_; }
  void set_state(uint64_t s) { state_ = s; }

 private:
  uint64_t state_;
};

// Derives an independent stream for (seed, tag) pairs, used for stateless
// per-step randomness (resume never has to replay history).
inline uint64_t derive_stream(uint64_t seed, uint64_t tag) {
  SplitMix64 g(seed ^ (0xd1b54a32d192ed03ull * (tag + 1)));
  g.next_u64();
  return g.next_u64();
}

}  // namespace wdualmine
