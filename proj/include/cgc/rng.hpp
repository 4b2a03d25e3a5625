#pragma once

#include <cstdint>

namespace cgc {

/// Splittable counter-free PRNG built on the splitmix64 finalizer.
///
/// All randomness in the project flows through this generator so that
/// results are bit-reproducible across platforms (the standard-library
/// distributions are implementation-defined and unusable for that).
/// `fork` derives an independent child stream without advancing the
/// parent, which gives one stream per (purpose, epoch, sample, ...)
/// index path.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t state() const { return state_; }

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix(state_);
  }

  /// Uniform double in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Uniform integer in [lo, hi] inclusive. Multiply-shift, no modulo bias
  /// worth caring about at these ranges.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
    unsigned __int128 wide = static_cast<unsigned __int128>(next_u64()) * range;
    return lo + static_cast<int64_t>(wide >> 64);
  }

  bool bernoulli(double p) { return next_double() < p; }

  /// Child stream `index` of this generator; the parent state is untouched.
  Rng fork(uint64_t index) const {
    return Rng(mix(state_ ^ mix(index + 0x632BE59BD9B4E019ull)));
  }

 private:
  static uint64_t mix(uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  uint64_t state_;
};

/// Fixed stream ids for the top-level fork of an experiment seed.
namespace streams {
constexpr uint64_t kParamInit = 1;
constexpr uint64_t kDataGen = 2;
constexpr uint64_t kShuffle = 3;
constexpr uint64_t kAugment = 4;
constexpr uint64_t kSplit = 5;
constexpr uint64_t kEval = 6;
}  // namespace streams

}  // namespace cgc
