#ifndef HOMLAB_RNG_HPP
#define HOMLAB_RNG_HPP

#include <cmath>
#include <cstdint>

namespace homlab {

// Counter-based generator: every draw is a pure function of
// (seed, stream, counter, slot). Ensembles sliced across any number of
// workers reproduce bit-identically because no generator state is shared.
class CounterRng {
 public:
  CounterRng(uint64_t seed, uint64_t stream) : seed_(seed), stream_(stream) {}

  uint64_t bits(uint64_t counter, uint64_t slot) const {
    uint64_t h = seed_;
    h = mix(h ^ (stream_ * 0x9E3779B97F4A7C15ull));
    h = mix(h ^ (counter * 0xC2B2AE3D27D4EB4Full));
    h = mix(h ^ (slot * 0x165667B19E3779F9ull));
    return h;
  }

  /// Uniform in [0, 1).
  double uniform(uint64_t counter, uint64_t slot) const {
    return static_cast<double>(bits(counter, slot) >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; one draw consumes two sub-slots.
  double normal(uint64_t counter, uint64_t slot) const {
    const uint64_t u1 = bits(counter, 2 * slot);
    const uint64_t u2 = bits(counter, 2 * slot + 1);
    // (0,1] for the log argument
    const double r1 = static_cast<double>((u1 >> 11) + 1) * 0x1.0p-53;
    const double r2 = static_cast<double>(u2 >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(r1)) * std::cos(kTau * r2);
  }

  uint64_t index_below(uint64_t counter, uint64_t slot, uint64_t n) const {
    return bits(counter, slot) % n;
  }

 private:
  static constexpr double kTau = 6.283185307179586476925286766559;

  static uint64_t mix(uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  uint64_t seed_;
  uint64_t stream_;
};

// Stream-id layout shared by the simulators: one stream per (path, purpose).
namespace rng_stream {
inline constexpr uint64_t kDrivingNoise = 0;
inline constexpr uint64_t kViscosityNoise = 1;
inline constexpr uint64_t kInitialDraw = 2;
inline constexpr uint64_t kPairSubsample = 3;

inline uint64_t for_path(uint64_t path_id, uint64_t purpose) {
  return (path_id << 3) | purpose;
}
}  // namespace rng_stream

}  // namespace homlab

#endif
