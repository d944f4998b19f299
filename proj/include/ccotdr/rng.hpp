#pragma once

#include <cmath>
#include <complex>
#include <cstdint>

namespace ccotdr {

// splitmix64 step.  Self-contained so streams are bit-identical across
// platforms and standard library implementations.
inline uint64_t splitmix64(uint64_t& s) {
  s += 0x9E3779B97F4A7C15ull;
  uint64_t z = s;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(uint64_t state) : state_(state) {}

  uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in (0, 1); never returns 0, safe for log().
  double next_double() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Circular complex normal with E|z|^2 = 1.
  std::complex<double> next_cgaussian() {
    constexpr double s = 0.70710678118654752440;
    double re = next_gaussian();
    double im = next_gaussian();
    return {s * re, s * im};
  }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Stream tags for substream derivation.  Values are arbitrary but fixed;
// changing them changes every derived sequence.
enum : uint64_t {
  kStreamRayleigh = 0x21,
  kStreamLaser = 0x35,
  kStreamAwgn = 0x4B,
  kStreamAirflow = 0x5D,
  kStreamJones = 0x6F,
};

// Independent generator for (seed, stream, index).  Per-shot substreams make
// results independent of scheduling and thread count.
inline Rng derive_rng(uint64_t seed, uint64_t stream, uint64_t index = 0) {
  uint64_t s = seed;
  uint64_t a = splitmix64(s);
  s = a ^ ((stream + 1) * 0x9E3779B97F4A7C15ull);
  uint64_t b = splitmix64(s);
  s = b ^ (index * 0xD1B54A32D192ED03ull + 0xABCC5167CCAD025Full);
  splitmix64(s);
  return Rng(s);
}

}  // namespace ccotdr
