// Copyright 2026 The specadapt Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef SPECADAPT_COMMON_H_
#define SPECADAPT_COMMON_H_

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace specadapt {

// Thrown on bad configuration or contract violations in user-supplied data.
// The CLI maps this to exit code 2; message should name the offending field.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from (seed, salt). Used wherever a
// sub-computation needs its own deterministic stream (per-entry corpus
// seeds, per-utterance speakers, per-step augmentation).
inline std::uint64_t MixSeed(std::uint64_t seed, std::uint64_t salt) {
  return SplitMix64(seed ^ SplitMix64(salt + 0x632be59bd9b4e019ULL));
}

// Deterministic RNG. mt19937_64 output is pinned by the standard and the
// derived draws below avoid implementation-defined std distributions, so a
// (seed -> sample) mapping is reproducible across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t NextU64() { return eng_(); }

  // Uniform in [0, 1).
  double Uniform() {
    return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  // Uniform integer in [lo, hi] inclusive.
  int UniformInt(int lo, int hi) {
    if (hi <= lo) return lo;
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(NextU64() % span);
  }

  // Standard normal via Box-Muller (deterministic, portable).
  double Normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = Uniform();
    double u2 = Uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a over raw bytes; used to fingerprint configs and parameter sets.
inline std::uint64_t HashBytes(const void* data, std::size_t n,
                               std::uint64_t h = 0xcbf29ce484222325ULL) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t HashString(const std::string& s, std::uint64_t h0 = 0xcbf29ce484222325ULL) {
  return HashBytes(s.data(), s.size(), h0);
}

}  // namespace specadapt

#endif  // SPECADAPT_COMMON_H_
