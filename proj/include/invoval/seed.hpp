#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace invoval {

/// 64-bit FNV-1a; stable across platforms and runs.
constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent random stream for one (master seed, document, operation)
/// triple. The derivation is a pure function of its inputs, so streams do not
/// depend on processing order.
class SeedStream {
 public:
  explicit SeedStream(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  static SeedStream derive(std::uint64_t master, std::string_view document_id, std::uint64_t op_index) {
    std::uint64_t h = splitmix64(master);
    h = splitmix64(h ^ fnv1a64(document_id));
    h = splitmix64(h ^ op_index);
    return SeedStream(h);
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(static_cast<std::int64_t>(hi) - lo + 1);
    return lo + static_cast<int>(engine_() % span);
  }

  bool bernoulli(double p) { return p >= 1.0 || (p > 0.0 && uniform() < p); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace invoval
