#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace imp {

// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_name(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Seed of the stream `name` for item `index` under `master`. Streams are a
// pure function of their coordinates so results do not depend on the order
// in which episodes or candidates are executed.
constexpr std::uint64_t stream_seed(std::uint64_t master, std::string_view name,
                                    std::uint64_t index = 0) {
  return mix64(mix64(master ^ hash_name(name)) + mix64(index + 0x632be59bd9b4e019ULL));
}

// Thin wrapper over mt19937_64 with platform-independent uniform draws
// (std distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}
  Rng(std::uint64_t master, std::string_view name, std::uint64_t index = 0)
      : engine_(stream_seed(master, name, index)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    // Lemire-free simple rejection keeps the draw unbiased.
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return static_cast<std::size_t>(r % n);
  }

  bool bernoulli(double p) { return uniform() < p; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// Inverse-CDF draw from a discrete distribution given a uniform u in [0,1).
// Entries with zero mass are never selected.
inline std::size_t sample_discrete(std::span<const double> probs, double u) {
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

}  // namespace imp
