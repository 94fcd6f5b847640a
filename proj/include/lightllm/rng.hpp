#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace lightllm {

// Named stream ids. One root seed fans out into these so that, e.g., every
// ablation run sees the same generated data while weights differ per purpose.
namespace streams {
inline constexpr std::uint64_t kWeights = 1;
inline constexpr std::uint64_t kBackbone = 2;
inline constexpr std::uint64_t kLora = 3;
inline constexpr std::uint64_t kDropout = 4;
inline constexpr std::uint64_t kData = 5;
inline constexpr std::uint64_t kShuffle = 6;
inline constexpr std::uint64_t kSplit = 7;
inline constexpr std::uint64_t kTestData = 8;
inline constexpr std::uint64_t kBaseline = 9;
}  // namespace streams

// Deterministic generator keyed by (seed, stream). The engine is
// std::mt19937_64, whose output sequence is fixed by the standard; the value
// transforms below are written out so they do not depend on the library's
// distribution implementations.
class SeededRng {
 public:
  SeededRng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform() < p; }

  // Child generator for a sub-purpose (sample index, layer, ...). Independent
  // of how many values this generator has already produced.
  SeededRng derive(std::uint64_t index) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

// 64-bit FNV-1a over raw bytes; used for checksums and vocabulary hashing.
std::uint64_t fnv1a(const void* data, std::size_t size,
                    std::uint64_t basis = 0xcbf29ce484222325ULL);
inline std::uint64_t fnv1a(std::string_view text) { return fnv1a(text.data(), text.size()); }

}  // namespace lightllm
