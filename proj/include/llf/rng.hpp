#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "llf/errors.hpp"

namespace llf {

namespace detail {

// SplitMix64 step; used only to expand (master_seed, stream_id) into a
// well-mixed engine seed so that nearby stream ids give unrelated streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Deterministic random stream.  Every consumer of randomness (a tree, a
// half-sample draw, a simulation repeat) owns its own SeededRng derived
// from (master_seed, stream_id), so results are reproducible regardless
// of thread count or scheduling.
class SeededRng {
 public:
  SeededRng(std::uint64_t master_seed, std::uint64_t stream_id) {
    std::uint64_t s = master_seed;
    std::uint64_t a = detail::splitmix64(s);
    s ^= stream_id * 0xD1B54A32D192ED03ULL + 0x9E3779B97F4A7C15ULL;
    std::uint64_t b = detail::splitmix64(s);
    engine_.seed(a ^ (b + 0x632BE59BD9B4E019ULL));
  }

  std::mt19937_64& engine() { return engine_; }

  // Uniform on [0, 1) with 53 random bits; never returns 1.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer on [0, n).
  int uniform_int(int n) {
    return static_cast<int>(std::uniform_int_distribution<std::uint64_t>(
        0, static_cast<std::uint64_t>(n) - 1)(engine_));
  }

  double normal(double mean = 0.0, double sd = 1.0) {
    return std::normal_distribution<double>(mean, sd)(engine_);
  }

  // k distinct values from {0, ..., n-1}, in draw order (not sorted).
  std::vector<int> sample_without_replacement(int n, int k) {
    if (k < 0 || k > n) throw SizeError("sample size out of range");
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    for (int i = 0; i < k; ++i) {
      int j = i + uniform_int(n - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Stream-id layout.  Trees use their tree index directly; other consumers
// get disjoint high ranges so adding trees never shifts anyone's stream.
inline constexpr std::uint64_t kStreamGroupBase = 0x4000000000000000ULL;
inline constexpr std::uint64_t kStreamTuningBase = 0x5000000000000000ULL;
inline constexpr std::uint64_t kStreamSimBase = 0x6000000000000000ULL;
inline constexpr std::uint64_t kStreamBenchBase = 0x7000000000000000ULL;

}  // namespace llf
