#pragma once

#include <cstdint>
#include <random>

namespace atecr {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d49bb133111ebULL;
  return z ^ (z >> 31);
}

// Seeded random stream. Substreams are derived by mixing the master seed with
// integer tags, so replicate b of method m always sees the same stream no
// matter how work is distributed across threads.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  static RngStream substream(std::uint64_t master_seed, std::uint64_t tag,
                             std::uint64_t index, std::uint64_t attempt = 0) {
    std::uint64_t s = master_seed;
    std::uint64_t a = splitmix64(s);
    s ^= tag * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL;
    std::uint64_t b = splitmix64(s);
    s ^= index * 0xda942042e4dd58b5ULL + 0x9e3779b97f4a7c15ULL;
    std::uint64_t c = splitmix64(s);
    s ^= attempt + 0x853c49e6748fea9bULL;
    std::uint64_t d = splitmix64(s);
    return RngStream(a ^ (b << 1) ^ (c >> 1) ^ d);
  }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  int poisson(double mean) { return std::poisson_distribution<int>(mean)(engine_); }
  int binomial(int trials, double p) {
    return std::binomial_distribution<int>(trials, p)(engine_);
  }
  bool bernoulli(double p) { return std::bernoulli_distribution(p)(engine_); }
  std::uint64_t next_u64() { return engine_(); }
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace atecr
