#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace steerlab {

// 64-bit finalizer from the splitmix64 generator. Bijective, so distinct
// (stream, counter) pairs never collide before mixing.
inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ull;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebull;
  z ^= z >> 31;
  return z;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Replication r of a run with master seed s draws from streams keyed by
// mix64(s ^ mix64(r + 1)): the replication index is mixed to spread it over
// all 64 bits, XORed into the master seed, and finalized. Documented here
// and in the README because transcript replay depends on it.
inline std::uint64_t derive_replication_seed(std::uint64_t master_seed, int replication) {
  return mix64(master_seed ^ mix64(static_cast<std::uint64_t>(replication) + 1));
}

// Counter-based stream: output at counter c is splitmix64 of (key, c). The
// key is derived from a seed and a stream label, so every consumer in a run
// owns a named stream and draws are independent of interleaving. State is
// two integers, which makes transcripts replayable from (seed, label, counter).
class CounterRng {
 public:
  CounterRng() : key_(0), counter_(0) {}
  CounterRng(std::uint64_t seed, std::string_view stream_label)
      : key_(mix64(seed ^ fnv1a64(stream_label))), counter_(0) {}

  std::uint64_t next_u64() {
    ++counter_;
    return mix64(key_ + 0x9e3779b97f4a7c15ull * counter_);
  }

  // Uniform on [0, 1) with 53 random bits, identical across platforms.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform on {0, ..., n-1} by rejection, so no modulo bias.
  int next_int(int n) {
    if (n <= 0) throw std::invalid_argument("CounterRng::next_int: n must be positive");
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return static_cast<int>(v % un);
  }

  // Draws an index proportionally to nonnegative weights. Exactly one uniform
  // deviate is consumed per call regardless of the outcome, which keeps
  // replay aligned. Falls back to the last positive-weight index if rounding
  // pushes the accumulated mass short of the draw.
  int sample_discrete(const Eigen::VectorXd& weights) {
    const Eigen::Index n = weights.size();
    if (n == 0) throw std::invalid_argument("CounterRng::sample_discrete: empty weights");
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(weights(i) >= 0.0)) {
        throw std::invalid_argument("CounterRng::sample_discrete: negative or NaN weight");
      }
      total += weights(i);
    }
    if (!(total > 0.0)) {
      throw std::invalid_argument("CounterRng::sample_discrete: zero total weight");
    }
    const double x = next_double() * total;
    double acc = 0.0;
    Eigen::Index last_positive = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (weights(i) > 0.0) last_positive = i;
      acc += weights(i);
      if (x < acc) return static_cast<int>(i);
    }
    return static_cast<int>(last_positive);
  }

  std::uint64_t stream_key() const { return key_; }
  std::uint64_t counter() const { return counter_; }
  void set_counter(std::uint64_t c) { counter_ = c; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace steerlab
