#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace mgw {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives the key of a child stream from a parent key and an index.
/// Used both for per-replica streams (master seed, replica) and for
/// per-node offspring streams (node key, child slot).
constexpr std::uint64_t derive_key(std::uint64_t parent, std::uint64_t index) noexcept {
  return mix64(parent ^ mix64(index + 0x632be59bd9b4e019ULL));
}

// Domain tags keep streams derived from the same key apart.
namespace stream_tag {
inline constexpr std::uint64_t offspring = 0x6f6666737072696eULL;
inline constexpr std::uint64_t root = 0x726f6f74ULL;
inline constexpr std::uint64_t ray = 0x726179ULL;
inline constexpr std::uint64_t walk = 0x77616c6bULL;
inline constexpr std::uint64_t tree = 0x74726565ULL;
inline constexpr std::uint64_t fill = 0x66696c6cULL;
}  // namespace stream_tag

/// Counter-based random stream: output i is a fixed function of (key, i).
/// Two streams built from the same key produce identical sequences, which is
/// what makes replicas schedule-independent.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit constexpr Stream(std::uint64_t key = 0) noexcept : state_(key) {}

  static constexpr Stream for_replica(std::uint64_t master, std::uint64_t replica) noexcept {
    return Stream(derive_key(master, replica));
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return next(); }

  result_type next() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t n) noexcept {
    if (n <= 1) return 0;
    for (;;) {
      const unsigned __int128 m = static_cast<unsigned __int128>(next()) * n;
      const auto low = static_cast<std::uint64_t>(m);
      if (low >= n || low >= (-n) % n) return static_cast<std::uint64_t>(m >> 64);
    }
  }

  double exponential(double rate) noexcept { return -std::log1p(-uniform()) / rate; }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// A fresh stream keyed off this one's next output.
  Stream split() noexcept { return Stream(mix64(next())); }

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace mgw
