#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace tcd {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives a child seed from a parent seed and a label; used to give every
/// experiment cell and every replication its own independent stream.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t label) noexcept {
  return mix64(parent ^ mix64(label + 0x9e3779b97f4a7c15ULL));
}

// Counter-based stream: draw i is mix64(key + (i + 1) * gamma), so every value
// is a pure function of (master_seed, stream_id, draw index). Streams are
// owned by exactly one task; never share one across threads.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t master_seed, std::uint64_t stream_id) noexcept
      : master_seed_(master_seed),
        stream_id_(stream_id),
        key_(derive_seed(master_seed, stream_id)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return at(counter_++); }

  /// Raw draw at an arbitrary index without advancing the stream.
  result_type at(std::uint64_t index) const noexcept { return mix64(key_ + (index + 1) * kGamma); }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() noexcept { return gauss_(*this); }

  std::uint64_t master_seed() const noexcept { return master_seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::uint64_t draws() const noexcept { return counter_; }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

  std::uint64_t master_seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::normal_distribution<double> gauss_{0.0, 1.0};
};

}  // namespace tcd
