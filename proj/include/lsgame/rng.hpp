#pragma once

// Keyed random streams. Every Monte Carlo path owns a stream keyed by
// (seed, stream id) through the Philox counter-based bijection, so its draws
// do not depend on how paths are scheduled.

#include <boost/random/normal_distribution.hpp>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>

namespace lsgame {

/// Philox4x32-10 (Salmon et al., SC'11) exposed as a UniformRandomBitGenerator.
///
/// The 128-bit counter is (block index, stream id); the 64-bit key is the seed.
class Philox4x32 {
 public:
  using result_type = std::uint32_t;
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  Philox4x32(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    if (used_ == kBufferWords) refill();
    return buffer_[used_++];
  }

  /// The raw bijection: ten rounds of the Philox S-box over `counter`.
  static constexpr Block generate(Block counter, Key key) noexcept {
    std::uint32_t c0 = counter[0], c1 = counter[1], c2 = counter[2], c3 = counter[3];
    std::uint32_t k0 = key[0], k1 = key[1];
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{kMul0} * c0;
      const std::uint64_t p1 = std::uint64_t{kMul1} * c2;
      const auto n0 = static_cast<std::uint32_t>(p1 >> 32) ^ c1 ^ k0;
      const auto n2 = static_cast<std::uint32_t>(p0 >> 32) ^ c3 ^ k1;
      c1 = static_cast<std::uint32_t>(p1);
      c3 = static_cast<std::uint32_t>(p0);
      c0 = n0;
      c2 = n2;
      k0 += kWeyl0;
      k1 += kWeyl1;
    }
    return {c0, c1, c2, c3};
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  static constexpr int kLanes = 4;
  static constexpr int kBufferWords = 4 * kLanes;

  // Same rounds as generate(), run on kLanes consecutive counters at once so
  // the independent multiply chains overlap.
  void refill() noexcept {
    std::uint32_t c0[kLanes], c1[kLanes], c2[kLanes], c3[kLanes];
    for (int l = 0; l < kLanes; ++l) {
      const std::uint64_t block = block_ + static_cast<std::uint64_t>(l);
      c0[l] = static_cast<std::uint32_t>(block);
      c1[l] = static_cast<std::uint32_t>(block >> 32);
      c2[l] = static_cast<std::uint32_t>(stream_);
      c3[l] = static_cast<std::uint32_t>(stream_ >> 32);
    }
    std::uint32_t k0 = key_[0], k1 = key_[1];
    for (int round = 0; round < 10; ++round) {
      for (int l = 0; l < kLanes; ++l) {
        const std::uint64_t p0 = std::uint64_t{kMul0} * c0[l];
        const std::uint64_t p1 = std::uint64_t{kMul1} * c2[l];
        const auto n0 = static_cast<std::uint32_t>(p1 >> 32) ^ c1[l] ^ k0;
        const auto n2 = static_cast<std::uint32_t>(p0 >> 32) ^ c3[l] ^ k1;
        c1[l] = static_cast<std::uint32_t>(p1);
        c3[l] = static_cast<std::uint32_t>(p0);
        c0[l] = n0;
        c2[l] = n2;
      }
      k0 += kWeyl0;
      k1 += kWeyl1;
    }
    for (int l = 0; l < kLanes; ++l) {
      buffer_[4 * l + 0] = c0[l];
      buffer_[4 * l + 1] = c1[l];
      buffer_[4 * l + 2] = c2[l];
      buffer_[4 * l + 3] = c3[l];
    }
    block_ += kLanes;
    used_ = 0;
  }

  Key key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, kBufferWords> buffer_{};
  int used_ = kBufferWords;
};

/// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Deterministic child seed; distinct tags give statistically unrelated seeds.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
  return mix64(seed ^ mix64(tag + 0x632BE59BD9B4E019ull));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag_a,
                                    std::uint64_t tag_b) noexcept {
  return derive_seed(derive_seed(seed, tag_a), tag_b);
}

/// xoshiro256++ (Blackman and Vigna). Fast 64-bit generator for the bulk of
/// the draws inside one stream.
class Xoshiro256pp {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256pp(const std::array<std::uint64_t, 4>& state) noexcept : s_(state) {
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 0x9E3779B97F4A7C15ull;
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = std::rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = std::rotl(s_[3], 45);
    return result;
  }

 private:
  std::array<std::uint64_t, 4> s_;
};

/// Generator for stream `stream` under `seed`: the state is the Philox output
/// at counters (0, stream) and (1, stream), so every stream is a pure function
/// of (seed, stream) and can be created in any order.
inline Xoshiro256pp keyed_stream(std::uint64_t seed, std::uint64_t stream) noexcept {
  Philox4x32 philox(seed, stream);
  std::array<std::uint64_t, 4> state{};
  for (auto& word : state) {
    const std::uint64_t lo = philox();
    const std::uint64_t hi = philox();
    word = (hi << 32) | lo;
  }
  return Xoshiro256pp(state);
}

/// Standard normal draws from one (seed, stream) pair.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t stream) noexcept
      : engine_(keyed_stream(seed, stream)) {}

  double operator()() { return normal_(engine_); }

  /// out[c] = scale * N(0,1), drawn in coordinate order
  void fill(std::span<double> out, double scale) {
    for (double& v : out) v = scale * normal_(engine_);
  }

 private:
  Xoshiro256pp engine_;
  boost::random::normal_distribution<double> normal_;
};

}  // namespace lsgame
