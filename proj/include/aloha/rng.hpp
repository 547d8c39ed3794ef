#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace aloha {

/// xoshiro256** seeded through splitmix64. Independent substreams are
/// obtained with jump(), which advances the state by 2^128 draws.
class Xoshiro256 {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256(std::uint64_t seed = 0x9e3779b97f4a7c15ULL) { reseed(seed); }

  /// Stream `index` of `seed`: the base generator jumped `index` times.
  Xoshiro256(std::uint64_t seed, std::uint64_t index) : Xoshiro256(seed) {
    for (std::uint64_t k = 0; k < index; ++k) jump();
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  void reseed(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : s_) word = splitmix64(x);
  }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  void jump() {
    static constexpr std::array<std::uint64_t, 4> kJump = {
        0x180ec6d33cfd0abaULL, 0xd5a61266f0c9392cULL, 0xa9582618e03fc9aaULL,
        0x39abdc4529b1661cULL};
    std::array<std::uint64_t, 4> acc{};
    for (std::uint64_t word : kJump) {
      for (int b = 0; b < 64; ++b) {
        if (word & (std::uint64_t{1} << b)) {
          for (int k = 0; k < 4; ++k) acc[k] ^= s_[k];
        }
        (*this)();
      }
    }
    s_ = acc;
  }

  friend bool operator==(const Xoshiro256&, const Xoshiro256&) = default;

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::array<std::uint64_t, 4> s_{};
};

/// Streams first, first+1, ..., first+count-1 of `seed`, jumping once per stream.
inline std::vector<Xoshiro256> substreams(std::uint64_t seed, std::size_t count,
                                          std::uint64_t first = 0) {
  std::vector<Xoshiro256> out;
  out.reserve(count);
  Xoshiro256 gen(seed, first);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(gen);
    gen.jump();
  }
  return out;
}

}  // namespace aloha
