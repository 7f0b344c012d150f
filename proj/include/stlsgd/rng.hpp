#pragma once

#include <cmath>
#include <cstdint>

namespace stlsgd {

namespace detail {

inline std::uint64_t avalanche(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Counter-mode generator: the n-th draw is a pure function of
// (seed, stream, t, n), so no scheduling order can change what is drawn.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t t) {
    using detail::avalanche;
    key_ = avalanche(seed + 0x9e3779b97f4a7c15ULL);
    key_ = avalanche(key_ ^ (stream + 0xbf58476d1ce4e5b9ULL));
    key_ = avalanche(key_ ^ (t + 0x94d049bb133111ebULL));
  }

  std::uint64_t next_u64() {
    return detail::avalanche(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; consumes exactly two raw draws.
  double next_gaussian() {
    double u1 = 1.0 - next_unit();  // (0, 1], keeps the log finite
    double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586 * u2);
  }

  // Uniform in {0, ..., n-1} without modulo bias (Lemire's method).
  std::uint64_t next_below(std::uint64_t n) {
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(next_u64()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

// Stream ids at and above this value are reserved for bookkeeping draws
// (return-index selection, stage sampling, ...); client ids stay below it.
inline constexpr std::uint64_t kMetaStream = 0x8000000000000000ULL;

}  // namespace stlsgd
