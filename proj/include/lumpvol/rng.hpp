#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "lumpvol/sphere_grid.hpp"

namespace lumpvol {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter bijection(Counter c, Key k) {
    constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(M0) * c[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(M1) * c[2];
      const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
      const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
      c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
      k[0] += W0;
      k[1] += W1;
    }
    return c;
  }
};

// Independent stream per (seed, stream id); draws advance the third counter word.
class StreamRng {
 public:
  StreamRng(std::uint64_t seed, std::uint64_t stream)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        ctr_{static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0u, 0u} {}

  std::uint32_t next_u32() {
    if (pos_ == 4) {
      buf_ = Philox4x32::bijection(ctr_, key_);
      if (++ctr_[2] == 0) ++ctr_[3];
      pos_ = 0;
    }
    return buf_[pos_++];
  }

  // Uniform on the open interval (0, 1) with 53 random bits.
  double uniform() {
    const std::uint64_t hi = next_u32() >> 5, lo = next_u32() >> 6;
    return ((hi << 26 | lo) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform(), u2 = uniform();
    const double rad = std::sqrt(-2.0 * std::log(u1));
    spare_ = rad * std::sin(2.0 * kPi * u2);
    has_spare_ = true;
    return rad * std::cos(2.0 * kPi * u2);
  }

  // Standard complex Gaussian with E|z|^2 = 1.
  cplx complex_normal() {
    const double re = normal(), im = normal();
    return {re * std::sqrt(0.5), im * std::sqrt(0.5)};
  }

 private:
  Philox4x32::Key key_;
  Philox4x32::Counter ctr_;
  Philox4x32::Counter buf_{};
  int pos_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace lumpvol
