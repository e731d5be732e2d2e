#include "gii/rng.hpp"

#include <cmath>
#include <numbers>

namespace gii::rng {
namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                    std::uint32_t& lo) noexcept {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline Counter round(const Counter& c, const Key& k) noexcept {
  std::uint32_t hi0, lo0, hi1, lo1;
  mulhilo(kMul0, c[0], hi0, lo0);
  mulhilo(kMul1, c[2], hi1, lo1);
  return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

// 53 random bits mapped into (0, 1]; never returns 0 so log() is safe.
inline double open_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
  const std::uint64_t bits =
      ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
}

inline Key split_seed(std::uint64_t seed) noexcept {
  return {static_cast<std::uint32_t>(seed),
          static_cast<std::uint32_t>(seed >> 32)};
}

}  // namespace

Counter philox4x32(Counter ctr, Key key) noexcept {
  ctr = round(ctr, key);
  for (int r = 1; r < 10; ++r) {
    key[0] += kWeyl0;
    key[1] += kWeyl1;
    ctr = round(ctr, key);
  }
  return ctr;
}

std::pair<double, double> normal_pair(std::uint64_t seed, Stream stream,
                                      std::uint32_t m, std::uint32_t i,
                                      std::uint32_t t,
                                      std::uint32_t pair) noexcept {
  const Counter ctr{i, t, m,
                    (static_cast<std::uint32_t>(stream) << 16) | pair};
  const Counter out = philox4x32(ctr, split_seed(seed));
  const double u1 = open_unit(out[0], out[1]);
  const double u2 = open_unit(out[2], out[3]);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

double uniform(std::uint64_t seed, Stream stream, std::uint32_t m,
               std::uint32_t i, std::uint32_t t) noexcept {
  const Counter ctr{i, t, m, (static_cast<std::uint32_t>(stream) << 16)};
  const Counter out = philox4x32(ctr, split_seed(seed));
  return open_unit(out[0], out[1]) - 0x1.0p-53;
}

}  // namespace gii::rng
