#pragma once

#include <array>
#include <cstdint>
#include <utility>

namespace gii::rng {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

/// Philox4x32 with 10 rounds (Salmon et al., Random123). Stateless: the
/// output is a pure function of (counter, key).
Counter philox4x32(Counter ctr, Key key) noexcept;

/// Which family of draws a stream belongs to. Distinct tags never collide.
enum class Stream : std::uint32_t {
  covariate = 1,
  shock = 2,
  start = 3,
};

/// Two independent N(0,1) draws addressed by (seed, stream, m, i, t, pair).
///
/// The address is the whole identity of the draw, so panels can be filled in
/// any order or in parallel and remain bit-identical.
std::pair<double, double> normal_pair(std::uint64_t seed, Stream stream,
                                      std::uint32_t m, std::uint32_t i,
                                      std::uint32_t t,
                                      std::uint32_t pair) noexcept;

/// Uniform on [0, 1) addressed like normal_pair.
double uniform(std::uint64_t seed, Stream stream, std::uint32_t m,
               std::uint32_t i, std::uint32_t t) noexcept;

}  // namespace gii::rng
