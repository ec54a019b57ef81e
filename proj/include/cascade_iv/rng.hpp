#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cascade_iv {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Separates the random quantities drawn for one trial.
enum class RngDomain : std::uint32_t {
  ChannelNoise = 1,
  SourceBits = 2,
  Dither = 3,
  SourceDepth = 4,
  Test = 99,
};

/// Addressable random stream for one (master seed, trial, domain). Every
/// draw is a pure function of its (a, b) coordinates, so results do not
/// depend on the order in which cells are visited.
class TrialRng {
 public:
  TrialRng(std::uint64_t master_seed, std::uint64_t trial, RngDomain domain) : trial_(trial) {
    const std::uint64_t k = splitmix64(master_seed ^ splitmix64(static_cast<std::uint64_t>(domain)));
    key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  }

  Philox4x32::Counter block(std::uint32_t a, std::uint32_t b) const {
    return Philox4x32::generate(
        {static_cast<std::uint32_t>(trial_), static_cast<std::uint32_t>(trial_ >> 32), a, b}, key_);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform(std::uint32_t a, std::uint32_t b) const {
    const auto w = block(a, b);
    return to_unit(w[0], w[1]);
  }

  /// Standard normal via Box-Muller on the two halves of one block.
  double gaussian(std::uint32_t a, std::uint32_t b) const {
    const auto w = block(a, b);
    const double u1 = 1.0 - to_unit(w[0], w[1]);  // (0, 1]
    const double u2 = to_unit(w[2], w[3]);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t bits64(std::uint32_t a, std::uint32_t b) const {
    const auto w = block(a, b);
    return (static_cast<std::uint64_t>(w[0]) << 32) | w[1];
  }

 private:
  static double to_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t x = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return std::ldexp(static_cast<double>(x), -53);
  }

  std::uint64_t trial_;
  Philox4x32::Key key_{};
};

/// Zero-mean, unit-variance additive noise laws.
enum class NoiseKind { Gaussian, UniformUnitVariance, Rademacher };

inline std::string_view to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::Gaussian: return "gaussian";
    case NoiseKind::UniformUnitVariance: return "uniform";
    case NoiseKind::Rademacher: return "rademacher";
  }
  return "?";
}

inline NoiseKind parse_noise_kind(std::string_view s) {
  if (s == "gaussian") return NoiseKind::Gaussian;
  if (s == "uniform") return NoiseKind::UniformUnitVariance;
  if (s == "rademacher") return NoiseKind::Rademacher;
  throw std::invalid_argument("unknown noise kind '" + std::string(s) + "'");
}

struct NoiseModel {
  NoiseKind kind = NoiseKind::Gaussian;
  bool silent = false;  // zero noise, for algebraic tests

  double sample(const TrialRng& rng, std::uint32_t a, std::uint32_t b) const {
    if (silent) return 0.0;
    switch (kind) {
      case NoiseKind::Gaussian: return rng.gaussian(a, b);
      case NoiseKind::UniformUnitVariance: return std::sqrt(3.0) * (2.0 * rng.uniform(a, b) - 1.0);
      case NoiseKind::Rademacher: return (rng.block(a, b)[0] & 1u) ? 1.0 : -1.0;
    }
    return 0.0;
  }
};

}  // namespace cascade_iv
