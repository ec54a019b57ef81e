#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "channel_params.hpp"
#include "csv.hpp"
#include "mse_lattice.hpp"
#include "pam_codec.hpp"
#include "rng.hpp"

namespace cascade_iv {

inline constexpr double kDegenerateGap = 1e-300;

/// Per-hop gains for hop r (node r -> node r+1) at time t:
///   beta  = sqrt(P / (M_{r+1}(t-1) - M_r(t)))
///   gamma = sqrt(P (M_{r+1}(t-1) - M_r(t))) / (P + 1)   (applied by node r+1)
class GainTable {
 public:
  GainTable() = default;
  GainTable(ChannelParams channel, int r_max, int t_max)
      : channel_(channel),
        r_max_(r_max),
        t_max_(t_max),
        beta_(static_cast<std::size_t>(r_max) * (t_max + 1), 0.0),
        gamma_(beta_.size(), 0.0),
        silent_(beta_.size(), 1) {}

  const ChannelParams& channel() const { return channel_; }
  int max_relay() const { return r_max_; }
  int max_time() const { return t_max_; }
  int num_hops() const { return r_max_; }

  double beta(int hop, int t) const { return beta_[index(hop, t)]; }
  double gamma(int hop, int t) const { return gamma_[index(hop, t)]; }
  bool silent(int hop, int t) const { return silent_[index(hop, t)] != 0; }

  void set(int hop, int t, double beta, double gamma, bool silent) {
    beta_[index(hop, t)] = beta;
    gamma_[index(hop, t)] = gamma;
    silent_[index(hop, t)] = silent ? 1 : 0;
  }

  std::size_t silent_count() const {
    std::size_t n = 0;
    for (auto s : silent_) n += s;
    return n;
  }

 private:
  std::size_t index(int hop, int t) const {
    if (hop < 0 || hop >= r_max_ || t < 0 || t > t_max_) throw std::out_of_range("gain index out of range");
    return static_cast<std::size_t>(hop) * (t_max_ + 1) + static_cast<std::size_t>(t);
  }

  ChannelParams channel_{};
  int r_max_ = 0;
  int t_max_ = 0;
  std::vector<double> beta_;
  std::vector<double> gamma_;
  std::vector<std::uint8_t> silent_;
};

/// Gains for nodes 0..grid.max_relay(). A gap at or below kDegenerateGap
/// silences the hop; a gap below -1e-12 means the grid is not an MSE lattice.
inline GainTable precompute_gains(const MseGrid& grid) {
  const ChannelParams& ch = grid.channel();
  GainTable table(ch, grid.max_relay(), grid.max_time());
  for (int hop = 0; hop < grid.max_relay(); ++hop)
    for (int t = 0; t <= grid.max_time(); ++t) {
      const double gap = grid(hop + 1, t - 1) - grid(hop, t);
      if (gap < -1e-12)
        throw std::runtime_error("MSE grid increases along hop " + std::to_string(hop) + " at t=" +
                                 std::to_string(t));
      if (gap <= kDegenerateGap) {
        table.set(hop, t, 0.0, 0.0, true);
        continue;
      }
      table.set(hop, t, std::sqrt(ch.snr / gap), std::sqrt(ch.snr * gap) / (ch.snr + 1.0), false);
    }
  return table;
}

enum class SourceKind { KnownSample, Refinement, PacketStream };

/// One trial's source: the value S, its bits when S comes from a bit
/// stream, and the node-0 error E_0(t) = S - Ŝ_0(t) for t = 0..t_max.
struct SourceRealization {
  double value = 0.0;
  Bits bits;
  std::vector<double> errors;

  double estimate(int t) const { return value - errors.at(static_cast<std::size_t>(t)); }
};

/// Node-0 estimate sequences.
///  KnownSample:  Ŝ_0(t) = S. S is fixed, or uniform on [-√3, √3) drawn
///                from random bits (optionally truncated to a depth-ψ point).
///  Refinement:   uniform S with E_0(t) = U^{d_t}; the depth d_t is
///                floor(x_t) or floor(x_t)+1, x_t = R(t+1)/ln 2, chosen by one
///                per-trial uniform so that E[E_0(t)^2] = exp(-2R(t+1)) and the
///                errors stay nested. A caller-provided sequence is also accepted.
///  PacketStream: Ŝ_0(t) = S^{ψ(floor(t/T)+1)}.
class SourceProcess {
 public:
  static SourceProcess known_sample(double value) {
    if (!std::isfinite(value)) throw std::invalid_argument("source value must be finite");
    SourceProcess s(SourceKind::KnownSample);
    s.fixed_value_ = value;
    return s;
  }

  /// Uniform S from bits; depth > 0 transmits the depth-ψ constellation point.
  static SourceProcess known_sample_random(int depth = 0) {
    if (depth < 0 || depth > 62) throw std::invalid_argument("depth must lie in [0, 62]");
    SourceProcess s(SourceKind::KnownSample);
    s.depth_ = depth;
    return s;
  }

  static SourceProcess refinement(double rate_nats) {
    if (!(rate_nats > 0.0) || !std::isfinite(rate_nats)) throw std::invalid_argument("rate must be positive");
    SourceProcess s(SourceKind::Refinement);
    s.rate_ = rate_nats;
    return s;
  }

  /// Explicit refinement Ŝ_0(0), Ŝ_0(1), ... of a fixed value S.
  static SourceProcess refinement_sequence(double value, std::vector<double> estimates) {
    if (estimates.empty()) throw std::invalid_argument("refinement sequence is empty");
    SourceProcess s(SourceKind::Refinement);
    s.fixed_value_ = value;
    s.sequence_ = std::move(estimates);
    return s;
  }

  static SourceProcess packet_stream(int packet_bits, int period) {
    if (packet_bits < 1 || period < 1) throw std::invalid_argument("packet_bits and period must be >= 1");
    SourceProcess s(SourceKind::PacketStream);
    s.packet_bits_ = packet_bits;
    s.period_ = period;
    return s;
  }

  SourceKind kind() const { return kind_; }
  int packet_bits() const { return packet_bits_; }
  int period() const { return period_; }
  double rate_nats() const { return rate_; }
  int depth() const { return depth_; }

  /// Boundary condition describing E[E_0(t)^2] for a unit-variance S.
  BoundaryCondition boundary() const {
    switch (kind_) {
      case SourceKind::KnownSample: return BoundaryCondition::single_sample();
      case SourceKind::Refinement:
        if (sequence_) throw std::logic_error("explicit refinement sequence has no analytic boundary");
        return BoundaryCondition::exponential_refinement(rate_);
      case SourceKind::PacketStream: return BoundaryCondition::packet_stream(packet_bits_, period_);
    }
    throw std::logic_error("unknown source kind");
  }

  /// Source bits needed so that every tail used up to t_max keeps full precision.
  int bits_needed(int t_max) const {
    switch (kind_) {
      case SourceKind::KnownSample: return depth_ > 0 ? depth_ : 64;
      case SourceKind::Refinement:
        return static_cast<int>(std::ceil(rate_ * (t_max + 1) / std::numbers::ln2)) + 66;
      case SourceKind::PacketStream: return packet_bits_ * (t_max / period_ + 1) + 64;
    }
    return 64;
  }

  /// Realization from explicit bits; `depth_uniform` picks refinement depths.
  SourceRealization realize_from_bits(Bits bits, int t_max, double depth_uniform = 0.5) const {
    if (t_max < 0) throw std::invalid_argument("t_max must be >= 0");
    SourceRealization out;
    out.errors.assign(static_cast<std::size_t>(t_max) + 1, 0.0);
    if (fixed_value_) {
      out.value = *fixed_value_;
      if (sequence_) {
        if (sequence_->size() < out.errors.size())
          throw std::invalid_argument("refinement sequence shorter than t_max + 1");
        for (int t = 0; t <= t_max; ++t) out.errors[t] = out.value - (*sequence_)[t];
      }
      return out;
    }
    if (static_cast<int>(bits.size()) < bits_needed(t_max)) throw std::invalid_argument("not enough source bits");
    switch (kind_) {
      case SourceKind::KnownSample:
        out.value = depth_ > 0 ? encode(bits, depth_).value : pam_tail(bits, 0);
        break;
      case SourceKind::Refinement:
        out.value = pam_tail(bits, 0);
        for (int t = 0; t <= t_max; ++t) out.errors[t] = pam_tail(bits, refinement_depth(t, depth_uniform));
        break;
      case SourceKind::PacketStream:
        out.value = pam_tail(bits, 0);
        for (int t = 0; t <= t_max; ++t) out.errors[t] = pam_tail(bits, packet_bits_ * (t / period_ + 1));
        break;
    }
    out.bits = std::move(bits);
    return out;
  }

  SourceRealization realize(std::uint64_t master_seed, std::uint64_t trial, int t_max) const {
    if (fixed_value_) return realize_from_bits({}, t_max);
    const TrialRng bit_rng(master_seed, trial, RngDomain::SourceBits);
    const int n = bits_needed(t_max);
    Bits bits(static_cast<std::size_t>(n));
    for (int w = 0; w * 64 < n; ++w) {
      const std::uint64_t word = bit_rng.bits64(static_cast<std::uint32_t>(w), 0);
      for (int i = 0; i < 64 && w * 64 + i < n; ++i) bits[w * 64 + i] = (word >> (63 - i)) & 1u;
    }
    double u = 0.5;
    if (kind_ == SourceKind::Refinement) u = TrialRng(master_seed, trial, RngDomain::SourceDepth).uniform(0, 0);
    return realize_from_bits(std::move(bits), t_max, u);
  }

  int refinement_depth(int t, double depth_uniform) const {
    const double x = rate_ * (t + 1) / std::numbers::ln2;
    const double n = std::floor(x);
    // P(depth = n+1) solving p 4^{-n-1} + (1-p) 4^{-n} = 4^{-x}.
    const double p = -std::expm1(-(x - n) * 2.0 * std::numbers::ln2) * 4.0 / 3.0;
    return static_cast<int>(n) + (depth_uniform < p ? 1 : 0);
  }

 private:
  explicit SourceProcess(SourceKind kind) : kind_(kind) {}

  SourceKind kind_;
  std::optional<double> fixed_value_;
  std::optional<std::vector<double>> sequence_;
  double rate_ = 0.0;
  int packet_bits_ = 0;
  int period_ = 0;
  int depth_ = 0;
};

/// What node r sees at real time t. For r >= 1 the hop fields describe hop
/// r-1 (the transmission node r received); for r == 0 they are zero.
struct CellState {
  int r = 0;
  int t = 0;
  double error = 0.0;         // E_r(t) = S - Ŝ_r(t)
  double prev_error = 0.0;    // E_r(t-1) on the node's own clock
  double upstream_error = 0.0;  // E_{r-1}(t) on the lattice
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double identity_residual = 0.0;  // update rule minus the P̄-weighted recursion
  bool active = false;             // hop r-1 transmitted
};

struct SimulationOptions {
  HopConvention convention = HopConvention::Instantaneous;
};

/// Runs one trial in error coordinates and hands every (r, t) cell, with
/// 0 <= t <= t_max, to `observer`. Within a node, cells arrive in increasing t.
///
/// Instantaneous hops: node r at time t consumes Y_{r-1}(t), processed with r
/// ascending inside each t. Delayed hops consume Y_{r-1}(t-1); node r then
/// runs the instantaneous lattice r steps late, and noise is keyed by real time.
template <typename Observer>
void run_trial_observed(const GainTable& gains, const NoiseModel& noise, const SourceRealization& source,
                        const TrialRng& noise_rng, const SimulationOptions& options, Observer&& observer) {
  const int r_max = gains.max_relay();
  const int t_max = gains.max_time();
  if (source.errors.size() < static_cast<std::size_t>(t_max) + 1)
    throw std::invalid_argument("source realization shorter than the gain table");
  const bool delayed = options.convention == HopConvention::Delayed;
  const double pb = gains.channel().snr_bar;
  const double qb = 1.0 / (1.0 + gains.channel().snr);

  std::vector<double> prev(static_cast<std::size_t>(r_max) + 1, source.value);
  std::vector<double> cur(prev.size(), source.value);

  if (delayed)
    for (int r = 1; r <= r_max; ++r)
      for (int t = 0; t < r && t <= t_max; ++t) {
        CellState c;
        c.r = r;
        c.t = t;
        c.error = c.prev_error = source.value;
        observer(static_cast<const CellState&>(c));
      }

  for (int tl = 0; tl <= t_max; ++tl) {
    cur[0] = source.errors[static_cast<std::size_t>(tl)];
    {
      CellState c;
      c.t = tl;
      c.error = cur[0];
      c.prev_error = tl > 0 ? prev[0] : source.value;
      observer(static_cast<const CellState&>(c));
    }
    for (int r = 1; r <= r_max; ++r) {
      const int t_real = delayed ? tl + r : tl;
      if (t_real > t_max) break;
      const int hop = r - 1;
      CellState c;
      c.r = r;
      c.t = t_real;
      c.prev_error = prev[r];
      c.upstream_error = cur[r - 1];
      if (gains.silent(hop, tl)) {
        cur[r] = prev[r];
      } else {
        const double gamma = gains.gamma(hop, tl);
        c.active = true;
        c.z = noise.sample(noise_rng, static_cast<std::uint32_t>(hop), static_cast<std::uint32_t>(t_real));
        c.x = gains.beta(hop, tl) * (prev[r] - cur[r - 1]);
        c.y = c.x + c.z;
        cur[r] = prev[r] - gamma * c.y;
        c.identity_residual = cur[r] - (pb * cur[r - 1] + qb * prev[r] - gamma * c.z);
      }
      c.error = cur[r];
      if (!std::isfinite(cur[r]))
        throw std::runtime_error("non-finite state at r=" + std::to_string(r) + " t=" + std::to_string(t_real));
      observer(static_cast<const CellState&>(c));
    }
    std::swap(prev, cur);
  }
}

struct TraceRow {
  int t = 0;
  int r = 0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double estimate = 0.0;
};

inline void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& rows) {
  CsvWriter csv(os, {"t", "r", "x", "y", "z", "estimate"});
  for (const auto& row : rows) csv.row(row.t, row.r, row.x, row.y, row.z, row.estimate);
}

/// Squared errors and input powers of one trial on the (r, t) grid.
/// power(r, t) is X_r(t)^2 for hop r; the last node does not transmit.
struct TrialResult {
  int r_max = 0;
  int t_max = 0;
  std::vector<double> squared_errors;
  std::vector<double> powers;
  std::vector<double> max_identity_residual_per_node;
  std::vector<TraceRow> trace;

  double squared_error(int r, int t) const { return squared_errors.at(index(r, t)); }
  double power(int r, int t) const { return powers.at(index(r, t)); }
  std::size_t index(int r, int t) const {
    if (r < 0 || r > r_max || t < 0 || t > t_max) throw std::out_of_range("trial cell out of range");
    return static_cast<std::size_t>(r) * (t_max + 1) + static_cast<std::size_t>(t);
  }
};

inline TrialResult run_trial(const GainTable& gains, const NoiseModel& noise, const SourceRealization& source,
                             const TrialRng& noise_rng, const SimulationOptions& options = {},
                             bool keep_trace = false) {
  TrialResult out;
  out.r_max = gains.max_relay();
  out.t_max = gains.max_time();
  const std::size_t cells = static_cast<std::size_t>(out.r_max + 1) * (out.t_max + 1);
  out.squared_errors.assign(cells, 0.0);
  out.powers.assign(cells, std::numeric_limits<double>::quiet_NaN());
  out.max_identity_residual_per_node.assign(static_cast<std::size_t>(out.r_max) + 1, 0.0);
  run_trial_observed(gains, noise, source, noise_rng, options, [&](const CellState& c) {
    out.squared_errors[out.index(c.r, c.t)] = c.error * c.error;
    if (c.r >= 1) {
      out.powers[out.index(c.r - 1, c.t)] = c.x * c.x;
      auto& m = out.max_identity_residual_per_node[c.r];
      m = std::max(m, std::abs(c.identity_residual));
    }
    if (keep_trace) out.trace.push_back({c.t, c.r, c.x, c.y, c.z, source.value - c.error});
  });
  return out;
}

/// α_r(t) with Ŝ_r(t) = α_r(t) S + (noise terms), read from a noise-free
/// trial with S = 1.
class AlphaTable {
 public:
  AlphaTable(const GainTable& gains, HopConvention convention)
      : r_max_(gains.max_relay()), t_max_(gains.max_time()) {
    values_.assign(static_cast<std::size_t>(r_max_ + 1) * (t_max_ + 1), 0.0);
    const auto src = SourceProcess::known_sample(1.0).realize_from_bits({}, t_max_);
    const TrialRng unused(0, 0, RngDomain::Test);
    run_trial_observed(gains, NoiseModel{NoiseKind::Gaussian, true}, src, unused, SimulationOptions{convention},
                       [&](const CellState& c) { values_[index(c.r, c.t)] = 1.0 - c.error; });
  }

  double operator()(int r, int t) const { return values_.at(index(r, t)); }

 private:
  std::size_t index(int r, int t) const {
    if (r < 0 || r > r_max_ || t < 0 || t > t_max_) throw std::out_of_range("alpha index out of range");
    return static_cast<std::size_t>(r) * (t_max_ + 1) + static_cast<std::size_t>(t);
  }
  int r_max_;
  int t_max_;
  std::vector<double> values_;
};

/// Analytic MSE at real time t under either hop convention.
inline double analytic_mse(const MseGrid& grid, int r, int t, HopConvention convention) {
  const int tl = convention == HopConvention::Delayed && r > 0 ? t - r : t;
  return tl < -1 ? 1.0 : grid(r, tl);
}

}  // namespace cascade_iv
