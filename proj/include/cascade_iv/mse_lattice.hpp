#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "channel_params.hpp"
#include "csv.hpp"
#include "numerics.hpp"

namespace cascade_iv {

// ln P̄ and ln(1 - P̄) without the 1 - P̄ cancellation at high SNR.
inline double log_snr_bar(const ChannelParams& ch) { return std::log(ch.snr) - std::log1p(ch.snr); }
inline double log_snr_bar_complement(const ChannelParams& ch) { return -std::log1p(ch.snr); }
inline double snr_bar_complement(const ChannelParams& ch) { return 1.0 / (1.0 + ch.snr); }

enum class BoundaryKind { SingleSample, ExponentialRefinement, PacketStream };

/// MSE of node 0 at each time t >= 0.
///
/// SingleSample:           M0(t) = 0
/// ExponentialRefinement:  M0(t) = exp(-2R(t+1))
/// PacketStream:           M0(t) = 4^{-psi(floor(t/T)+1)}, packet tau usable from t = tau*T
class BoundaryCondition {
 public:
  static BoundaryCondition single_sample() { return BoundaryCondition(BoundaryKind::SingleSample); }

  static BoundaryCondition exponential_refinement(double rate_nats) {
    if (!std::isfinite(rate_nats) || !(rate_nats > 0.0))
      throw std::invalid_argument("refinement rate must be positive");
    BoundaryCondition b(BoundaryKind::ExponentialRefinement);
    b.rate_ = rate_nats;
    return b;
  }

  static BoundaryCondition packet_stream(int packet_bits, int period) {
    if (packet_bits < 1 || period < 1) throw std::invalid_argument("packet_bits and period must be >= 1");
    BoundaryCondition b(BoundaryKind::PacketStream);
    b.packet_bits_ = packet_bits;
    b.period_ = period;
    b.rate_ = packet_bits * std::numbers::ln2 / period;
    return b;
  }

  BoundaryKind kind() const { return kind_; }
  double rate_nats() const { return rate_; }
  int packet_bits() const { return packet_bits_; }
  int period() const { return period_; }

  double log_value(long t) const {
    if (t < 0) return 0.0;
    switch (kind_) {
      case BoundaryKind::SingleSample:
        return kNegInf;
      case BoundaryKind::ExponentialRefinement:
        return -2.0 * rate_ * static_cast<double>(t + 1);
      case BoundaryKind::PacketStream:
        return -2.0 * std::numbers::ln2 * packet_bits_ * static_cast<double>(t / period_ + 1);
    }
    return kNegInf;
  }

  double operator()(long t) const {
    if (kind_ == BoundaryKind::SingleSample && t >= 0) return 0.0;
    if (kind_ == BoundaryKind::PacketStream && t >= 0)
      return std::ldexp(1.0, static_cast<int>(std::max<long>(-2L * packet_bits_ * (t / period_ + 1), -2000L)));
    return std::exp(log_value(t));
  }

 private:
  explicit BoundaryCondition(BoundaryKind k) : kind_(k) {}

  BoundaryKind kind_;
  double rate_ = 0.0;
  int packet_bits_ = 0;
  int period_ = 0;
};

inline constexpr std::size_t kDefaultMaxGridCells = std::size_t{1} << 26;

/// Solved lattice M_r(t) for 0 <= r <= r_max, -1 <= t <= t_max. A log-domain
/// copy of the same recursion is kept for cells that underflow.
class MseGrid {
 public:
  MseGrid(ChannelParams channel, BoundaryCondition boundary, int r_max, int t_max)
      : channel_(channel),
        boundary_(boundary),
        r_max_(r_max),
        t_max_(t_max),
        values_(static_cast<std::size_t>(r_max + 1) * (t_max + 2), 1.0),
        log_values_(values_.size(), 0.0) {}

  int max_relay() const { return r_max_; }
  int max_time() const { return t_max_; }
  const ChannelParams& channel() const { return channel_; }
  const BoundaryCondition& boundary() const { return boundary_; }

  bool contains(int r, int t) const { return r >= 0 && r <= r_max_ && t >= -1 && t <= t_max_; }

  double operator()(int r, int t) const { return values_[index(r, t)]; }
  double log_value(int r, int t) const { return log_values_[index(r, t)]; }

  /// Bounds-checked lookup.
  double mse(int r, int t) const {
    if (!contains(r, t))
      throw std::out_of_range("cell (" + std::to_string(r) + "," + std::to_string(t) + ") outside grid");
    return (*this)(r, t);
  }

  double& at(int r, int t) { return values_[index(r, t)]; }
  double& log_at(int r, int t) { return log_values_[index(r, t)]; }

  /// CSV `r,t,mse`, r-major then t.
  void write_csv(std::ostream& os) const {
    CsvWriter csv(os, {"r", "t", "mse"});
    for (int r = 0; r <= r_max_; ++r)
      for (int t = -1; t <= t_max_; ++t) csv.row(r, t, (*this)(r, t));
  }

 private:
  std::size_t index(int r, int t) const {
    return static_cast<std::size_t>(r) * (t_max_ + 2) + static_cast<std::size_t>(t + 1);
  }

  ChannelParams channel_;
  BoundaryCondition boundary_;
  int r_max_;
  int t_max_;
  std::vector<double> values_;
  std::vector<double> log_values_;
};

/// M_r(t) = P̄ M_{r-1}(t) + (1 - P̄) M_r(t-1), with M_r(-1) = 1 and M_0(t) from the boundary.
inline MseGrid solve_grid(const ChannelParams& channel, const BoundaryCondition& boundary, int r_max,
                          int t_max, std::size_t max_cells = kDefaultMaxGridCells) {
  if (r_max < 1) throw std::invalid_argument("r_max must be >= 1");
  if (t_max < 0) throw std::invalid_argument("t_max must be >= 0");
  const double cells = static_cast<double>(r_max + 1) * static_cast<double>(t_max + 2);
  if (cells > static_cast<double>(max_cells))
    throw std::length_error("grid of " + std::to_string(static_cast<long long>(cells)) +
                            " cells exceeds cap " + std::to_string(max_cells));

  MseGrid grid(channel, boundary, r_max, t_max);
  const double pb = channel.snr_bar;
  const double qb = snr_bar_complement(channel);
  const double log_pb = log_snr_bar(channel);
  const double log_qb = log_snr_bar_complement(channel);

  for (int t = 0; t <= t_max; ++t) {
    grid.at(0, t) = boundary(t);
    grid.log_at(0, t) = boundary.log_value(t);
    for (int r = 1; r <= r_max; ++r) {
      grid.at(r, t) = pb * grid(r - 1, t) + qb * grid(r, t - 1);
      grid.log_at(r, t) = log_add_exp(log_pb + grid.log_value(r - 1, t), log_qb + grid.log_value(r, t - 1));
    }
  }
  return grid;
}

/// (1 - P̄)^{t+1} sum_{k=1}^{r} C(t+r-k, r-k) P̄^{r-k}, in the log domain.
inline LogValue closed_form_single(const ChannelParams& channel, int r, int t) {
  if (r < 1 || t < 0) throw std::invalid_argument("closed_form_single needs r >= 1, t >= 0");
  const double log_pb = log_snr_bar(channel);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(r));
  for (int j = 0; j < r; ++j) terms.push_back(log_binomial(t + j, j) + j * log_pb);
  return LogValue::from_log((t + 1) * log_snr_bar_complement(channel) + log_sum_exp(terms));
}

struct StreamingMse {
  LogValue initial;   // contribution of the M_r(-1) = 1 initial conditions
  LogValue boundary;  // contribution of the node-0 refinement boundary

  LogValue total() const { return LogValue::from_log(log_add_exp(initial.log_value, boundary.log_value)); }
};

/// Closed-form MSE under the exponential-refinement boundary M0(t) = exp(-2R(t+1)).
/// The boundary part sums lattice paths leaving (0, t-s):
///   P̄^r sum_{s=0}^{t} exp(-2R(t-s+1)) C(r-1+s, s) (1 - P̄)^s.
inline StreamingMse closed_form_streaming(const ChannelParams& channel, double rate_nats, int r, int t) {
  if (!(rate_nats > 0.0)) throw std::invalid_argument("rate must be positive");
  StreamingMse out;
  out.initial = closed_form_single(channel, r, t);
  const double log_qb = log_snr_bar_complement(channel);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(t + 1));
  for (int s = 0; s <= t; ++s)
    terms.push_back(-2.0 * rate_nats * (t - s + 1) + log_binomial(r - 1 + s, s) + s * log_qb);
  out.boundary = LogValue::from_log(r * log_snr_bar(channel) + log_sum_exp(terms));
  return out;
}

/// Closed-form single-sample lattice behind the same lookup interface as MseGrid.
struct ClosedFormSingleLattice {
  ChannelParams channel;
  double mse(int r, int t) const {
    if (t < 0) return 1.0;
    return closed_form_single(channel, r, t).value;
  }
};

/// Time index paired with relay r at velocity v: floor(r/v) for instantaneous
/// hops; floor(r/v̄) - r on the instantaneous lattice for delayed hops.
inline int time_at_velocity(const Velocity& v, int r) {
  const int t = static_cast<int>(std::floor(r / v.value()));
  return v.convention() == HopConvention::Instantaneous ? t : t - r;
}

template <typename Lattice>
double mse_at_velocity(const Lattice& lattice, const Velocity& v, int r) {
  if (r < 1) throw std::invalid_argument("r must be >= 1");
  return lattice.mse(r, time_at_velocity(v, r));
}

}  // namespace cascade_iv
