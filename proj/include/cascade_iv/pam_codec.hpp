#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "csv.hpp"

namespace cascade_iv {

using Bits = std::vector<std::uint8_t>;

inline const double kSqrt3 = std::sqrt(3.0);

/// Spacing between adjacent points of the depth-n constellation, √3·2^{1-n}.
inline double pam_min_distance(int n) { return std::ldexp(kSqrt3, 1 - n); }

/// Nested PAM point S^n = √3 Σ_{i<n} (-1)^{b_i} 2^{-(i+1)} (natural labeling).
struct PamPoint {
  double value = 0.0;
  int depth = 0;
  double min_distance = 0.0;
};

namespace detail {
// Σ_{i<n} (-1)^{b_i} 2^{-(i+1)} over bits[first, first+n); exact for n <= 52.
inline double signed_dyadic_sum(std::span<const std::uint8_t> bits, std::size_t first, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = n; i-- > 0;) acc += std::ldexp(bits[first + i] ? -1.0 : 1.0, -static_cast<int>(i + 1));
  return acc;
}
}  // namespace detail

inline PamPoint encode(std::span<const std::uint8_t> bits, int n) {
  if (n < 0 || static_cast<std::size_t>(n) > bits.size())
    throw std::invalid_argument("encode depth exceeds available bits");
  return PamPoint{kSqrt3 * detail::signed_dyadic_sum(bits, 0, static_cast<std::size_t>(n)), n,
                  pam_min_distance(n)};
}

/// Residual tail U^n = S - S^n over the bits that are available past depth n.
inline double pam_tail(std::span<const std::uint8_t> bits, int n) {
  if (n < 0 || static_cast<std::size_t>(n) > bits.size()) throw std::invalid_argument("tail depth out of range");
  const std::size_t len = std::min<std::size_t>(bits.size() - n, 60);
  return std::ldexp(kSqrt3 * detail::signed_dyadic_sum(bits, static_cast<std::size_t>(n), len), -n);
}

/// Slicer by successive sign tests: b̂_i = 0 iff the residual is positive.
/// Exact midpoints resolve to the lower constellation value.
inline Bits decode_bits(double estimate, int n) {
  if (!std::isfinite(estimate)) throw std::invalid_argument("estimate must be finite");
  if (n < 1) throw std::invalid_argument("decode depth must be >= 1");
  Bits out(static_cast<std::size_t>(n));
  double residual = estimate / kSqrt3;
  for (int i = 0; i < n; ++i) {
    const double step = std::ldexp(1.0, -(i + 1));
    if (residual > 0.0) {
      out[i] = 0;
      residual -= step;
    } else {
      out[i] = 1;
      residual += step;
    }
  }
  return out;
}

/// Dithered slicer: adds alpha * dither to the finite-constellation estimate
/// before slicing at depth n. `dither` must lie in [-D_psi/2, D_psi/2).
inline Bits dithered_decode_with(double estimate_fin, double alpha, double dither, int n) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
  return decode_bits(estimate_fin + alpha * dither, n);
}

/// Draws U^psi uniform on [-D_psi/2, D_psi/2) from `uniform01()` and slices.
template <typename Uniform01>
Bits dithered_decode(double estimate_fin, double alpha, int packet_bits, int n, Uniform01&& uniform01) {
  const double d = pam_min_distance(packet_bits);
  return dithered_decode_with(estimate_fin, alpha, (uniform01() - 0.5) * d, n);
}

// Offset-based slicing, used when the estimate is known only as S - E with
// E far below double resolution of S. With o = Ŝ - S^n, the nearest depth-n
// point lies m = ceil(o / D_n - 1/2) positions above S^n.

enum class SliceClamp { None, Top, Bottom };

/// Estimates above √3 decode to all zeros, at or below -√3 to all ones.
inline SliceClamp slice_clamp(double estimate) {
  if (estimate > kSqrt3) return SliceClamp::Top;
  if (estimate <= -kSqrt3) return SliceClamp::Bottom;
  return SliceClamp::None;
}

/// Shift (as an integral double) of the nearest depth-n point from S^n.
inline double slice_shift(double offset, int n) { return std::ceil(offset / pam_min_distance(n) - 0.5); }

/// Outcome of decoding the depth-(i+1) prefix, given the slice shift at that
/// depth. Bit i flips iff the shift is odd; the prefix is intact iff it is zero.
/// Clamped estimates decode to a constant word, so their prefix verdict needs
/// the verdict at depth i.
struct BitDecision {
  bool bit_error = false;
  bool prefix_error = false;
};

inline BitDecision decide_bit(SliceClamp clamp, double shift, std::uint8_t true_bit,
                              bool shorter_prefix_error = false) {
  switch (clamp) {
    case SliceClamp::Top: return {true_bit != 0, shorter_prefix_error || true_bit != 0};
    case SliceClamp::Bottom: return {true_bit != 1, shorter_prefix_error || true_bit != 1};
    case SliceClamp::None: break;
  }
  return {std::fmod(std::abs(shift), 2.0) == 1.0, shift != 0.0};
}

/// Monte Carlo error counters for one or more relays, indexed by bit and by
/// detection delay Δ = t - (generation time of the bit).
class ErrorStats {
 public:
  ErrorStats() = default;
  ErrorStats(int num_bits, int packet_bits, int max_delta)
      : num_bits_(num_bits), packet_bits_(packet_bits), max_delta_(max_delta) {
    if (num_bits < 1 || packet_bits < 1 || max_delta < 0) throw std::invalid_argument("bad ErrorStats shape");
  }

  struct Cell {
    std::uint64_t trials = 0;
    std::uint64_t bit_errors = 0;
    std::uint64_t prefix_errors = 0;  // any of bits 0..n wrong
  };

  struct PacketCell {
    std::uint64_t trials = 0;
    std::uint64_t errors = 0;
  };

  int num_bits() const { return num_bits_; }
  int packet_bits() const { return packet_bits_; }
  int max_delta() const { return max_delta_; }

  /// Records one trial's decisions at node r, time t for bits 0..k-1, where
  /// k = decoded.size(). Bits must already be generated (gen <= t).
  void tally(std::span<const std::uint8_t> decoded, std::span<const std::uint8_t> truth, int r, int t,
             std::span<const int> generation_times) {
    if (decoded.size() > truth.size() || decoded.size() > generation_times.size())
      throw std::invalid_argument("decoded, truth and generation times misaligned");
    std::vector<BitDecision> decisions(decoded.size());
    bool prefix_bad = false;
    for (std::size_t n = 0; n < decoded.size(); ++n) {
      const bool bad = decoded[n] != truth[n];
      prefix_bad = prefix_bad || bad;
      decisions[n] = {bad, prefix_bad};
    }
    record(decisions, r, t, generation_times);
  }

  /// Same as tally, with decisions precomputed (bit i error, prefix 0..i error).
  void record(std::span<const BitDecision> decisions, int r, int t, std::span<const int> generation_times) {
    auto& node = node_at(r);
    for (std::size_t n = 0; n < decisions.size(); ++n) {
      if (static_cast<int>(n) >= num_bits_) throw std::out_of_range("bit index beyond ErrorStats shape");
      const int delta = t - generation_times[n];
      if (delta < 0) throw std::invalid_argument("bit decoded before generation");
      if (delta > max_delta_) continue;
      Cell& c = node.cells[cell_index(static_cast<int>(n), delta)];
      ++c.trials;
      c.bit_errors += decisions[n].bit_error;
      c.prefix_errors += decisions[n].prefix_error;
    }
    for (std::size_t first = 0; first + packet_bits_ <= decisions.size(); first += packet_bits_) {
      const int delta = t - generation_times[first];
      if (delta > max_delta_) continue;
      bool bad = false;
      for (std::size_t n = first; n < first + packet_bits_; ++n) bad = bad || decisions[n].bit_error;
      PacketCell& p = node.packets[packet_index(static_cast<int>(first / packet_bits_), delta)];
      ++p.trials;
      p.errors += bad;
    }
  }

  void merge(const ErrorStats& other) {
    for (const auto& [r, src] : other.nodes_) {
      auto& dst = node_at(r);
      for (std::size_t i = 0; i < dst.cells.size(); ++i) {
        dst.cells[i].trials += src.cells[i].trials;
        dst.cells[i].bit_errors += src.cells[i].bit_errors;
        dst.cells[i].prefix_errors += src.cells[i].prefix_errors;
      }
      for (std::size_t i = 0; i < dst.packets.size(); ++i) {
        dst.packets[i].trials += src.packets[i].trials;
        dst.packets[i].errors += src.packets[i].errors;
      }
    }
  }

  bool has_relay(int r) const { return nodes_.count(r) != 0; }
  std::vector<int> relays() const {
    std::vector<int> out;
    for (const auto& [r, _] : nodes_) out.push_back(r);
    return out;
  }

  Cell cell(int r, int n, int delta) const {
    auto it = nodes_.find(r);
    if (it == nodes_.end() || delta < 0 || delta > max_delta_ || n < 0 || n >= num_bits_) return {};
    return it->second.cells[cell_index(n, delta)];
  }

  PacketCell packet(int r, int tau, int delta) const {
    auto it = nodes_.find(r);
    if (it == nodes_.end() || delta < 0 || delta > max_delta_ || tau < 0 || tau >= num_packets()) return {};
    return it->second.packets[packet_index(tau, delta)];
  }

  int num_packets() const { return num_bits_ / packet_bits_; }

  /// Aggregates for one (r, Δ). Rates are maxima over bits or packets, except
  /// bit_err which averages over the observed bits.
  struct Summary {
    int relay = 0;
    int delta = 0;
    std::uint64_t n_trials = 0;
    double bit_err = 0.0;
    double prefix_err = 0.0;  // worst prefix ending at a packet boundary
    double packet_err = 0.0;
    double worst_bit_pe = 0.0;
    std::uint64_t worst_bit_errors = 0;  // count behind worst_bit_pe
    std::uint64_t prefix_errors = 0;
    std::uint64_t packet_errors = 0;
    bool observed = false;
  };

  Summary summarize(int r, int delta) const {
    Summary s{r, delta};
    double bit_sum = 0.0;
    int bit_count = 0;
    for (int n = 0; n < num_bits_; ++n) {
      const Cell c = cell(r, n, delta);
      if (c.trials == 0) continue;
      s.observed = true;
      s.n_trials = std::max(s.n_trials, c.trials);
      const double rate = static_cast<double>(c.bit_errors) / c.trials;
      bit_sum += rate;
      ++bit_count;
      if (rate >= s.worst_bit_pe) {
        s.worst_bit_pe = rate;
        s.worst_bit_errors = c.bit_errors;
      }
      if ((n + 1) % packet_bits_ == 0) {
        const double pr = static_cast<double>(c.prefix_errors) / c.trials;
        if (pr >= s.prefix_err) {
          s.prefix_err = pr;
          s.prefix_errors = c.prefix_errors;
        }
      }
    }
    if (bit_count > 0) s.bit_err = bit_sum / bit_count;
    for (int tau = 0; tau < num_packets(); ++tau) {
      const PacketCell p = packet(r, tau, delta);
      if (p.trials == 0) continue;
      const double pr = static_cast<double>(p.errors) / p.trials;
      if (pr >= s.packet_err) {
        s.packet_err = pr;
        s.packet_errors = p.errors;
      }
    }
    return s;
  }

  /// Error CSV `r,delta,n_trials,bit_err,prefix_err,packet_err,worst_bit_pe`
  /// over every observed (r, Δ). Rates backed by fewer than `censor_count`
  /// errors print as "<threshold" with threshold = censor_count / n_trials.
  void write_csv(std::ostream& os, std::uint64_t censor_count = 10) const {
    os << "r,delta,n_trials,bit_err,prefix_err,packet_err,worst_bit_pe\n";
    for (const auto& [r, _] : nodes_)
      for (int delta = 0; delta <= max_delta_; ++delta) {
        const Summary s = summarize(r, delta);
        if (!s.observed) continue;
        auto rate = [&](double value, std::uint64_t count) {
          if (count < censor_count)
            return "<" + format_double(static_cast<double>(censor_count) / static_cast<double>(s.n_trials));
          return format_double(value);
        };
        const auto bit_count = static_cast<std::uint64_t>(std::llround(s.bit_err * s.n_trials));
        os << r << ',' << delta << ',' << s.n_trials << ',' << rate(s.bit_err, bit_count) << ','
           << rate(s.prefix_err, s.prefix_errors) << ',' << rate(s.packet_err, s.packet_errors) << ','
           << rate(s.worst_bit_pe, s.worst_bit_errors) << '\n';
      }
  }

 private:
  struct Node {
    std::vector<Cell> cells;
    std::vector<PacketCell> packets;
  };

  Node& node_at(int r) {
    auto [it, inserted] = nodes_.try_emplace(r);
    if (inserted) {
      it->second.cells.resize(static_cast<std::size_t>(num_bits_) * (max_delta_ + 1));
      it->second.packets.resize(static_cast<std::size_t>(num_packets()) * (max_delta_ + 1));
    }
    return it->second;
  }

  std::size_t cell_index(int n, int delta) const {
    return static_cast<std::size_t>(n) * (max_delta_ + 1) + static_cast<std::size_t>(delta);
  }
  std::size_t packet_index(int tau, int delta) const {
    return static_cast<std::size_t>(tau) * (max_delta_ + 1) + static_cast<std::size_t>(delta);
  }

  int num_bits_ = 0;
  int packet_bits_ = 1;
  int max_delta_ = 0;
  std::map<int, Node> nodes_;
};

/// Free-function form: tallies decoded vs truth bits at node r and time t.
inline void tally_errors(ErrorStats& stats, std::span<const std::uint8_t> decoded,
                         std::span<const std::uint8_t> truth, int r, int t,
                         std::span<const int> generation_times) {
  if (decoded.size() != truth.size()) throw std::invalid_argument("decoded and truth lengths differ");
  stats.tally(decoded, truth, r, t, generation_times);
}

/// Generation time of every bit when packets of psi bits arrive every T steps.
inline std::vector<int> bit_generation_times(int num_bits, int packet_bits, int period) {
  std::vector<int> out(static_cast<std::size_t>(num_bits));
  for (int n = 0; n < num_bits; ++n) out[n] = (n / packet_bits) * period;
  return out;
}

}  // namespace cascade_iv
