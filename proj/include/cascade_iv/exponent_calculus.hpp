#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "channel_params.hpp"
#include "csv.hpp"
#include "numerics.hpp"

namespace cascade_iv {

namespace detail {
inline void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error(std::string(name) + " must lie in [0,1]");
}
// x log(x / y) with 0 log 0 = 0.
inline double xlogxy(double x, double y) {
  if (x == 0.0) return 0.0;
  if (y == 0.0) return std::numeric_limits<double>::infinity();
  return x * std::log(x / y);
}
}  // namespace detail

/// h(p) in nats.
inline double binary_entropy(double p) {
  detail::check_probability(p, "p");
  return -detail::xlogxy(p, 1.0) - detail::xlogxy(1.0 - p, 1.0);
}

/// d(p||q) in nats.
inline double binary_divergence(double p, double q) {
  detail::check_probability(p, "p");
  detail::check_probability(q, "q");
  return detail::xlogxy(p, q) + detail::xlogxy(1.0 - p, 1.0 - q);
}

/// Single-sample MSE exponent per relay: d(v̄||P̄)/v̄ below P, zero above.
inline double e1(const ChannelParams& ch, double v) {
  if (!(v > 0.0)) throw std::invalid_argument("velocity must be positive");
  if (v >= ch.snr) return 0.0;
  const double vb = bar(v);
  return binary_divergence(vb, ch.snr_bar) / vb;
}

inline double stream_eta(const ChannelParams& ch, double rate_nats) {
  return std::exp(-2.0 * (ch.capacity_nats - rate_nats));
}

/// Velocity (1-η)/η where the refinement-limited region of E_S ends.
inline double es_knee_velocity(const ChannelParams& ch, double rate_nats) {
  return std::expm1(2.0 * (ch.capacity_nats - rate_nats));
}

/// Refined-source MSE exponent per relay. For R >= C the first region is
/// empty and this is e1.
inline double es(const ChannelParams& ch, double rate_nats, double v) {
  if (!(v > 0.0)) throw std::invalid_argument("velocity must be positive");
  if (!(rate_nats > 0.0)) throw std::invalid_argument("rate must be positive");
  const double eta = stream_eta(ch, rate_nats);
  if (eta >= 1.0 || v > es_knee_velocity(ch, rate_nats)) return e1(ch, v);
  const double one_m_eta = 1.0 - eta;
  return binary_divergence(one_m_eta, ch.snr_bar) / one_m_eta + 2.0 * rate_nats * (1.0 / v - eta / one_m_eta);
}

/// Per-time-step forms v*E(v); these stay finite as v -> 0.
inline double e1_per_time(const ChannelParams& ch, double v) { return v * e1(ch, v); }
inline double es_per_time(const ChannelParams& ch, double rate_nats, double v) {
  return v * es(ch, rate_nats, v);
}

/// Exponent of the boundary-driven sum terms:
/// Ẽ(δ) = (1+δ) d(δ̄ || 1-P̄) - 2Rδ.
inline double e_tilde(const ChannelParams& ch, double rate_nats, double delta) {
  if (!(delta >= 0.0)) throw std::invalid_argument("delta must be non-negative");
  return (1.0 + delta) * binary_divergence(bar(delta), 1.0 - ch.snr_bar) - 2.0 * rate_nats * delta;
}

/// Unconstrained minimiser η/(1-η) of Ẽ; only exists below capacity.
inline double delta_star(const ChannelParams& ch, double rate_nats) {
  const double eta = stream_eta(ch, rate_nats);
  if (!(eta < 1.0)) throw std::domain_error("delta_star undefined for rate >= capacity");
  return eta / (1.0 - eta);
}

/// Minimiser of the convex Ẽ over (0, upper], located by bisection on the
/// sign of Ẽ'(δ) = log(δ̄/η).
inline double argmin_e_tilde(const ChannelParams& ch, double rate_nats, double upper) {
  if (!(upper > 0.0)) throw std::invalid_argument("upper must be positive");
  const double log_eta = -2.0 * (ch.capacity_nats - rate_nats);
  auto slope = [&](double d) { return std::log(bar(d)) - log_eta; };
  if (slope(upper) <= 0.0) return upper;
  double lo = 0.0, hi = upper;
  for (int i = 0; i < 200 && hi - lo > 1e-16 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (slope(mid) > 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Boundary-part exponent: inf_{δ in (0,1/v]} Ẽ(δ) + 2R/v. Equals es(v) on (0, P].
inline double e2(const ChannelParams& ch, double rate_nats, double v) {
  if (!(v > 0.0)) throw std::invalid_argument("velocity must be positive");
  const double d = argmin_e_tilde(ch, rate_nats, 1.0 / v);
  return e_tilde(ch, rate_nats, d) + 2.0 * rate_nats / v;
}

// Error-probability bounds on the analytic MSE. The *_raw forms are unclamped.

inline double packet_error_bound_chebyshev_raw(double mse, int packet_bits) {
  return std::ldexp(mse, 2 * packet_bits) / 3.0;
}
inline double packet_error_bound_chebyshev(double mse, int packet_bits) {
  return std::clamp(packet_error_bound_chebyshev_raw(mse, packet_bits), 0.0, 1.0);
}

/// Sub-Gaussian (Chernoff-Hoeffding) packet bound, 2 exp(-3 / (2^{2ψ+1} mse)).
inline double packet_error_bound_gaussian_raw(double mse, int packet_bits) {
  if (mse <= 0.0) return 0.0;
  return 2.0 * std::exp(-3.0 / std::ldexp(mse, 2 * packet_bits + 1));
}
inline double packet_error_bound_gaussian(double mse, int packet_bits) {
  return std::clamp(packet_error_bound_gaussian_raw(mse, packet_bits), 0.0, 1.0);
}

/// Prefix bound for the first n bits, uniform in packet size.
inline double prefix_error_bound_raw(double mse, int n) {
  return 2.0 / std::sqrt(3.0) * std::ldexp(std::sqrt(std::max(mse, 0.0)), n);
}
inline double prefix_error_bound(double mse, int n) { return std::clamp(prefix_error_bound_raw(mse, n), 0.0, 1.0); }

struct EnvelopeOptions {
  int grid_points = 512;
  double theta_min = 1e-6;
  double theta_max = 1e6;
  double tolerance = 1e-10;
};

/// First-region value of the streaming envelope, valid for v <= (1-η)/η:
/// (1/(1-η)) (d(1-η||P̄)/2 - ηR) + R/v.
inline double stream_envelope_first_region(const ChannelParams& ch, double rate_nats, double v) {
  const double eta = stream_eta(ch, rate_nats);
  return (binary_divergence(1.0 - eta, ch.snr_bar) / 2.0 - eta * rate_nats) / (1.0 - eta) + rate_nats / v;
}

/// Per-relay exponent of the worst-bit streaming bound,
///   inf_{θ >= 0} [ E_S(v/(1+θ))/2 - θR/v ],
/// where θ = t0/Δ is the relative age of the decoded packet. A negative
/// return means the bound is vacuous at this velocity.
inline double stream_envelope_exponent(const ChannelParams& ch, double rate_nats, double v,
                                       const EnvelopeOptions& opt = {}) {
  if (!(v > 0.0 && v < ch.snr)) throw std::invalid_argument("velocity must lie in (0, P)");
  if (!(rate_nats > 0.0)) throw std::invalid_argument("rate must be positive");
  auto objective = [&](double theta) {
    return 0.5 * es(ch, rate_nats, v / (1.0 + theta)) - theta * rate_nats / v;
  };

  std::vector<double> thetas{0.0};
  const double ratio = std::pow(opt.theta_max / opt.theta_min, 1.0 / (opt.grid_points - 1));
  for (int i = 0; i < opt.grid_points; ++i) thetas.push_back(opt.theta_min * std::pow(ratio, i));

  std::size_t best = 0;
  double best_val = objective(thetas[0]);
  for (std::size_t i = 1; i < thetas.size(); ++i) {
    const double f = objective(thetas[i]);
    if (f < best_val) {
      best_val = f;
      best = i;
    }
  }

  // Golden-section on the bracket around the best grid point.
  double a = thetas[best == 0 ? 0 : best - 1];
  double b = thetas[std::min(best + 1, thetas.size() - 1)];
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = objective(c), fd = objective(d);
  while (b - a > opt.tolerance * std::max(1.0, std::abs(a))) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = objective(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = objective(d);
    }
  }
  return std::min({best_val, fc, fd});
}

/// Achievable information-velocity lower bounds.
inline double iv_lower_bound_single(const ChannelParams& ch, HopConvention convention) {
  const Velocity v(ch.snr, HopConvention::Instantaneous);
  return translate_velocity(v, convention).value();
}

inline double iv_lower_bound_stream(const ChannelParams& ch, double rate_nats, HopConvention convention) {
  if (!(rate_nats < ch.capacity_nats))
    throw std::domain_error("no positive streaming velocity bound for rate >= capacity");
  const Velocity v(es_knee_velocity(ch, rate_nats), HopConvention::Instantaneous);
  return translate_velocity(v, convention).value();
}

/// E1PerTime and ESPerTime are v*E1(v) and v*E_S(v).
enum class CurveKind { E1, ES, E1PerTime, ESPerTime, StreamEnvelope };

inline std::string_view to_string(CurveKind k) {
  switch (k) {
    case CurveKind::E1: return "E1";
    case CurveKind::ES: return "ES";
    case CurveKind::E1PerTime: return "E1_per_time";
    case CurveKind::ESPerTime: return "ES_per_time";
    case CurveKind::StreamEnvelope: return "StreamEnvelope";
  }
  return "?";
}

struct ExponentCurve {
  CurveKind kind = CurveKind::E1;
  double rate_nats = 0.0;
  ChannelParams channel;
  HopConvention convention = HopConvention::Instantaneous;
  std::vector<std::pair<double, double>> samples;  // (velocity, exponent)

  void write_csv(std::ostream& os, bool header = true) const {
    if (header) os << "v,exponent,kind,convention\n";
    for (const auto& [v, e] : samples)
      os << format_double(v) << ',' << format_double(e) << ',' << to_string(kind) << ','
         << to_string(convention) << '\n';
  }
};

/// Samples a curve on caller-supplied velocities given in `convention`;
/// delayed velocities are evaluated through the v̄ <-> v variable change.
inline ExponentCurve sample_curve(CurveKind kind, const ChannelParams& ch, double rate_nats,
                                  std::span<const double> velocities, HopConvention convention) {
  ExponentCurve curve{kind, rate_nats, ch, convention, {}};
  for (double v : velocities) {
    const double inst = translate_velocity(Velocity(v, convention), HopConvention::Instantaneous).value();
    double value = 0.0;
    switch (kind) {
      case CurveKind::E1: value = e1(ch, inst); break;
      case CurveKind::ES: value = es(ch, rate_nats, inst); break;
      case CurveKind::E1PerTime: value = e1_per_time(ch, inst); break;
      case CurveKind::ESPerTime: value = es_per_time(ch, rate_nats, inst); break;
      case CurveKind::StreamEnvelope: value = stream_envelope_exponent(ch, rate_nats, inst); break;
    }
    curve.samples.emplace_back(v, value);
  }
  return curve;
}

}  // namespace cascade_iv
