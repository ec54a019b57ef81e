#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "channel_params.hpp"
#include "csv.hpp"
#include "experiment_config.hpp"
#include "exponent_calculus.hpp"
#include "line_network_sim.hpp"
#include "monte_carlo.hpp"
#include "mse_lattice.hpp"
#include "pam_codec.hpp"

namespace cascade_iv {

/// Output of one command: named CSV files plus verification verdicts.
struct CommandResult {
  std::map<std::string, std::string> files;
  std::vector<Verdict> verdicts;
  std::vector<std::string> notes;

  bool passed() const { return all_passed(verdicts); }
  void add_verdicts(const std::string& file, std::vector<Verdict> more) {
    verdicts.insert(verdicts.end(), more.begin(), more.end());
    std::ostringstream os;
    write_verdicts_csv(os, verdicts);
    files[file] = os.str();
  }
};

/// Upper 3-sigma binomial check: p̂ - 3 sqrt(p̂(1-p̂)/n) <= bound.
inline bool within_binomial_3sigma(std::uint64_t errors, std::uint64_t trials, double bound) {
  if (trials == 0) return true;
  const double p = static_cast<double>(errors) / static_cast<double>(trials);
  return p - 3.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(trials)) <= bound;
}

/// Least-squares slope and R^2 of y on x.
struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;
};

inline LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LinearFit f;
  f.points = x.size();
  if (x.size() < 2) return f;
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) return f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r_squared = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

/// Relative gap between a grid cell and a closed-form value; cells where
/// either side has left the normal range are compared in the log domain.
inline double relative_discrepancy(double grid_value, double grid_log, const LogValue& closed) {
  if (grid_value > 1e-300 && closed.value > 1e-300) return std::abs(grid_value - closed.value) / closed.value;
  return std::abs(grid_log - closed.log_value);
}

// ---------------------------------------------------------------------------
// Single packet

struct PacketExperiment {
  ChannelParams channel;
  int packet_bits = 2;
  Velocity velocity{1.0, HopConvention::Instantaneous};
  std::vector<int> relays;
  int depth = 2;  // prefix depth n for the prefix-error columns
  NoiseModel noise;
  std::uint64_t trials = 100000;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct PacketRow {
  int r = 0;
  int t = 0;
  double analytic_mse = 0.0;
  double emp_mse = 0.0;
  std::uint64_t n_trials = 0;
  std::uint64_t packet_errors = 0;
  std::uint64_t prefix_errors = 0;
  std::uint64_t dithered_prefix_errors = 0;
  double chebyshev_bound = 0.0;
  double gaussian_bound = 0.0;
  double prefix_bound = 0.0;

  double packet_err() const { return n_trials ? static_cast<double>(packet_errors) / n_trials : 0.0; }
  double prefix_err() const { return n_trials ? static_cast<double>(prefix_errors) / n_trials : 0.0; }
  double dithered_prefix_err() const {
    return n_trials ? static_cast<double>(dithered_prefix_errors) / n_trials : 0.0;
  }
};

struct PacketResult {
  std::vector<PacketRow> rows;
  double iv_bound = 0.0;  // in the experiment's convention
  bool below_iv = false;
};

namespace detail {
struct PacketCounters {
  std::vector<std::uint64_t> packet, prefix, dithered;
  std::vector<Moment> mse;
  std::uint64_t trials = 0;

  explicit PacketCounters(std::size_t n = 0) : packet(n), prefix(n), dithered(n), mse(n) {}
  void merge(const PacketCounters& o) {
    for (std::size_t i = 0; i < packet.size(); ++i) {
      packet[i] += o.packet[i];
      prefix[i] += o.prefix[i];
      dithered[i] += o.dithered[i];
      mse[i].merge(o.mse[i]);
    }
    trials += o.trials;
  }
};
}  // namespace detail

/// Node r decodes the depth-ψ point S^ψ at real time floor(r / v) with the
/// slicer and with the dithered decoder.
inline PacketResult run_packet_experiment(const PacketExperiment& ex) {
  if (ex.relays.empty()) throw std::invalid_argument("packet experiment needs relays");
  if (ex.depth > ex.packet_bits) throw std::invalid_argument("prefix depth exceeds packet size");
  const HopConvention conv = ex.velocity.convention();
  std::vector<int> relays = ex.relays;
  std::sort(relays.begin(), relays.end());
  const int r_max = relays.back();
  std::vector<int> target_t(static_cast<std::size_t>(r_max) + 1, -1);
  std::vector<int> slot(target_t.size(), -1);
  int t_max = 0;
  for (std::size_t i = 0; i < relays.size(); ++i) {
    const int t = static_cast<int>(std::floor(relays[i] / ex.velocity.value()));
    target_t[relays[i]] = t;
    slot[relays[i]] = static_cast<int>(i);
    t_max = std::max(t_max, t);
  }
  const MseGrid grid = solve_grid(ex.channel, BoundaryCondition::single_sample(), r_max, t_max);
  const GainTable gains = precompute_gains(grid);
  const AlphaTable alpha(gains, conv);
  const SourceProcess source = SourceProcess::known_sample_random(ex.packet_bits);
  const double d_psi = pam_min_distance(ex.packet_bits);

  auto make = [&] { return detail::PacketCounters(relays.size()); };
  auto trial = [&](detail::PacketCounters& acc, std::uint64_t i) {
    const SourceRealization src = source.realize(ex.seed, i, t_max);
    const TrialRng noise_rng(ex.seed, i, RngDomain::ChannelNoise);
    const TrialRng dither_rng(ex.seed, i, RngDomain::Dither);
    run_trial_observed(gains, ex.noise, src, noise_rng, SimulationOptions{conv}, [&](const CellState& c) {
      if (c.r == 0 || target_t[c.r] != c.t) return;
      const auto k = static_cast<std::size_t>(slot[c.r]);
      const double estimate = src.value - c.error;
      acc.mse[k].add(c.error * c.error);
      const Bits hat = decode_bits(estimate, ex.packet_bits);
      const bool packet_bad = !std::equal(hat.begin(), hat.end(), src.bits.begin());
      const bool prefix_bad = !std::equal(hat.begin(), hat.begin() + ex.depth, src.bits.begin());
      const double dither = (dither_rng.uniform(static_cast<std::uint32_t>(c.r), static_cast<std::uint32_t>(c.t)) - 0.5) * d_psi;
      const Bits dith = dithered_decode_with(estimate, alpha(c.r, c.t), dither, ex.depth);
      const bool dith_bad = !std::equal(dith.begin(), dith.end(), src.bits.begin());
      acc.packet[k] += packet_bad;
      acc.prefix[k] += prefix_bad;
      acc.dithered[k] += dith_bad;
    });
    ++acc.trials;
  };
  const auto counts = run_blocks<detail::PacketCounters>(ex.trials, ex.threads, make, trial);

  PacketResult out;
  out.iv_bound = iv_lower_bound_single(ex.channel, conv);
  out.below_iv = ex.velocity.value() < out.iv_bound;
  for (std::size_t k = 0; k < relays.size(); ++k) {
    PacketRow row;
    row.r = relays[k];
    row.t = target_t[relays[k]];
    row.analytic_mse = analytic_mse(grid, row.r, row.t, conv);
    row.emp_mse = counts.mse[k].mean();
    row.n_trials = counts.trials;
    row.packet_errors = counts.packet[k];
    row.prefix_errors = counts.prefix[k];
    row.dithered_prefix_errors = counts.dithered[k];
    row.chebyshev_bound = packet_error_bound_chebyshev(row.analytic_mse, ex.packet_bits);
    row.gaussian_bound = packet_error_bound_gaussian(row.analytic_mse, ex.packet_bits);
    row.prefix_bound = prefix_error_bound(row.analytic_mse, ex.depth);
    out.rows.push_back(row);
  }
  return out;
}

/// Doubly-exponential diagnostic: log(-log p̂) against r over rows with at
/// least `min_errors` errors and p̂ < 1.
inline LinearFit packet_loglog_fit(const PacketResult& res, std::uint64_t min_errors = 10) {
  std::vector<double> x, y;
  for (const auto& row : res.rows) {
    const double p = row.packet_err();
    if (row.packet_errors < min_errors || !(p < 1.0)) continue;
    x.push_back(row.r);
    y.push_back(std::log(-std::log(p)));
  }
  return fit_line(x, y);
}

inline std::vector<Verdict> verify_packet(const PacketResult& res) {
  bool cheb = true, gauss = true, prefix = true, dith = true;
  for (const auto& row : res.rows) {
    cheb = cheb && within_binomial_3sigma(row.packet_errors, row.n_trials, row.chebyshev_bound);
    gauss = gauss && within_binomial_3sigma(row.packet_errors, row.n_trials, row.gaussian_bound);
    prefix = prefix && within_binomial_3sigma(row.prefix_errors, row.n_trials, row.prefix_bound);
    dith = dith && within_binomial_3sigma(row.dithered_prefix_errors, row.n_trials, row.prefix_bound);
  }
  const std::string points = std::to_string(res.rows.size()) + " relays";
  std::vector<Verdict> out{{"packet_error_below_chebyshev_bound", cheb, points},
                           {"packet_error_below_gaussian_bound", gauss, points},
                           {"prefix_error_below_prefix_bound", prefix, points + ", slicer"},
                           {"dithered_prefix_error_below_prefix_bound", dith, points + ", dithered decoder"}};
  if (res.below_iv) {
    const LinearFit fit = packet_loglog_fit(res);
    const bool ok = fit.points >= 3 && fit.slope > 0.0 && fit.r_squared >= 0.9;
    out.push_back({"doubly_exponential_trend", ok,
                   std::to_string(fit.points) + " uncensored points; slope=" + format_double(fit.slope) +
                       " r2=" + format_double(fit.r_squared)});
  }
  return out;
}

/// Error rate, or "<threshold" when fewer than 10 errors back it.
inline std::string censored_rate(std::uint64_t errors, std::uint64_t trials) {
  if (trials == 0) return "nan";
  if (errors < 10) return "<" + format_double(10.0 / static_cast<double>(trials));
  return format_double(static_cast<double>(errors) / static_cast<double>(trials));
}

inline void write_packet_csv(std::ostream& os, const PacketResult& res) {
  os << "r,t,analytic_mse,emp_mse,n_trials,packet_err,prefix_err,dithered_prefix_err,chebyshev_bound,"
        "gaussian_bound,prefix_bound,loglog_packet_err,below_iv\n";
  for (const auto& row : res.rows) {
    const double p = row.packet_err();
    const std::string loglog =
        row.packet_errors >= 10 && p < 1.0 ? format_double(std::log(-std::log(p))) : "censored";
    os << row.r << ',' << row.t << ',' << format_double(row.analytic_mse) << ',' << format_double(row.emp_mse)
       << ',' << row.n_trials << ',' << censored_rate(row.packet_errors, row.n_trials) << ','
       << censored_rate(row.prefix_errors, row.n_trials) << ','
       << censored_rate(row.dithered_prefix_errors, row.n_trials) << ',' << format_double(row.chebyshev_bound)
       << ',' << format_double(row.gaussian_bound) << ',' << format_double(row.prefix_bound) << ',' << loglog
       << ',' << (res.below_iv ? 1 : 0) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Packet streaming

struct StreamExperiment {
  ChannelParams channel;
  int packet_bits = 2;
  int period = 2;
  Velocity velocity{1.0, HopConvention::Instantaneous};
  std::vector<int> relays;
  int packets = 4;  // packets decoded per relay, τ = 0..packets-1
  NoiseModel noise;
  std::uint64_t trials = 100000;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct StreamRow {
  int r = 0;
  int delta = 0;
  std::uint64_t n_trials = 0;
  double worst_bit_pe = 0.0;
  std::uint64_t worst_bit_errors = 0;
  double packet_err = 0.0;
  std::uint64_t packet_errors = 0;
  double envelope_bound_raw = 0.0;  // sup over decoded packets of the prefix bound
  double asymptotic_bound = 0.0;    // exp(-r X(v)) from the per-relay envelope exponent
};

struct StreamResult {
  std::vector<StreamRow> rows;
  ErrorStats errors;
  double iv_bound = 0.0;  // 0 when R >= C
  bool below_iv = false;
};

/// Node r decodes packet τ (and everything before it) at real time
/// τT + floor(r / v); decisions use the exact offset from the true tail.
inline StreamResult run_stream_experiment(const StreamExperiment& ex) {
  if (ex.relays.empty()) throw std::invalid_argument("stream experiment needs relays");
  const HopConvention conv = ex.velocity.convention();
  std::vector<int> relays = ex.relays;
  std::sort(relays.begin(), relays.end());
  const int r_max = relays.back();
  std::vector<int> delta(static_cast<std::size_t>(r_max) + 1, -1);
  int max_delta = 0;
  for (int r : relays) {
    delta[r] = static_cast<int>(std::floor(r / ex.velocity.value()));
    max_delta = std::max(max_delta, delta[r]);
  }
  const int num_bits = ex.packet_bits * ex.packets;
  const int t_max = (ex.packets - 1) * ex.period + max_delta;
  const MseGrid grid = solve_grid(ex.channel, BoundaryCondition::packet_stream(ex.packet_bits, ex.period), r_max, t_max);
  const GainTable gains = precompute_gains(grid);
  const SourceProcess source = SourceProcess::packet_stream(ex.packet_bits, ex.period);
  const std::vector<int> gen = bit_generation_times(num_bits, ex.packet_bits, ex.period);

  auto make = [&] { return ErrorStats(num_bits, ex.packet_bits, t_max); };
  auto trial = [&](ErrorStats& acc, std::uint64_t i) {
    const SourceRealization src = source.realize(ex.seed, i, t_max);
    std::vector<double> tails(static_cast<std::size_t>(num_bits) + 1);
    tails[num_bits] = pam_tail(src.bits, num_bits);
    for (int n = num_bits; n-- > 0;)
      tails[n] = std::ldexp(src.bits[n] ? -kSqrt3 : kSqrt3, -(n + 1)) + tails[n + 1];
    const TrialRng noise_rng(ex.seed, i, RngDomain::ChannelNoise);
    std::vector<BitDecision> decisions;
    run_trial_observed(gains, ex.noise, src, noise_rng, SimulationOptions{conv}, [&](const CellState& c) {
      if (c.r == 0 || delta[c.r] < 0) return;
      const int since = c.t - delta[c.r];
      if (since < 0 || since % ex.period != 0) return;
      const int tau = since / ex.period;
      if (tau >= ex.packets) return;
      const int n_bits = (tau + 1) * ex.packet_bits;
      const SliceClamp clamp = slice_clamp(tails[0] - c.error);
      decisions.resize(static_cast<std::size_t>(n_bits));
      for (int n = 1; n <= n_bits; ++n)
        decisions[n - 1] = decide_bit(clamp, slice_shift(tails[n] - c.error, n), src.bits[n - 1],
                                      n > 1 && decisions[n - 2].prefix_error);
      acc.record(decisions, c.r, c.t, gen);
    });
  };
  StreamResult out;
  out.errors = run_blocks<ErrorStats>(ex.trials, ex.threads, make, trial);

  const double rate = ex.packet_bits * std::numbers::ln2 / ex.period;
  if (rate < ex.channel.capacity_nats) {
    out.iv_bound = iv_lower_bound_stream(ex.channel, rate, conv);
    out.below_iv = ex.velocity.value() < out.iv_bound;
  }
  const double v_inst = translate_velocity(ex.velocity, HopConvention::Instantaneous).value();
  double exponent = std::numeric_limits<double>::quiet_NaN();
  if (v_inst < ex.channel.snr) exponent = stream_envelope_exponent(ex.channel, rate, v_inst);

  for (int r : relays) {
    const auto s = out.errors.summarize(r, delta[r]);
    StreamRow row;
    row.r = r;
    row.delta = delta[r];
    row.n_trials = s.n_trials;
    row.worst_bit_pe = s.worst_bit_pe;
    row.worst_bit_errors = s.worst_bit_errors;
    row.packet_err = s.packet_err;
    row.packet_errors = s.packet_errors;
    for (int tau = 0; tau < ex.packets; ++tau) {
      const double m = analytic_mse(grid, r, tau * ex.period + delta[r], conv);
      row.envelope_bound_raw = std::max(row.envelope_bound_raw, prefix_error_bound_raw(m, (tau + 1) * ex.packet_bits));
    }
    row.asymptotic_bound = std::exp(-r * exponent);
    out.rows.push_back(row);
  }
  return out;
}

inline std::vector<Verdict> verify_stream(const StreamResult& res) {
  std::vector<Verdict> out;
  bool envelope = true;
  int checked = 0;
  for (const auto& row : res.rows) {
    if (!(row.envelope_bound_raw < 1.0)) continue;
    ++checked;
    envelope = envelope && within_binomial_3sigma(row.worst_bit_errors, row.n_trials, row.envelope_bound_raw);
  }
  out.push_back({"worst_bit_below_envelope", envelope, std::to_string(checked) + " unclamped points"});
  if (res.below_iv) {
    bool decreasing = true;
    std::string trace;
    for (std::size_t i = 0; i < res.rows.size(); ++i) {
      if (i) {
        trace += ' ';
        decreasing = decreasing && res.rows[i].worst_bit_pe < res.rows[i - 1].worst_bit_pe;
      }
      trace += format_double(res.rows[i].worst_bit_pe);
    }
    out.push_back({"worst_bit_strictly_decreasing", decreasing, trace});
  }
  return out;
}

inline void write_stream_csv(std::ostream& os, const StreamResult& res) {
  os << "r,delta,n_trials,worst_bit_pe,packet_err,envelope_bound,asymptotic_bound,below_iv\n";
  for (const auto& row : res.rows)
    os << row.r << ',' << row.delta << ',' << row.n_trials << ','
       << censored_rate(row.worst_bit_errors, row.n_trials) << ','
       << censored_rate(row.packet_errors, row.n_trials) << ','
       << format_double(std::min(row.envelope_bound_raw, 1.0)) << ','
       << format_double(std::min(row.asymptotic_bound, 1.0)) << ',' << (res.below_iv ? 1 : 0) << '\n';
}

// ---------------------------------------------------------------------------
// Commands

namespace detail {
inline std::string to_csv_string(auto&& writer) {
  std::ostringstream os;
  writer(os);
  return os.str();
}

inline std::vector<double> default_velocity_grid(double snr, int points) {
  std::vector<double> v;
  for (int i = 1; i <= points; ++i) v.push_back(1.5 * snr * i / points);
  return v;
}

inline bool non_increasing(const std::vector<std::pair<double, double>>& samples) {
  for (std::size_t i = 1; i < samples.size(); ++i)
    if (samples[i].second > samples[i - 1].second + 1e-12 * std::max(1.0, std::abs(samples[i - 1].second)))
      return false;
  return true;
}

inline BoundaryCondition boundary_for(const ExperimentConfig& cfg) {
  switch (cfg.scheme) {
    case Scheme::SingleSample:
    case Scheme::SinglePacket: return BoundaryCondition::single_sample();
    case Scheme::RefinedSource: return BoundaryCondition::exponential_refinement(cfg.rate);
    case Scheme::PacketStream: return BoundaryCondition::packet_stream(cfg.packet_bits, cfg.period);
  }
  throw std::logic_error("unknown scheme");
}

inline std::vector<int> relays_or_range(const ExperimentConfig& cfg) {
  if (!cfg.relays.empty()) return cfg.relays;
  std::vector<int> out(static_cast<std::size_t>(cfg.r_max));
  std::iota(out.begin(), out.end(), 1);
  return out;
}
}  // namespace detail

/// E1, E_S and their per-time forms on the velocity grid, one file per rate.
inline CommandResult cmd_exponents(const ExperimentConfig& cfg) {
  CommandResult res;
  const ChannelParams ch = make_channel_params(cfg.snr);
  std::vector<double> vs = cfg.velocities;
  if (vs.empty()) {
    const double top = cfg.convention == HopConvention::Delayed ? ch.snr_bar : ch.snr;
    for (int i = 1; i <= cfg.grid_points; ++i) {
      const double v = 1.5 * top * i / cfg.grid_points;
      if (cfg.convention == HopConvention::Instantaneous || v < 1.0) vs.push_back(v);
    }
  }
  std::sort(vs.begin(), vs.end());
  std::vector<Verdict> verdicts;
  for (double rate : cfg.rates) {
    std::ostringstream os;
    const auto e1c = sample_curve(CurveKind::E1, ch, rate, vs, cfg.convention);
    const auto esc = sample_curve(CurveKind::ES, ch, rate, vs, cfg.convention);
    e1c.write_csv(os);
    esc.write_csv(os, false);
    sample_curve(CurveKind::E1PerTime, ch, rate, vs, cfg.convention).write_csv(os, false);
    sample_curve(CurveKind::ESPerTime, ch, rate, vs, cfg.convention).write_csv(os, false);
    const std::string tag = "R=" + format_double(rate);
    res.files["exponents_R" + format_double(rate) + ".csv"] = os.str();

    verdicts.push_back({"monotone_columns " + tag, detail::non_increasing(e1c.samples) && detail::non_increasing(esc.samples), ""});
    if (rate >= ch.capacity_nats) {
      double worst = 0.0;
      for (std::size_t i = 0; i < vs.size(); ++i)
        worst = std::max(worst, std::abs(esc.samples[i].second - e1c.samples[i].second));
      verdicts.push_back({"es_equals_e1_above_capacity " + tag, worst == 0.0, "max gap " + format_double(worst)});
    } else {
      const double knee = es_knee_velocity(ch, rate);
      const double gap = std::abs(es(ch, rate, knee * (1.0 - 1e-12)) - es(ch, rate, knee * (1.0 + 1e-12)));
      verdicts.push_back({"es_continuous_at_knee " + tag, gap <= 1e-9, "jump " + format_double(gap)});
      const double lim = es_per_time(ch, rate, 1e-6);
      const double rel = std::abs(lim - 2.0 * rate) / (2.0 * rate);
      verdicts.push_back({"es_per_time_limit " + tag, rel <= 1e-4, "rel err " + format_double(rel)});
    }
  }
  const double lim1 = std::abs(e1_per_time(ch, 1e-6) - 2.0 * ch.capacity_nats) / (2.0 * ch.capacity_nats);
  verdicts.push_back({"e1_per_time_limit", lim1 <= 1e-4, "rel err " + format_double(lim1)});
  res.add_verdicts("exponents_verdicts.csv", std::move(verdicts));
  return res;
}

/// Streaming IV bound against R/C for every SNR, normalized by the
/// single-packet bound of the same convention.
inline CommandResult cmd_iv(const ExperimentConfig& cfg) {
  CommandResult res;
  std::ostringstream os;
  os << "snr,rate_over_capacity,rate_nats,iv,iv_normalized,linear_reference,convention\n";
  bool zero_ok = true, cap_ok = true;
  std::vector<Verdict> verdicts;
  for (double p : cfg.snrs) {
    const ChannelParams ch = make_channel_params(p);
    const double norm = iv_lower_bound_single(ch, cfg.convention);
    double worst_linear = 0.0;
    for (int i = 0; i < cfg.grid_points; ++i) {
      const double x = static_cast<double>(i) / (cfg.grid_points - 1);
      const double rate = x * ch.capacity_nats;
      const double gap = 2.0 * (ch.capacity_nats - rate);
      const double v = cfg.convention == HopConvention::Instantaneous ? std::expm1(gap) : -std::expm1(-gap);
      os << format_double(p) << ',' << format_double(x) << ',' << format_double(rate) << ',' << format_double(v)
         << ',' << format_double(v / norm) << ',' << format_double(1.0 - x) << ',' << to_string(cfg.convention)
         << '\n';
      if (i == 0) zero_ok = zero_ok && std::abs(v / norm - 1.0) <= 1e-12;
      if (i == cfg.grid_points - 1) cap_ok = cap_ok && v == 0.0;
      worst_linear = std::max(worst_linear, std::abs(v / norm - (1.0 - x)));
    }
    if (p <= 0.01)
      verdicts.push_back({"low_snr_linear P=" + format_double(p), worst_linear < 0.02,
                          "max deviation " + format_double(worst_linear)});
  }
  verdicts.insert(verdicts.begin(), {{"iv_at_zero_rate", zero_ok, "V(0) equals the single-packet bound"},
                                     {"iv_at_capacity", cap_ok, "V(C) = 0"}});
  res.files["iv.csv"] = os.str();
  res.add_verdicts("iv_verdicts.csv", std::move(verdicts));
  return res;
}

/// Lattice grid plus the closed form of the configured scheme.
inline CommandResult cmd_mse(const ExperimentConfig& cfg) {
  CommandResult res;
  const ChannelParams ch = make_channel_params(cfg.snr);
  const BoundaryCondition boundary = detail::boundary_for(cfg);
  const MseGrid grid = solve_grid(ch, boundary, cfg.r_max, cfg.t_max);
  res.files["mse_grid.csv"] = detail::to_csv_string([&](std::ostream& os) { grid.write_csv(os); });

  std::vector<Verdict> verdicts;
  if (boundary.kind() != BoundaryKind::PacketStream) {
    std::ostringstream os;
    os << "r,t,grid,closed_form,relative_discrepancy\n";
    double worst = 0.0;
    for (int r = 1; r <= cfg.r_max; ++r)
      for (int t = 0; t <= cfg.t_max; ++t) {
        const LogValue cf = boundary.kind() == BoundaryKind::SingleSample
                                ? closed_form_single(ch, r, t)
                                : closed_form_streaming(ch, boundary.rate_nats(), r, t).total();
        const double d = relative_discrepancy(grid(r, t), grid.log_value(r, t), cf);
        worst = std::max(worst, d);
        os << r << ',' << t << ',' << format_double(grid(r, t)) << ',' << format_double(cf.value) << ','
           << format_double(d) << '\n';
      }
    res.files["mse_compare.csv"] = os.str();
    verdicts.push_back({"closed_form_matches_grid", worst <= 1e-9, "max discrepancy " + format_double(worst)});
  }
  if (boundary.kind() == BoundaryKind::SingleSample) {
    double worst = 0.0;
    for (int r = 1; r <= cfg.r_max; ++r)
      worst = std::max(worst, std::abs(grid(r, 0) - (1.0 - std::pow(ch.snr_bar, r))));
    verdicts.push_back({"first_column", worst <= 1e-12, "max gap " + format_double(worst)});
  } else if (boundary.kind() == BoundaryKind::PacketStream) {
    bool ok = true;
    for (int t = 0; t <= cfg.t_max; ++t)
      ok = ok && grid(0, t) == std::ldexp(1.0, -2 * cfg.packet_bits * (t / cfg.period + 1));
    verdicts.push_back({"staircase_boundary", ok, ""});
  }
  res.add_verdicts("mse_verdicts.csv", std::move(verdicts));
  return res;
}

inline SimulationSpec simulation_spec_for(const ExperimentConfig& cfg) {
  SimulationSpec spec;
  spec.channel = make_channel_params(cfg.snr);
  spec.noise = NoiseModel{cfg.noise};
  spec.r_max = cfg.r_max;
  spec.t_max = cfg.t_max;
  spec.convention = cfg.convention;
  switch (cfg.scheme) {
    case Scheme::SingleSample: spec.source = SourceProcess::known_sample_random(); break;
    case Scheme::RefinedSource: spec.source = SourceProcess::refinement(cfg.rate); break;
    case Scheme::PacketStream: spec.source = SourceProcess::packet_stream(cfg.packet_bits, cfg.period); break;
    case Scheme::SinglePacket:
      throw std::invalid_argument("simulate needs a unit-variance source: single_sample, refined_source or packet_stream");
  }
  return spec;
}

/// Monte Carlo aggregates and theory-vs-simulation verdicts.
inline CommandResult cmd_simulate(const ExperimentConfig& cfg, const SimulationChecks& checks = {}) {
  CommandResult res;
  const SimulationSpec spec = simulation_spec_for(cfg);
  const MseGrid grid = solve_grid(spec.channel, spec.source.boundary(), spec.r_max, spec.t_max);
  const GainTable gains = precompute_gains(grid);
  const auto agg = run_monte_carlo(spec, gains, cfg.trials, cfg.seed, resolve_parallelism(cfg.threads));
  res.files["simulate_aggregate.csv"] = detail::to_csv_string([&](std::ostream& os) { agg.write_csv(os); });

  const auto src = spec.source.realize(cfg.seed, 0, spec.t_max);
  const auto trial0 = run_trial(gains, spec.noise, src, TrialRng(cfg.seed, 0, RngDomain::ChannelNoise),
                                SimulationOptions{spec.convention}, true);
  res.files["trace.csv"] = detail::to_csv_string([&](std::ostream& os) { write_trace_csv(os, trial0.trace); });
  res.add_verdicts("simulate_verdicts.csv", verify_simulation(agg, grid, gains, spec.channel, spec.convention, checks));
  return res;
}

inline CommandResult cmd_packet(const ExperimentConfig& cfg) {
  CommandResult res;
  PacketExperiment ex;
  ex.channel = make_channel_params(cfg.snr);
  ex.packet_bits = cfg.packet_bits;
  const double v = cfg.velocities.empty() ? 0.5 * iv_lower_bound_single(ex.channel, cfg.convention)
                                          : cfg.velocities.front();
  ex.velocity = Velocity(v, cfg.convention);
  ex.relays = detail::relays_or_range(cfg);
  ex.depth = std::min(cfg.depth, cfg.packet_bits);
  ex.noise = NoiseModel{cfg.noise};
  ex.trials = cfg.trials;
  ex.seed = cfg.seed;
  ex.threads = resolve_parallelism(cfg.threads);
  const PacketResult pr = run_packet_experiment(ex);
  if (!pr.below_iv) res.notes.push_back("velocity at or above the single-packet IV bound; convergence not asserted");
  res.files["packet.csv"] = detail::to_csv_string([&](std::ostream& os) { write_packet_csv(os, pr); });
  res.add_verdicts("packet_verdicts.csv", verify_packet(pr));
  return res;
}

inline CommandResult cmd_stream(const ExperimentConfig& cfg) {
  CommandResult res;
  StreamExperiment ex;
  ex.channel = make_channel_params(cfg.snr);
  ex.packet_bits = cfg.packet_bits;
  ex.period = cfg.period;
  const double rate = cfg.packet_bits * std::numbers::ln2 / cfg.period;
  double v;
  if (!cfg.velocities.empty()) {
    v = cfg.velocities.front();
  } else {
    if (rate >= ex.channel.capacity_nats)
      throw std::invalid_argument("rate >= capacity: no velocity to suggest; set network.velocities to force one");
    v = 0.5 * iv_lower_bound_stream(ex.channel, rate, cfg.convention);
  }
  ex.velocity = Velocity(v, cfg.convention);
  ex.relays = detail::relays_or_range(cfg);
  ex.packets = cfg.packets;
  ex.noise = NoiseModel{cfg.noise};
  ex.trials = cfg.trials;
  ex.seed = cfg.seed;
  ex.threads = resolve_parallelism(cfg.threads);
  const StreamResult sr = run_stream_experiment(ex);
  if (!sr.below_iv) res.notes.push_back("velocity not below the streaming IV bound; decay not asserted");
  res.files["stream.csv"] = detail::to_csv_string([&](std::ostream& os) { write_stream_csv(os, sr); });
  res.files["stream_errors.csv"] = detail::to_csv_string([&](std::ostream& os) { sr.errors.write_csv(os); });
  res.add_verdicts("stream_verdicts.csv", verify_stream(sr));
  return res;
}

/// Every command whose preconditions the config meets, with verdict names
/// prefixed by the command.
inline CommandResult cmd_verify(const ExperimentConfig& cfg) {
  CommandResult all;
  auto absorb = [&](const std::string& name, const CommandResult& r) {
    for (const auto& [file, body] : r.files) all.files[file] = body;
    for (auto v : r.verdicts) {
      v.name = name + "." + v.name;
      all.verdicts.push_back(std::move(v));
    }
    for (const auto& n : r.notes) all.notes.push_back(name + ": " + n);
  };
  absorb("exponents", cmd_exponents(cfg));
  absorb("iv", cmd_iv(cfg));
  absorb("mse", cmd_mse(cfg));
  if (cfg.scheme != Scheme::SinglePacket) absorb("simulate", cmd_simulate(cfg));
  if (cfg.scheme == Scheme::SinglePacket) absorb("packet", cmd_packet(cfg));
  if (cfg.scheme == Scheme::PacketStream) absorb("stream", cmd_stream(cfg));
  all.add_verdicts("verify_verdicts.csv", {});
  return all;
}

}  // namespace cascade_iv
