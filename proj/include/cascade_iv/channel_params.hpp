#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cascade_iv {

/// Scalar bar map a -> a / (1 + a).
inline double bar(double a) { return a / (1.0 + a); }

/// Per-hop AWGN parameters. Every derived quantity is computed once from the
/// SNR and cached; rates are always in nats.
struct ChannelParams {
  double snr = 0.0;            // P, linear power ratio
  double snr_bar = 0.0;        // P / (1 + P)
  double capacity_nats = 0.0;  // ln(1 + P) / 2
};

inline ChannelParams make_channel_params(double snr) {
  if (!std::isfinite(snr) || !(snr > 0.0))
    throw std::invalid_argument("snr must be positive and finite");
  return ChannelParams{snr, bar(snr), 0.5 * std::log1p(snr)};
}

/// Packet source feeding node 0. packet_bits == period == 0 marks a
/// rate-only source (continuous refinement at rate_nats).
struct StreamParams {
  int packet_bits = 0;
  int period = 0;
  double rate_nats = 0.0;
  double eta = 0.0;  // (1 - P̄) e^{2R} = e^{-2(C - R)}
  bool below_capacity = false;

  bool is_packetized() const { return packet_bits > 0 && period > 0; }
};

inline StreamParams make_stream_params_from_rate(double rate_nats, const ChannelParams& channel) {
  if (!std::isfinite(rate_nats) || rate_nats < 0.0)
    throw std::invalid_argument("rate must be non-negative and finite");
  StreamParams s;
  s.rate_nats = rate_nats;
  s.eta = (1.0 - channel.snr_bar) * std::exp(2.0 * rate_nats);
  s.below_capacity = rate_nats < channel.capacity_nats;
  return s;
}

inline StreamParams make_stream_params(int packet_bits, int period, const ChannelParams& channel) {
  if (packet_bits < 1) throw std::invalid_argument("packet_bits must be >= 1");
  if (period < 1) throw std::invalid_argument("period must be >= 1");
  StreamParams s = make_stream_params_from_rate(
      static_cast<double>(packet_bits) * std::numbers::ln2 / static_cast<double>(period), channel);
  s.packet_bits = packet_bits;
  s.period = period;
  return s;
}

enum class HopConvention { Instantaneous, Delayed };

inline std::string_view to_string(HopConvention c) {
  return c == HopConvention::Instantaneous ? "inst" : "delayed";
}

inline HopConvention parse_hop_convention(std::string_view s) {
  if (s == "inst" || s == "instantaneous") return HopConvention::Instantaneous;
  if (s == "delayed") return HopConvention::Delayed;
  throw std::invalid_argument("unknown hop convention: " + std::string(s));
}

/// Relays per time step, tagged with the hop convention it is measured in.
class Velocity {
 public:
  Velocity(double value, HopConvention convention) : value_(value), convention_(convention) {
    if (!std::isfinite(value) || !(value > 0.0))
      throw std::invalid_argument("velocity must be positive and finite");
    if (convention == HopConvention::Delayed && !(value < 1.0))
      throw std::invalid_argument("delayed-hop velocity must be < 1");
  }

  double value() const { return value_; }
  HopConvention convention() const { return convention_; }

  friend bool operator==(const Velocity&, const Velocity&) = default;

 private:
  double value_;
  HopConvention convention_;
};

/// Instantaneous v <-> delayed v / (1 + v).
inline Velocity translate_velocity(const Velocity& v, HopConvention target) {
  if (v.convention() == target) return v;
  if (target == HopConvention::Delayed) return Velocity(bar(v.value()), HopConvention::Delayed);
  return Velocity(v.value() / (1.0 - v.value()), HopConvention::Instantaneous);
}

}  // namespace cascade_iv
