#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "channel_params.hpp"
#include "csv.hpp"
#include "rng.hpp"

namespace cascade_iv {

enum class Scheme { SingleSample, SinglePacket, RefinedSource, PacketStream };

inline std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::SingleSample: return "single_sample";
    case Scheme::SinglePacket: return "single_packet";
    case Scheme::RefinedSource: return "refined_source";
    case Scheme::PacketStream: return "packet_stream";
  }
  return "?";
}

inline Scheme parse_scheme(std::string_view s) {
  if (s == "single_sample") return Scheme::SingleSample;
  if (s == "single_packet") return Scheme::SinglePacket;
  if (s == "refined_source") return Scheme::RefinedSource;
  if (s == "packet_stream") return Scheme::PacketStream;
  throw std::invalid_argument("unknown scheme '" + std::string(s) + "'");
}

/// Every experiment knob. Files are flat `key = value` lines under
/// `[section]` headers; `#` starts a comment. Lists are comma separated.
struct ExperimentConfig {
  // [experiment]
  Scheme scheme = Scheme::SingleSample;
  // [channel]
  double snr = 10.0;
  // [source]
  double rate = 0.5;  // nats per channel use
  int packet_bits = 2;
  int period = 2;
  // [network]
  int r_max = 5;
  int t_max = 20;
  std::vector<int> relays;
  std::vector<double> velocities;
  HopConvention convention = HopConvention::Instantaneous;
  // [monte_carlo]
  std::uint64_t trials = 100000;
  std::uint64_t seed = 1;
  NoiseKind noise = NoiseKind::Gaussian;
  int threads = 0;
  // [curves]
  std::vector<double> rates{0.1, 0.5, 1.0, 1.5};
  std::vector<double> snrs{0.01, 0.1, 1.0, 10.0, 100.0};
  int grid_points = 101;
  // [decode]
  int depth = 2;
  int packets = 4;
  // [output]
  std::string out_dir = "out";

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(std::string_view text, std::string_view key) {
  T value{};
  const std::string s = trim(text);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument("bad value '" + s + "' for " + std::string(key));
  return value;
}

template <typename T>
std::vector<T> parse_list(std::string_view text, std::string_view key) {
  std::vector<T> out;
  const std::string s = trim(text);
  if (s.empty()) return out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = s.find(',', start);
    out.push_back(parse_number<T>(std::string_view(s).substr(start, comma - start), key));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
std::string format_value(const T& v) {
  if constexpr (std::is_floating_point_v<T>)
    return format_double(v);
  else
    return std::to_string(v);
}

template <typename T>
std::string format_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_value(v[i]);
  }
  return out;
}

}  // namespace detail

/// Canonical text form; parse(serialize(c)) == c and serialize is a fixed
/// point of parse for canonical input.
inline std::string serialize_config(const ExperimentConfig& c) {
  using detail::format_list;
  using detail::format_value;
  std::ostringstream os;
  os << "[experiment]\nscheme = " << to_string(c.scheme) << "\n\n";
  os << "[channel]\nsnr = " << format_value(c.snr) << "\n\n";
  os << "[source]\nrate = " << format_value(c.rate) << "\npacket_bits = " << c.packet_bits
     << "\nperiod = " << c.period << "\n\n";
  os << "[network]\nr_max = " << c.r_max << "\nt_max = " << c.t_max << "\nrelays = " << format_list(c.relays)
     << "\nvelocities = " << format_list(c.velocities) << "\nconvention = " << to_string(c.convention) << "\n\n";
  os << "[monte_carlo]\ntrials = " << c.trials << "\nseed = " << c.seed << "\nnoise = " << to_string(c.noise)
     << "\nthreads = " << c.threads << "\n\n";
  os << "[curves]\nrates = " << format_list(c.rates) << "\nsnrs = " << format_list(c.snrs)
     << "\ngrid_points = " << c.grid_points << "\n\n";
  os << "[decode]\ndepth = " << c.depth << "\npackets = " << c.packets << "\n\n";
  os << "[output]\ndir = " << c.out_dir << "\n";
  return os.str();
}

inline void validate_config(const ExperimentConfig& c) {
  auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
  if (!(c.snr > 0.0) || !std::isfinite(c.snr)) fail("snr must be positive");
  if (!(c.rate >= 0.0) || !std::isfinite(c.rate)) fail("rate must be non-negative");
  if (c.scheme == Scheme::RefinedSource && !(c.rate > 0.0)) fail("refined_source needs rate > 0");
  if ((c.scheme == Scheme::PacketStream || c.scheme == Scheme::SinglePacket) && c.packet_bits < 1)
    fail("packet schemes need packet_bits >= 1");
  if (c.scheme == Scheme::PacketStream && c.period < 1) fail("packet_stream needs period >= 1");
  if (c.packet_bits > 62) fail("packet_bits must be <= 62");
  if (c.r_max < 1) fail("r_max must be >= 1");
  if (c.t_max < 0) fail("t_max must be >= 0");
  for (int r : c.relays)
    if (r < 1) fail("relays must be >= 1");
  for (double v : c.velocities) {
    if (!(v > 0.0) || !std::isfinite(v)) fail("velocities must be positive");
    if (c.convention == HopConvention::Delayed && !(v < 1.0)) fail("delayed-hop velocities must be < 1");
  }
  for (double p : c.snrs)
    if (!(p > 0.0)) fail("snrs must be positive");
  for (double r : c.rates)
    if (!(r > 0.0)) fail("rates must be positive");
  if (c.trials < 1) fail("trials must be >= 1");
  if (c.threads < 0) fail("threads must be >= 0");
  if (c.grid_points < 2) fail("grid_points must be >= 2");
  if (c.depth < 1) fail("depth must be >= 1");
  if (c.packets < 1) fail("packets must be >= 1");
}

inline ExperimentConfig parse_config(std::istream& in) {
  using detail::parse_list;
  using detail::parse_number;
  ExperimentConfig c;
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string text = detail::trim(line);
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw std::invalid_argument("line " + std::to_string(line_no) + ": bad section");
      section = detail::trim(std::string_view(text).substr(1, text.size() - 2));
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = section + "." + detail::trim(std::string_view(text).substr(0, eq));
    const std::string value = detail::trim(std::string_view(text).substr(eq + 1));

    if (key == "experiment.scheme") c.scheme = parse_scheme(value);
    else if (key == "channel.snr") c.snr = parse_number<double>(value, key);
    else if (key == "source.rate") c.rate = parse_number<double>(value, key);
    else if (key == "source.packet_bits") c.packet_bits = parse_number<int>(value, key);
    else if (key == "source.period") c.period = parse_number<int>(value, key);
    else if (key == "network.r_max") c.r_max = parse_number<int>(value, key);
    else if (key == "network.t_max") c.t_max = parse_number<int>(value, key);
    else if (key == "network.relays") c.relays = parse_list<int>(value, key);
    else if (key == "network.velocities") c.velocities = parse_list<double>(value, key);
    else if (key == "network.convention") c.convention = parse_hop_convention(value);
    else if (key == "monte_carlo.trials") c.trials = parse_number<std::uint64_t>(value, key);
    else if (key == "monte_carlo.seed") c.seed = parse_number<std::uint64_t>(value, key);
    else if (key == "monte_carlo.noise") c.noise = parse_noise_kind(value);
    else if (key == "monte_carlo.threads") c.threads = parse_number<int>(value, key);
    else if (key == "curves.rates") c.rates = parse_list<double>(value, key);
    else if (key == "curves.snrs") c.snrs = parse_list<double>(value, key);
    else if (key == "curves.grid_points") c.grid_points = parse_number<int>(value, key);
    else if (key == "decode.depth") c.depth = parse_number<int>(value, key);
    else if (key == "decode.packets") c.packets = parse_number<int>(value, key);
    else if (key == "output.dir") c.out_dir = value;
    else throw std::invalid_argument("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  validate_config(c);
  return c;
}

inline ExperimentConfig parse_config(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_config(in);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  return parse_config(in);
}

}  // namespace cascade_iv
