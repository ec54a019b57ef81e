#include <gtest/gtest.h>

#include "cascade_iv/experiment_config.hpp"

using namespace cascade_iv;

TEST(Config, DefaultsRoundTripByteIdentically) {
  const ExperimentConfig c;
  const std::string text = serialize_config(c);
  const ExperimentConfig back = parse_config(text);
  EXPECT_EQ(back, c);
  EXPECT_EQ(serialize_config(back), text);
}

TEST(Config, CustomValuesRoundTrip) {
  ExperimentConfig c;
  c.scheme = Scheme::PacketStream;
  c.snr = 0.1 + 0.2;
  c.rate = 1.0 / 3.0;
  c.packet_bits = 3;
  c.period = 5;
  c.relays = {4, 8, 12};
  c.velocities = {0.875, 1e-3};
  c.convention = HopConvention::Delayed;
  c.trials = 123456789012ull;
  c.seed = 18446744073709551615ull;
  c.noise = NoiseKind::Rademacher;
  c.threads = 7;
  c.rates = {0.1};
  c.snrs = {};
  c.out_dir = "results/run 1";
  const std::string text = serialize_config(c);
  const ExperimentConfig back = parse_config(text);
  EXPECT_EQ(back, c);
  EXPECT_EQ(serialize_config(back), text);
}

TEST(Config, ParsesCommentsAndWhitespace) {
  const auto c = parse_config(R"(# comment
[channel]
  snr =  4   # trailing
[network]
relays = 2, 3 ,4
velocities =
[monte_carlo]
noise = uniform
)");
  EXPECT_EQ(c.snr, 4.0);
  EXPECT_EQ(c.relays, (std::vector<int>{2, 3, 4}));
  EXPECT_TRUE(c.velocities.empty());
  EXPECT_EQ(c.noise, NoiseKind::UniformUnitVariance);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_config("[channel]\nsnrr = 3\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("[channel]\nsnr = three\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("[channel]\nsnr = -1\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("[channel\nsnr = 1\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("snr 1\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("[network]\nconvention = delayed\nvelocities = 1.5\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("[experiment]\nscheme = packet_stream\n[source]\nperiod = 0\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("[experiment]\nscheme = refined_source\n[source]\nrate = 0\n"), std::invalid_argument);
}

TEST(Config, SchemeNames) {
  for (auto s : {Scheme::SingleSample, Scheme::SinglePacket, Scheme::RefinedSource, Scheme::PacketStream})
    EXPECT_EQ(parse_scheme(to_string(s)), s);
  EXPECT_THROW(parse_scheme("relay"), std::invalid_argument);
}
