#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "cascade_iv/channel_params.hpp"

using namespace cascade_iv;

TEST(ChannelParams, UnitSnr) {
  const auto ch = make_channel_params(1.0);
  EXPECT_DOUBLE_EQ(ch.snr_bar, 0.5);
  EXPECT_DOUBLE_EQ(ch.capacity_nats, 0.5 * std::numbers::ln2);
}

TEST(ChannelParams, RejectsNonPositiveSnr) {
  EXPECT_THROW(make_channel_params(0.0), std::invalid_argument);
  EXPECT_THROW(make_channel_params(-1.0), std::invalid_argument);
  EXPECT_THROW(make_channel_params(std::nan("")), std::invalid_argument);
  EXPECT_THROW(make_channel_params(INFINITY), std::invalid_argument);
}

TEST(ChannelParams, SnrBarStaysBelowOne) {
  for (double p : {1e-8, 0.1, 1.0, 10.0, 1e6}) {
    const auto ch = make_channel_params(p);
    EXPECT_GT(ch.snr_bar, 0.0);
    EXPECT_LT(ch.snr_bar, 1.0);
    EXPECT_NEAR(ch.capacity_nats, 0.5 * std::log(1.0 + p), 1e-15 * std::max(1.0, ch.capacity_nats));
  }
}

TEST(StreamParams, EtaFromPacketsAndPeriod) {
  const auto ch = make_channel_params(10.0);
  const auto s = make_stream_params(4, 4, ch);
  EXPECT_DOUBLE_EQ(s.rate_nats, std::numbers::ln2);
  EXPECT_NEAR(s.eta, 4.0 / 11.0, 1e-15);
  EXPECT_TRUE(s.below_capacity);
  EXPECT_TRUE(s.is_packetized());
}

TEST(StreamParams, EtaAtCapacityIsOne) {
  const auto ch = make_channel_params(3.0);
  const auto s = make_stream_params_from_rate(ch.capacity_nats, ch);
  EXPECT_NEAR(s.eta, 1.0, 1e-15);
  EXPECT_FALSE(s.below_capacity);
}

TEST(StreamParams, RejectsBadInputs) {
  const auto ch = make_channel_params(1.0);
  EXPECT_THROW(make_stream_params(0, 1, ch), std::invalid_argument);
  EXPECT_THROW(make_stream_params(1, 0, ch), std::invalid_argument);
  EXPECT_THROW(make_stream_params_from_rate(-0.1, ch), std::invalid_argument);
}

TEST(Velocity, TranslatesBetweenConventions) {
  const Velocity v(3.0, HopConvention::Instantaneous);
  const Velocity d = translate_velocity(v, HopConvention::Delayed);
  EXPECT_EQ(d.convention(), HopConvention::Delayed);
  EXPECT_DOUBLE_EQ(d.value(), 0.75);
  const Velocity back = translate_velocity(d, HopConvention::Instantaneous);
  EXPECT_DOUBLE_EQ(back.value(), 3.0);
  EXPECT_EQ(translate_velocity(v, HopConvention::Instantaneous), v);
}

TEST(Velocity, RoundTripOnGrid) {
  for (double x = 0.01; x < 100.0; x *= 1.37) {
    const Velocity v(x, HopConvention::Instantaneous);
    const auto back = translate_velocity(translate_velocity(v, HopConvention::Delayed), HopConvention::Instantaneous);
    EXPECT_NEAR(back.value(), x, 1e-12 * x);
  }
}

TEST(Velocity, Validation) {
  EXPECT_THROW(Velocity(0.0, HopConvention::Instantaneous), std::invalid_argument);
  EXPECT_THROW(Velocity(1.0, HopConvention::Delayed), std::invalid_argument);
  EXPECT_NO_THROW(Velocity(5.0, HopConvention::Instantaneous));
}

TEST(HopConvention, ParseAndPrint) {
  EXPECT_EQ(parse_hop_convention("inst"), HopConvention::Instantaneous);
  EXPECT_EQ(parse_hop_convention("delayed"), HopConvention::Delayed);
  EXPECT_EQ(to_string(HopConvention::Delayed), "delayed");
  EXPECT_THROW(parse_hop_convention("late"), std::invalid_argument);
}
