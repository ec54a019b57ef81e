#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "cascade_iv/line_network_sim.hpp"
#include "cascade_iv/monte_carlo.hpp"

using namespace cascade_iv;

namespace {
const ChannelParams kP10 = make_channel_params(10.0);
const NoiseModel kSilent{NoiseKind::Gaussian, true};
}  // namespace

TEST(Gains, FirstHopAmplifiesBySqrtSnr) {
  const auto g = precompute_gains(solve_grid(kP10, BoundaryCondition::single_sample(), 3, 3));
  EXPECT_NEAR(g.beta(0, 0), std::sqrt(10.0), 1e-14);
  EXPECT_FALSE(g.silent(0, 0));
}

TEST(Gains, HandValuesAtSecondHop) {
  // Hop 1 at t=1: gap = M_2(0) - M_1(1) = 21/121 - 1/121.
  const auto g = precompute_gains(solve_grid(kP10, BoundaryCondition::single_sample(), 3, 3));
  const double gap = 20.0 / 121.0;
  EXPECT_NEAR(g.beta(1, 1), std::sqrt(10.0 / gap), 1e-12);
  EXPECT_NEAR(g.gamma(1, 1), std::sqrt(10.0 * gap) / 11.0, 1e-15);
}

TEST(Gains, ProductIsSnrBar) {
  for (const auto& b : {BoundaryCondition::single_sample(), BoundaryCondition::exponential_refinement(0.4),
                        BoundaryCondition::packet_stream(2, 2)}) {
    const auto g = precompute_gains(solve_grid(kP10, b, 8, 30));
    for (int hop = 0; hop < 8; ++hop)
      for (int t = 0; t <= 30; ++t)
        if (!g.silent(hop, t)) {
          EXPECT_NEAR(g.beta(hop, t) * g.gamma(hop, t), kP10.snr_bar, 1e-14);
        }
  }
}

TEST(Gains, CorruptedGridAborts) {
  auto grid = solve_grid(kP10, BoundaryCondition::single_sample(), 2, 2);
  grid.at(1, 1) = 0.9;
  EXPECT_THROW(precompute_gains(grid), std::runtime_error);
}

TEST(Gains, UnderflowSilencesHops) {
  const auto ch = make_channel_params(1e6);
  const auto grid = solve_grid(ch, BoundaryCondition::single_sample(), 2, 60);
  const auto g = precompute_gains(grid);
  EXPECT_GT(g.silent_count(), 0u);
  const auto src = SourceProcess::known_sample(0.7).realize_from_bits({}, 60);
  for (auto kind : {NoiseKind::Gaussian, NoiseKind::Rademacher}) {
    const auto res = run_trial(g, NoiseModel{kind}, src, TrialRng(1, 0, RngDomain::ChannelNoise));
    for (double e : res.squared_errors) EXPECT_TRUE(std::isfinite(e));
  }
}

TEST(Source, KnownSampleIsConstant) {
  const auto s = SourceProcess::known_sample(0.3).realize_from_bits({}, 5);
  for (int t = 0; t <= 5; ++t) EXPECT_EQ(s.estimate(t), 0.3);
}

TEST(Source, PacketStreamStaircase) {
  Bits bits(100, 1);
  for (int i = 0; i < 4; ++i) bits[i] = 0;
  const auto s = SourceProcess::packet_stream(4, 4).realize_from_bits(bits, 7);
  for (int t = 0; t < 4; ++t) EXPECT_NEAR(s.estimate(t), kSqrt3 * 15.0 / 16.0, 1e-15);
  // Second packet of ones lowers the estimate by √3 (1/32 + ... + 1/256).
  EXPECT_NEAR(s.estimate(4), kSqrt3 * (15.0 / 16.0 - 15.0 / 256.0), 1e-15);
}

TEST(Source, RefinementSequenceLength) {
  const auto src = SourceProcess::refinement_sequence(1.0, {0.5, 0.75});
  EXPECT_NO_THROW(src.realize_from_bits({}, 1));
  EXPECT_THROW(src.realize_from_bits({}, 2), std::invalid_argument);
  EXPECT_NEAR(src.realize_from_bits({}, 1).errors[1], 0.25, 1e-15);
}

TEST(Source, RefinementSecondMoments) {
  const double rate = 0.45;
  const auto src = SourceProcess::refinement(rate);
  const int t_max = 6, n = 200000;
  std::vector<double> sq(t_max + 1, 0.0), cross(t_max + 1, 0.0);
  double s_e = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto r = src.realize(77, i, t_max);
    for (int t = 0; t <= t_max; ++t) sq[t] += r.errors[t] * r.errors[t];
    for (int t = 1; t <= t_max; ++t) cross[t] += r.errors[t] * r.errors[t - 1];
    s_e += r.value * r.errors[2];
  }
  for (int t = 0; t <= t_max; ++t) {
    const double m = std::exp(-2.0 * rate * (t + 1));
    EXPECT_NEAR(sq[t] / n, m, 6.0 * m * std::sqrt(4.0 / n)) << t;
    if (t > 0) {
      EXPECT_NEAR(cross[t] / n, m, 6.0 * m * std::sqrt(4.0 / n)) << t;
    }
  }
  EXPECT_NEAR(s_e / n, std::exp(-6.0 * rate), 0.01);
}

TEST(Trial, NoiseFreeFirstRelay) {
  const auto g = precompute_gains(solve_grid(kP10, BoundaryCondition::single_sample(), 2, 2));
  const double s = 1.3;
  const auto src = SourceProcess::known_sample(s).realize_from_bits({}, 2);
  const auto res = run_trial(g, kSilent, src, TrialRng(0, 0, RngDomain::ChannelNoise), {}, true);
  const double e = (1.0 - kP10.snr_bar) * s;
  EXPECT_NEAR(res.squared_error(1, 0), e * e, 1e-15);
  bool found = false;
  for (const auto& row : res.trace)
    if (row.r == 1 && row.t == 0) {
      EXPECT_NEAR(row.estimate, kP10.snr_bar * s, 1e-15);
      found = true;
    }
  EXPECT_TRUE(found);
}

TEST(Trial, PerStepIdentityAllNoiseKinds) {
  const auto g = precompute_gains(solve_grid(kP10, BoundaryCondition::exponential_refinement(0.5), 6, 25));
  const auto source = SourceProcess::refinement(0.5);
  for (auto kind : {NoiseKind::Gaussian, NoiseKind::UniformUnitVariance, NoiseKind::Rademacher})
    for (auto conv : {HopConvention::Instantaneous, HopConvention::Delayed})
      for (std::uint64_t i = 0; i < 50; ++i) {
        const auto src = source.realize(3, i, 25);
        const auto res = run_trial(g, NoiseModel{kind}, src, TrialRng(3, i, RngDomain::ChannelNoise), {conv});
        for (double m : res.max_identity_residual_per_node) ASSERT_LE(m, 1e-12);
      }
}

TEST(Trial, ObserverVisitsEveryCellOnceInTimeOrder) {
  const auto g = precompute_gains(solve_grid(kP10, BoundaryCondition::single_sample(), 4, 9));
  const auto src = SourceProcess::known_sample(0.5).realize_from_bits({}, 9);
  for (auto conv : {HopConvention::Instantaneous, HopConvention::Delayed}) {
    std::vector<int> visits(5 * 10, 0), last_t(5, -1);
    run_trial_observed(g, NoiseModel{}, src, TrialRng(1, 1, RngDomain::ChannelNoise), {conv},
                       [&](const CellState& c) {
                         ++visits[c.r * 10 + c.t];
                         EXPECT_GT(c.t, last_t[c.r]);
                         last_t[c.r] = c.t;
                       });
    for (int v : visits) EXPECT_EQ(v, 1);
  }
}

TEST(Alpha, EqualsOneMinusMse) {
  const auto grid = solve_grid(kP10, BoundaryCondition::single_sample(), 6, 12);
  const auto g = precompute_gains(grid);
  const AlphaTable inst(g, HopConvention::Instantaneous);
  const AlphaTable del(g, HopConvention::Delayed);
  for (int r = 1; r <= 6; ++r)
    for (int t = 0; t <= 12; ++t) {
      EXPECT_NEAR(inst(r, t), 1.0 - grid(r, t), 1e-12);
      EXPECT_NEAR(del(r, t), 1.0 - analytic_mse(grid, r, t, HopConvention::Delayed), 1e-12);
    }
}

TEST(Trial, DelayedIsClockShiftedInstantaneous) {
  const auto g = precompute_gains(solve_grid(kP10, BoundaryCondition::single_sample(), 4, 12));
  const auto src = SourceProcess::known_sample(0.9).realize_from_bits({}, 12);
  const auto inst = run_trial(g, kSilent, src, TrialRng(0, 0, RngDomain::ChannelNoise));
  const auto del = run_trial(g, kSilent, src, TrialRng(0, 0, RngDomain::ChannelNoise), {HopConvention::Delayed});
  for (int r = 1; r <= 4; ++r)
    for (int t = r; t <= 12; ++t) EXPECT_EQ(del.squared_error(r, t), inst.squared_error(r, t - r));
  EXPECT_DOUBLE_EQ(del.squared_error(3, 2), 0.81);
}

TEST(Trial, ShortSourceRejected) {
  const auto g = precompute_gains(solve_grid(kP10, BoundaryCondition::single_sample(), 2, 5));
  const auto src = SourceProcess::known_sample(0.9).realize_from_bits({}, 3);
  EXPECT_THROW(run_trial(g, kSilent, src, TrialRng(0, 0, RngDomain::ChannelNoise)), std::invalid_argument);
}

TEST(Trial, TraceCsv) {
  std::ostringstream os;
  write_trace_csv(os, {{0, 1, 1.0, 1.5, 0.5, 0.25}});
  EXPECT_EQ(os.str(), "t,r,x,y,z,estimate\n0,1,1,1.5,0.5,0.25\n");
}

TEST(MonteCarlo, EmpiricalMseNearGridSmallRun) {
  SimulationSpec spec;
  spec.channel = kP10;
  spec.r_max = 3;
  spec.t_max = 6;
  const auto grid = solve_grid(kP10, BoundaryCondition::single_sample(), 3, 6);
  const auto g = precompute_gains(grid);
  const auto agg = run_monte_carlo(spec, g, 20000, 99, 1);
  for (int r = 1; r <= 3; ++r)
    for (int t = 0; t <= 6; ++t) {
      const auto& c = agg.cell(r, t).squared_error;
      EXPECT_NEAR(c.mean(), grid(r, t), 5.0 * c.standard_error()) << r << ' ' << t;
    }
  for (int hop = 0; hop < 3; ++hop) EXPECT_NEAR(agg.cell(hop, 3).power.mean(), 10.0, 5.0 * agg.cell(hop, 3).power.standard_error());
}
