#include <cmath>
#include <cstdlib>
#include <sstream>

#include <gtest/gtest.h>

#include "cascade_iv/monte_carlo.hpp"

using namespace cascade_iv;

namespace {

struct SumAcc {
  CompensatedSum sum;
  std::uint64_t n = 0;
  void merge(const SumAcc& o) {
    sum.merge(o.sum);
    n += o.n;
  }
};

SimulationSpec small_spec(NoiseKind kind) {
  SimulationSpec spec;
  spec.channel = make_channel_params(4.0);
  spec.noise = NoiseModel{kind};
  spec.r_max = 3;
  spec.t_max = 8;
  spec.source = SourceProcess::refinement(0.3);
  return spec;
}

std::string aggregate_csv(const SimulationSpec& spec, int threads) {
  const auto g = precompute_gains(solve_grid(spec.channel, spec.source.boundary(), spec.r_max, spec.t_max));
  std::ostringstream os;
  run_monte_carlo(spec, g, 3000, 17, threads).write_csv(os);
  return os.str();
}

}  // namespace

TEST(Moment, MeanAndStandardError) {
  Moment m;
  for (double x : {1.0, 2.0, 3.0, 4.0}) m.add(x);
  EXPECT_EQ(m.count(), 4u);
  EXPECT_DOUBLE_EQ(m.mean(), 2.5);
  EXPECT_NEAR(m.variance(), 5.0 / 3.0, 1e-15);
  EXPECT_NEAR(m.standard_error(), std::sqrt(5.0 / 12.0), 1e-15);
}

TEST(RunBlocks, SameResultForAnyThreadCount) {
  auto make = [] { return SumAcc{}; };
  auto fn = [](SumAcc& acc, std::uint64_t i) {
    acc.sum.add(std::sin(static_cast<double>(i)) * 1e-3 + 1.0 / (1.0 + i));
    ++acc.n;
  };
  const auto ref = run_blocks<SumAcc>(10007, 1, make, fn, 64);
  EXPECT_EQ(ref.n, 10007u);
  for (int threads : {2, 3, 8, 16}) {
    const auto other = run_blocks<SumAcc>(10007, threads, make, fn, 64);
    EXPECT_EQ(other.sum.value(), ref.sum.value());
    EXPECT_EQ(other.n, ref.n);
  }
}

TEST(RunBlocks, PropagatesExceptions) {
  auto make = [] { return SumAcc{}; };
  auto fn = [](SumAcc&, std::uint64_t i) {
    if (i == 500) throw std::runtime_error("boom");
  };
  EXPECT_THROW(run_blocks<SumAcc>(1000, 4, make, fn, 16), std::runtime_error);
  EXPECT_THROW(run_blocks<SumAcc>(1000, 1, make, fn, 16), std::runtime_error);
}

TEST(Parallelism, EnvironmentCap) {
  ::setenv("CASCADE_IV_THREADS", "3", 1);
  EXPECT_EQ(resolve_parallelism(16), 3);
  EXPECT_EQ(resolve_parallelism(2), 2);
  ::setenv("CASCADE_IV_THREADS", "junk", 1);
  EXPECT_EQ(resolve_parallelism(5), 5);
  ::unsetenv("CASCADE_IV_THREADS");
  EXPECT_GE(resolve_parallelism(0), 1);
}

TEST(MonteCarlo, BitIdenticalAcrossParallelism) {
  for (auto kind : {NoiseKind::Gaussian, NoiseKind::Rademacher}) {
    const auto spec = small_spec(kind);
    const std::string one = aggregate_csv(spec, 1);
    EXPECT_EQ(aggregate_csv(spec, 4), one);
    EXPECT_EQ(aggregate_csv(spec, 16), one);
  }
}

TEST(MonteCarlo, RejectsMismatchedGains) {
  const auto spec = small_spec(NoiseKind::Gaussian);
  const auto g = precompute_gains(solve_grid(spec.channel, spec.source.boundary(), 2, spec.t_max));
  EXPECT_THROW(run_monte_carlo(spec, g, 10, 1, 1), std::invalid_argument);
  const auto ok = precompute_gains(solve_grid(spec.channel, spec.source.boundary(), spec.r_max, spec.t_max));
  EXPECT_THROW(run_monte_carlo(spec, ok, 0, 1, 1), std::invalid_argument);
}

TEST(MonteCarlo, VerdictsOnModerateRun) {
  for (auto kind : {NoiseKind::Gaussian, NoiseKind::UniformUnitVariance, NoiseKind::Rademacher}) {
    const auto spec = small_spec(kind);
    const auto grid = solve_grid(spec.channel, spec.source.boundary(), spec.r_max, spec.t_max);
    const auto g = precompute_gains(grid);
    const auto agg = run_monte_carlo(spec, g, 20000, 5, 1);
    const auto verdicts = verify_simulation(agg, grid, g, spec.channel, spec.convention);
    ASSERT_EQ(verdicts.size(), 5u);
    EXPECT_EQ(verdicts.back().name, "per_step_identity");
    EXPECT_TRUE(verdicts.back().passed) << verdicts.back().detail;
    for (int r = 1; r <= spec.r_max; ++r)
      for (int t = 0; t <= spec.t_max; ++t) {
        const auto& c = agg.cell(r, t).squared_error;
        EXPECT_NEAR(c.mean(), grid(r, t), 5.0 * c.standard_error());
      }
  }
}

TEST(MonteCarlo, AggregateCsvHeader) {
  const std::string csv = aggregate_csv(small_spec(NoiseKind::Gaussian), 1);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "r,t,emp_mse,emp_power,stderr_mse,n_trials");
}

TEST(ZCheck, CountsFailures) {
  ZCheck z{"demo"};
  z.add(0.1, 1.0, 1, 1);
  z.add(4.0, 1.0, 2, 3);
  z.add(0.0, 0.0, 1, 2);
  const auto v = z.verdict();
  EXPECT_FALSE(v.passed);
  EXPECT_EQ(z.failed, 1);
  EXPECT_EQ(z.worst_cell, "(2;3)");
}
