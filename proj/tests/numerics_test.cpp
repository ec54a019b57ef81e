#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "cascade_iv/csv.hpp"
#include "cascade_iv/numerics.hpp"

using namespace cascade_iv;

TEST(LogAddExp, MatchesDirectSum) {
  EXPECT_NEAR(log_add_exp(std::log(2.0), std::log(3.0)), std::log(5.0), 1e-15);
  EXPECT_EQ(log_add_exp(kNegInf, 1.5), 1.5);
  EXPECT_EQ(log_add_exp(-2.0, kNegInf), -2.0);
  EXPECT_NEAR(log_add_exp(-1000.0, -1000.0), -1000.0 + std::log(2.0), 1e-12);
}

TEST(LogSumExp, SurvivesUnderflow) {
  std::vector<double> terms{-800.0, -801.0, -802.0};
  const double expect = -800.0 + std::log(1.0 + std::exp(-1.0) + std::exp(-2.0));
  EXPECT_NEAR(log_sum_exp(terms), expect, 1e-12);
  std::vector<double> none{kNegInf, kNegInf};
  EXPECT_EQ(log_sum_exp(none), kNegInf);
}

TEST(LogBinomial, SmallValuesExact) {
  EXPECT_NEAR(std::exp(log_binomial(10, 3)), 120.0, 1e-10);
  EXPECT_NEAR(std::exp(log_binomial(52, 5)), 2598960.0, 1e-5);
  EXPECT_EQ(log_binomial(3, 4), kNegInf);
  EXPECT_EQ(log_binomial(7, 0), 0.0);
}

TEST(CompensatedSum, RecoversLostBits) {
  CompensatedSum s;
  s.add(1.0);
  for (int i = 0; i < 1000; ++i) s.add(1e-16);
  s.add(-1.0);
  EXPECT_NEAR(s.value(), 1e-13, 1e-20);
}

TEST(CompensatedSum, MergeEqualsSequential) {
  CompensatedSum a, b, all;
  for (int i = 0; i < 100; ++i) {
    const double x = std::sin(i) * std::pow(10.0, i % 7);
    (i < 50 ? a : b).add(x);
    all.add(x);
  }
  a.merge(b);
  EXPECT_NEAR(a.value(), all.value(), 1e-9);
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(10.0), "10");
  EXPECT_EQ(format_double(std::nan("")), "nan");
  EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);
}
