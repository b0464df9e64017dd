#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <thread>

#include "gef/portfolio.hpp"

namespace {

std::vector<gef::CalibrationSample> line_samples(double slope, double intercept, std::size_t lo, std::size_t hi) {
  std::vector<gef::CalibrationSample> s;
  for (auto k = lo; k <= hi; ++k) s.push_back({16, k, 0, slope * static_cast<double>(k) + intercept, true});
  return s;
}

TEST(DeriveSeed, DistinctAcrossAgents) {
  for (std::uint64_t seed : {0ULL, 1ULL, 0xFFFFFFFFFFFFFFFFULL, 12345ULL}) {
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 100000; ++i) seen.insert(gef::derive_seed(seed, i));
    EXPECT_EQ(seen.size(), 100000u);
  }
}

TEST(RunPortfolio, SingleAgentMatchesPlainSearch) {
  const auto inst = gef::make_nqueens(20);
  const auto cfg = gef::SearchConfig::defaults_for(20);
  const auto r = gef::run_portfolio(inst, 1, cfg, 77);
  auto solo_cfg = cfg;
  solo_cfg.seed = gef::derive_seed(77, 0);
  const auto solo = gef::gef_solve(inst, solo_cfg);
  ASSERT_TRUE(r.winner);
  EXPECT_EQ(*r.winner, 0u);
  EXPECT_EQ(r.outcome.status, solo.status);
  EXPECT_EQ(r.outcome.assignment, solo.assignment);
  EXPECT_EQ(r.outcome.stats.steps, solo.stats.steps);
}

TEST(RunPortfolio, ThreeAgentsOneWinner) {
  const auto inst = gef::make_nqueens(8);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = gef::run_portfolio(inst, 3, gef::SearchConfig::defaults_for(8), seed);
    ASSERT_TRUE(r.winner);
    EXPECT_LT(*r.winner, 3u);
    EXPECT_EQ(r.outcome.status, gef::SearchStatus::Solved);
    EXPECT_TRUE(gef::validate_solution(inst, r.outcome.assignment));
    ASSERT_EQ(r.per_agent.size(), 3u);
    EXPECT_EQ(r.per_agent[*r.winner].status, gef::SearchStatus::Solved);
  }
}

TEST(RunPortfolio, LosersAreStoppedOnHardInstances) {
  // With many agents on a larger board, most losers should be cut short
  // rather than all finishing; every agent has terminated on return.
  const auto inst = gef::make_nqueens(64);
  const auto r = gef::run_portfolio(inst, 6, gef::SearchConfig::defaults_for(64), 5);
  ASSERT_TRUE(r.winner);
  for (std::size_t i = 0; i < r.per_agent.size(); ++i) {
    if (i == *r.winner) continue;
    const auto st = r.per_agent[i].status;
    EXPECT_TRUE(st == gef::SearchStatus::Stopped || st == gef::SearchStatus::Solved) << i;
  }
}

TEST(RunPortfolio, UnsolvableExhaustsEveryBudget) {
  auto cfg = gef::SearchConfig::defaults_for(3);
  cfg.max_restarts = 3;
  const auto r = gef::run_portfolio(gef::make_nqueens(3), 4, cfg, 1);
  EXPECT_FALSE(r.winner);
  EXPECT_EQ(r.outcome.status, gef::SearchStatus::Unsolved);
  for (const auto& a : r.per_agent) EXPECT_EQ(a.status, gef::SearchStatus::Unsolved);
}

TEST(RunPortfolio, ExternalStopCancelsEveryAgent) {
  auto cfg = gef::SearchConfig::defaults_for(3);
  cfg.max_restarts = 0;
  std::stop_source src;
  std::jthread stopper([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    src.request_stop();
  });
  const auto r = gef::run_portfolio(gef::make_nqueens(3), 3, cfg, 2, src.get_token());
  EXPECT_FALSE(r.winner);
  EXPECT_EQ(r.outcome.status, gef::SearchStatus::Stopped);
  for (const auto& a : r.per_agent) EXPECT_EQ(a.status, gef::SearchStatus::Stopped);
}

TEST(RunPortfolio, RejectsZeroAgents) {
  EXPECT_THROW(gef::run_portfolio(gef::make_nqueens(8), 0, gef::SearchConfig::defaults_for(8), 0),
               std::invalid_argument);
}

TEST(RunPortfolio, ThreeAgentsNoSlowerThanOneOnMulticore) {
  if (std::thread::hardware_concurrency() < 2) GTEST_SKIP() << "single core: dominance not expected";
  const auto inst = gef::make_nqueens(48);
  const auto cfg = gef::SearchConfig::defaults_for(48);
  std::vector<double> one, three;
  for (std::uint64_t t = 0; t < 30; ++t) {
    one.push_back(gef::run_portfolio(inst, 1, cfg, t).wall_time.count());
    three.push_back(gef::run_portfolio(inst, 3, cfg, t + 1000).wall_time.count());
  }
  std::nth_element(one.begin(), one.begin() + 15, one.end());
  std::nth_element(three.begin(), three.begin() + 15, three.end());
  RecordProperty("median_one_ms", std::to_string(one[15]));
  RecordProperty("median_three_ms", std::to_string(three[15]));
  EXPECT_LE(three[15], one[15]);
}

TEST(LinearRegression, Examples) {
  const auto a = gef::linear_regression({{1, 5}, {2, 3}, {3, 1}});
  EXPECT_NEAR(a.slope, -2, 1e-12);
  EXPECT_NEAR(a.intercept, 7, 1e-12);
  ASSERT_TRUE(a.x_intercept);
  EXPECT_NEAR(*a.x_intercept, 3.5, 1e-12);

  const auto b = gef::linear_regression({{0, 0}, {1, 1}});
  EXPECT_NEAR(b.slope, 1, 1e-12);
  EXPECT_NEAR(b.intercept, 0, 1e-12);
  EXPECT_NEAR(*b.x_intercept, 0, 1e-12);

  EXPECT_THROW(gef::linear_regression({{1, 1}, {1, 2}}), gef::DegenerateRegression);
  EXPECT_THROW(gef::linear_regression({{1, 1}}), gef::DegenerateRegression);

  const auto flat = gef::linear_regression({{1, 2}, {2, 2}, {3, 2}});
  EXPECT_EQ(flat.slope, 0);
  EXPECT_FALSE(flat.x_intercept);
}

TEST(Calibration, ExactFallingLineCrossesAtThree) {
  const auto r = gef::calibration_from_samples(line_samples(-2, 6, 1, 5), 20);
  EXPECT_NEAR(*r.x_intercept, 3.0, 1e-9);
  EXPECT_EQ(r.max_agent, 3u);
  EXPECT_FALSE(r.flagged);
}

TEST(Calibration, RisingLineIsFlagged) {
  const auto r = gef::calibration_from_samples(line_samples(1, 5, 1, 5), 20);
  EXPECT_TRUE(r.flagged);
  EXPECT_EQ(r.max_agent, 1u);
}

TEST(Calibration, HalfRoundsUp) {
  const auto r = gef::calibration_from_samples({{16, 1, 0, 5, true}, {16, 2, 0, 3, true}, {16, 3, 0, 1, true}}, 20);
  EXPECT_NEAR(r.slope, -2, 1e-12);
  EXPECT_NEAR(r.intercept, 7, 1e-12);
  EXPECT_NEAR(*r.x_intercept, 3.5, 1e-12);
  EXPECT_EQ(r.max_agent, 4u);
}

TEST(Calibration, ClampsToRange) {
  EXPECT_EQ(gef::calibration_from_samples(line_samples(-1, 100, 1, 5), 8).max_agent, 8u);
  EXPECT_EQ(gef::calibration_from_samples(line_samples(-1, 0.2, 1, 5), 8).max_agent, 1u);
}

TEST(Calibration, SingleAgentCountIsDegenerate) {
  EXPECT_THROW(gef::calibration_from_samples({{8, 2, 0, 1, true}, {8, 2, 1, 2, true}}), gef::DegenerateRegression);
}

TEST(Calibration, UsesEverySampleNotAverages) {
  // Two samples at k=1 and one at k=3: OLS over raw points differs from the
  // fit through per-k means.
  const auto r = gef::calibration_from_samples({{8, 1, 0, 4, true}, {8, 1, 1, 6, true}, {8, 3, 0, 1, true}}, 20);
  const auto direct = gef::linear_regression({{1, 4}, {1, 6}, {3, 1}});
  EXPECT_DOUBLE_EQ(r.slope, direct.slope);
  EXPECT_DOUBLE_EQ(r.intercept, direct.intercept);
  EXPECT_EQ(r.empirical_best_agents, 3u);
}

TEST(Calibration, EndToEndOnSmallBoards) {
  const auto r = gef::calibrate_max_agents({8}, {1, 3}, 2, std::nullopt, 9);
  EXPECT_EQ(r.samples.size(), 6u);
  EXPECT_GE(r.max_agent, 1u);
  EXPECT_LE(r.max_agent, 3u);
  for (const auto& s : r.samples) EXPECT_TRUE(s.solved);
  EXPECT_THROW(gef::calibrate_max_agents({8}, {1, 1}, 2), std::invalid_argument);
  EXPECT_THROW(gef::calibrate_max_agents({8}, {1, 3}, 0), std::invalid_argument);
}

TEST(Homogenization, TableValues) {
  EXPECT_EQ(gef::homogenized_agent_count(std::log(1000.0)), 6u);
  EXPECT_EQ(gef::homogenized_agent_count(std::log(4000.0)), 3u);
  EXPECT_EQ(gef::homogenized_agent_count(8.294), 3u);
  EXPECT_EQ(gef::homogenized_agent_count(std::log(6900.0)), 1u);
}

TEST(Homogenization, ClampsAndCaps) {
  EXPECT_EQ(gef::homogenized_agent_count(0.001), 6u);  // (7000 - ~1)/1000
  EXPECT_EQ(gef::homogenized_agent_count(50.0), 1u);
  EXPECT_EQ(gef::homogenized_agent_count(1000.0), 1u);  // e^p overflows
  gef::HomogenizationParams wide;
  wide.numerator = 20000;
  EXPECT_EQ(gef::homogenized_agent_count(1.0, wide), 8u);
  EXPECT_THROW(gef::homogenized_agent_count(std::nan("")), std::invalid_argument);
  EXPECT_THROW(gef::homogenized_agent_count(INFINITY), std::invalid_argument);
  EXPECT_THROW(gef::homogenized_agent_count(0.0), std::invalid_argument);
}

TEST(Homogenization, NonIncreasingInPerformance) {
  std::size_t prev = gef::homogenized_agent_count(0.05);
  for (int i = 1; i <= 100; ++i) {
    const auto k = gef::homogenized_agent_count(0.05 + 0.1 * i);
    EXPECT_LE(k, prev);
    prev = k;
  }
}

TEST(PerformanceProbe, PositiveAndRejectsBadDuration) {
  const auto p = gef::performance_probe(std::chrono::milliseconds(50));
  EXPECT_GT(p.p, 0);
  EXPECT_GE(p.probe_duration, std::chrono::milliseconds(50));
  EXPECT_THROW(gef::performance_probe(std::chrono::milliseconds(0)), std::invalid_argument);
  EXPECT_THROW(gef::performance_probe(std::chrono::milliseconds(-5)), std::invalid_argument);
}

TEST(PerformanceProbe, RepeatedProbesAgree) {
  const auto a = gef::performance_probe(std::chrono::milliseconds(200));
  const auto b = gef::performance_probe(std::chrono::milliseconds(200));
  EXPECT_LE(std::abs(a.p - b.p), 0.2 * std::max(a.p, b.p));
}

}  // namespace
