#include <gtest/gtest.h>

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <limits>
#include <vector>

#include "tcd/detectors.hpp"
#include "tcd/model.hpp"
#include "tcd/rng.hpp"

using namespace tcd;

namespace {

std::vector<double> gaussian_llrs(std::uint64_t seed, int n, double shift = 0.0) {
  RngStream rng(seed, 0);
  GaussianModel g(1.0, 1.0);
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(g.llr(shift + rng.normal()));
  return out;
}

// log max_{1<=k<=n} prod_{j=k..n} (1 - rho) Lambda_j, straight from the definition.
double brute_force_log_v(const std::vector<double>& llr, std::size_t n, double rho) {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k <= n; ++k) {
    double s = 0.0;
    for (std::size_t j = k; j <= n; ++j) s += llr[j - 1] + std::log1p(-rho);
    best = std::max(best, s);
  }
  return best;
}

// Stop time of WL-CUSUM by rescanning every suffix at every step.
std::optional<std::int64_t> wl_rescan(const std::vector<double>& llr, const std::vector<double>& a, double offset) {
  const auto L = a.size();
  for (std::size_t n = L; n <= llr.size(); ++n) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k <= L; ++k) {
      double s = 0.0;
      for (std::size_t t = n - k + 1; t <= n; ++t) s += llr[t - 1];
      best = std::max(best, s - a[k - 1]);
    }
    if (best >= offset) return static_cast<std::int64_t>(n);
  }
  return std::nullopt;
}

std::optional<std::int64_t> stop_time(Detector d, const std::vector<double>& inc) {
  return run_to_stop(d, inc, static_cast<std::int64_t>(inc.size())).stop_time;
}

}  // namespace

TEST(ModifiedCusum, FirstStepFromInitialCondition) {
  auto d = ModifiedCusum::with_threshold(0.1, 100.0);
  EXPECT_DOUBLE_EQ(d.value(), 1.0);
  d.step(std::log(2.0));
  EXPECT_NEAR(d.value(), 1.8, 1e-15);
}

TEST(ModifiedCusum, MatchesMaxFormOnRandomSequences) {
  for (double rho : {0.05, 0.1, 0.25}) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto llr = gaussian_llrs(seed, 20, seed % 2 ? 1.0 : 0.0);
      ModifiedCusum d(rho, std::numeric_limits<double>::infinity());
      for (std::size_t n = 1; n <= llr.size(); ++n) {
        d.step(llr[n - 1]);
        const double expect = brute_force_log_v(llr, n, rho);
        EXPECT_NEAR(std::exp(d.statistic() - expect), 1.0, 1e-9);
      }
    }
  }
}

TEST(ModifiedCusum, ZeroRhoIsBitIdenticalToCusum) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto llr = gaussian_llrs(100 + seed, 200, 0.3);
    ModifiedCusum a(0.0, 3.0);
    Cusum b(3.0);
    for (double x : llr) {
      const auto ra = a.step(x);
      const auto rb = b.step(x);
      ASSERT_EQ(a.statistic(), b.statistic());
      ASSERT_EQ(ra.stopped, rb.stopped);
      ASSERT_EQ(ra.stop_time, rb.stop_time);
      if (ra.stopped) break;
    }
  }
}

TEST(Cusum, DirectRecursion) {
  auto d = Cusum::with_threshold(0.6);
  const auto r = d.step(std::log(0.5));
  EXPECT_NEAR(d.value(), 0.5, 1e-15);
  EXPECT_FALSE(r.stopped);
}

TEST(Cusum, FloorKeepsStatisticAtLeastCurrentRatio) {
  const auto llr = gaussian_llrs(7, 500);
  Cusum d(std::numeric_limits<double>::infinity());
  for (double x : llr) {
    d.step(x);
    EXPECT_GE(d.statistic(), x - 1e-15);
  }
}

TEST(Cusum, MatchesMaxForm) {
  const auto llr = gaussian_llrs(8, 20, 0.5);
  Cusum d(std::numeric_limits<double>::infinity());
  for (std::size_t n = 1; n <= llr.size(); ++n) {
    d.step(llr[n - 1]);
    EXPECT_NEAR(std::exp(d.statistic() - brute_force_log_v(llr, n, 0.0)), 1.0, 1e-9);
  }
}

TEST(Fma, StopsAtFirstFullWindow) {
  Fma d(3, 14.0);
  EXPECT_FALSE(d.step(5).stopped);
  EXPECT_FALSE(d.step(5).stopped);
  const auto r = d.step(5);
  EXPECT_TRUE(r.stopped);
  EXPECT_EQ(r.stop_time, 3);
  EXPECT_DOUBLE_EQ(r.statistic, 15.0);
}

TEST(Fma, TestingStartsAtL) {
  Fma d(3, 14.0);
  for (double x : {10.0, 10.0, -100.0, 10.0}) EXPECT_FALSE(d.step(x).stopped);
  EXPECT_DOUBLE_EQ(d.statistic(), -80.0);
}

TEST(Fma, RunningSumMatchesBuffer) {
  const auto inc = gaussian_llrs(9, 100'000);
  Fma d(17, std::numeric_limits<double>::infinity());
  for (double x : inc) {
    d.step(x);
    ASSERT_NEAR(d.statistic(), d.buffer_sum(), 1e-9);
  }
}

TEST(Fma, SingleTestTailMatchesNormalQuantile) {
  const int L = 20;
  const double alpha = 0.05;
  const double a = std::sqrt(L) * boost::math::quantile(boost::math::complement(boost::math::normal(), alpha));
  RngStream rng(10, 0);
  const int reps = 200'000;
  int stops = 0;
  for (int r = 0; r < reps; ++r) {
    Fma d(L, a, InputForm::observation);
    StopReport s;
    for (int n = 0; n < L; ++n) s = d.step(rng.normal());
    stops += s.stopped;
  }
  EXPECT_NEAR(stops / double(reps), alpha, 3 * std::sqrt(alpha * (1 - alpha) / reps));
}

TEST(Fma, ObservationFormIsThetaFree) {
  // Observation-form increments y / sigma do not involve theta, so one
  // calibrated threshold gives identical stop times for every assumed theta.
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    RngStream rng(seed, 3);
    std::vector<double> y;
    for (int i = 0; i < 60; ++i) y.push_back(1.0 + rng.normal());
    std::optional<std::int64_t> first;
    for (double theta : {1.2, 2.0}) {
      GaussianModel m(theta, 1.0);
      std::vector<double> inc;
      for (double v : y) inc.push_back(m.standardize(v));
      const auto t = stop_time(Fma(10, 5.0, InputForm::observation), inc);
      if (theta == 1.2) first = t;
      else EXPECT_EQ(first, t);
    }
  }
}

TEST(WlCusum, DirectEvaluation) {
  WlCusum d({2.5, 1.5});
  EXPECT_FALSE(d.step(3.0).stopped);  // n < L
  const auto r = d.step(-1.0);
  EXPECT_TRUE(r.stopped);
  EXPECT_EQ(r.stop_time, 2);
  EXPECT_DOUBLE_EQ(r.statistic, 0.5);
}

TEST(WlCusum, ConstantThresholdStopsNoLaterThanFma) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto llr = gaussian_llrs(1000 + seed, 300, 0.2);
    const auto wl = stop_time(WlCusum::constant(8, 4.0), llr);
    const auto fma = stop_time(Fma(8, 4.0), llr);
    if (fma) {
      ASSERT_TRUE(wl.has_value());
      EXPECT_LE(*wl, *fma);
    }
  }
}

TEST(WlCusum, IncrementalMatchesRescan) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    RngStream rng(seed, 9);
    const int L = 1 + static_cast<int>(seed % 7);
    std::vector<double> a;
    for (int k = 0; k < L; ++k) a.push_back(1.0 + 3.0 * rng.uniform());
    const auto llr = gaussian_llrs(2000 + seed, 120, 0.1);
    EXPECT_EQ(stop_time(WlCusum(a, 1.0), llr), wl_rescan(llr, a, 1.0));
  }
}

TEST(RunToStop, UnreachableAndTrivialThresholds) {
  const auto llr = gaussian_llrs(11, 1000, 1.0);
  Detector never = ModifiedCusum::with_threshold(0.1, 1e308);
  EXPECT_FALSE(run_to_stop(never, llr, 1000).stopped);
  Detector always = ModifiedCusum::with_threshold(0.1, 1e-308);
  const auto r = run_to_stop(always, llr, 1000);
  EXPECT_TRUE(r.stopped);
  EXPECT_EQ(r.stop_time, 1);
}

TEST(RunToStop, EmptySequenceDoesNotStop) {
  Detector d = Cusum(0.0);
  EXPECT_FALSE(run_to_stop(d, std::vector<double>{}, 10).stopped);
}

TEST(RunToStop, DeterministicReplay) {
  const auto llr = gaussian_llrs(12, 5000, 0.2);
  const auto rule = RuleConfig::modified_cusum(0.1);
  Detector a = rule.make(4.0), b = rule.make(4.0);
  const auto ra = run_to_stop(a, llr, 5000);
  const auto rb = run_to_stop(b, llr, 5000);
  EXPECT_EQ(ra.stop_time, rb.stop_time);
  EXPECT_EQ(ra.statistic, rb.statistic);
}

TEST(Detectors, StepAfterStopIsAUsageError) {
  for (const auto& rule : {RuleConfig::modified_cusum(0.1), RuleConfig::cusum(), RuleConfig::fma(1),
                           RuleConfig::wl_cusum(1)}) {
    Detector d = rule.make(-1e9);
    EXPECT_TRUE(step(d, 1.0).stopped);
    EXPECT_THROW(step(d, 1.0), UsageError);
    reset(d);
    EXPECT_FALSE(stopped(d));
    EXPECT_NO_THROW(step(d, 1.0));
  }
}

TEST(Detectors, StopTimeIsMonotoneInThreshold) {
  const std::vector<RuleConfig> rules{RuleConfig::modified_cusum(0.1), RuleConfig::cusum(), RuleConfig::fma(6),
                                      RuleConfig::wl_cusum(6)};
  for (const auto& rule : rules) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto llr = gaussian_llrs(3000 + seed, 400, 0.1);
      std::int64_t prev = 0;
      for (double h = -2.0; h <= 8.0; h += 0.5) {
        const auto t = stop_time(rule.make(h), llr).value_or(1 << 30);
        EXPECT_GE(t, prev);
        prev = t;
      }
    }
  }
}

TEST(Detectors, StopTimesRespectMinimumSteps) {
  const std::vector<RuleConfig> rules{RuleConfig::modified_cusum(0.1), RuleConfig::cusum(), RuleConfig::fma(6),
                                      RuleConfig::wl_cusum(6)};
  for (const auto& rule : rules) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto llr = gaussian_llrs(4000 + seed, 200, 2.0);
      const auto t = stop_time(rule.make(-1e9), llr);
      ASSERT_TRUE(t.has_value());
      EXPECT_EQ(*t, rule.first_testable_step());
    }
  }
}

TEST(Rule, NamesRoundTrip) {
  for (auto r : {Rule::modified_cusum, Rule::cusum, Rule::fma, Rule::wl_cusum})
    EXPECT_EQ(parse_rule(rule_name(r)), r);
  EXPECT_FALSE(parse_rule("glr").has_value());
}
