#include <gtest/gtest.h>

#include <boost/math/distributions/normal.hpp>
#include <cmath>

#include "tcd/montecarlo.hpp"

using namespace tcd;

namespace {

double upper_quantile(double p) { return boost::math::quantile(boost::math::complement(boost::math::normal(), p)); }

CalibrationSpec spec_for(std::int64_t m, double alpha, std::int64_t reps, std::uint64_t seed) {
  CalibrationSpec s;
  s.window_m = m;
  s.target_alpha = alpha;
  s.replications = reps;
  s.seed = seed;
  return s;
}

}  // namespace

TEST(Lpfa, UnreachableThresholdGivesZero) {
  const auto e = estimate_lpfa(RuleConfig::modified_cusum(0.1), 1e308, spec_for(20, 0.001, 10'000, 1),
                               GaussianModel(2.0, 1.0));
  EXPECT_EQ(e.hits, 0);
  EXPECT_EQ(e.pd_hat, 0.0);
}

TEST(Calibration, FmaObservationFormMatchesNormalQuantile) {
  // With m = L the window holds one test of a N(0, L) sum.
  const auto rule = RuleConfig::fma(20, InputForm::observation);
  const auto r = calibrate_threshold(rule, spec_for(20, 0.001, 1'000'000, 7), GaussianModel(2.0, 1.0));
  EXPECT_NEAR(r.threshold, std::sqrt(20.0) * upper_quantile(0.001), 0.1);
  EXPECT_EQ(r.iterations, 40);
  EXPECT_TRUE(r.within_tolerance);
}

TEST(Calibration, SingleObservationMedian) {
  const auto rule = RuleConfig::fma(1, InputForm::observation);
  const auto r = calibrate_threshold(rule, spec_for(1, 0.5, 100'000, 3), GaussianModel(2.0, 1.0));
  EXPECT_NEAR(r.threshold, 0.0, 0.02);
}

TEST(Calibration, FreshSeedReproducesTargetAlpha) {
  const auto rule = RuleConfig::modified_cusum(0.1);
  const GaussianModel model(2.0, 1.0);
  const auto r = calibrate_threshold(rule, spec_for(20, 0.01, 200'000, 11), model);
  const auto check = estimate_lpfa(rule, r.threshold, spec_for(20, 0.01, 200'000, 12), model);
  EXPECT_NEAR(check.pd_hat, 0.01, 4 * std::sqrt(0.01 * 0.99 / 200'000) + 0.01 * 0.05);
}

TEST(Calibration, ReportedLpfaIsTheCalibrationSampleRate) {
  const auto rule = RuleConfig::cusum();
  const GaussianModel model(1.2, 1.0);
  const auto spec = spec_for(20, 0.01, 50'000, 5);
  const auto r = calibrate_threshold(rule, spec, model);
  const auto again = estimate_lpfa(rule, r.threshold, spec, model);
  EXPECT_EQ(r.lpfa.hits, again.hits);
}

TEST(Calibration, BadBracketIsReported) {
  auto spec = spec_for(20, 0.001, 10'000, 1);
  spec.bracket = std::make_pair(50.0, 60.0);
  try {
    calibrate_threshold(RuleConfig::modified_cusum(0.1), spec, GaussianModel(2.0, 1.0));
    FAIL() << "expected BracketError";
  } catch (const BracketError& e) {
    EXPECT_EQ(e.lo, 50.0);
    EXPECT_EQ(e.hi, 60.0);
    EXPECT_EQ(e.lpfa_lo, 0.0);
  }
}

TEST(Calibration, WindowMaximaDecideStops) {
  const auto rule = RuleConfig::modified_cusum(0.1);
  const GaussianModel model(2.0, 1.0);
  const auto maxima = simulate_window_maxima(rule, model, 20, 5'000, 9, 1);
  const double h = 2.5;
  std::int64_t above = 0;
  for (double v : maxima) above += v >= h;
  EXPECT_EQ(estimate_lpfa(rule, h, spec_for(20, 0.01, 5'000, 9), model).hits, above);
}

TEST(Pd, UnreachableThresholdGivesZero) {
  ExperimentSpec s;
  s.model = GaussianModel(2.0, 1.0);
  s.replications = 10'000;
  EXPECT_EQ(estimate_pd(RuleConfig::cusum(), 1e308, s).pd_hat, 0.0);
}

TEST(Pd, InfiniteDurationIsRejected) {
  ExperimentSpec s;
  s.duration = DurationLaw::infinite();
  EXPECT_THROW(estimate_pd(RuleConfig::cusum(), 1.0, s), DomainError);
}

TEST(Pd, FixedOneStepMatchesNormalTail) {
  // One post-change observation, FMA L=1 observation form: PD = P(Z + theta >= h).
  ExperimentSpec s;
  s.model = GaussianModel(2.0, 1.0);
  s.duration = DurationLaw::fixed(1);
  s.replications = 200'000;
  s.seed = 4;
  const double h = 2.5;
  const auto e = estimate_pd(RuleConfig::fma(1, InputForm::observation), h, s);
  const double p = 1.0 - boost::math::cdf(boost::math::normal(), h - 2.0);
  EXPECT_NEAR(e.pd_hat, p, 4 * std::sqrt(p * (1 - p) / s.replications));
}

TEST(Pd, MismatchedTrueThetaShiftsDetection) {
  ExperimentSpec s;
  s.model = GaussianModel(2.0, 1.0);
  s.replications = 50'000;
  const auto rule = RuleConfig::modified_cusum(0.1);
  const auto base = estimate_pd(rule, 3.0, s);
  s.true_theta = 1.0;
  const auto weaker = estimate_pd(rule, 3.0, s);
  s.true_theta = 3.0;
  const auto stronger = estimate_pd(rule, 3.0, s);
  EXPECT_LT(weaker.pd_hat, base.pd_hat);
  EXPECT_GT(stronger.pd_hat, base.pd_hat);
}

TEST(Pd, StandardErrorIdentity) {
  const auto e = PdEstimate::from_counts(250, 1000);
  EXPECT_DOUBLE_EQ(e.pd_hat, 0.25);
  EXPECT_DOUBLE_EQ(e.std_error, std::sqrt(0.25 * 0.75 / 1000));
  EXPECT_THROW(PdEstimate::from_counts(0, 0), DomainError);
}

TEST(Arl, TrivialThresholdStopsImmediately) {
  const auto a = estimate_arl(RuleConfig::modified_cusum(0.1), -1e308, GaussianModel(2.0, 1.0), 1000, 100, 1);
  EXPECT_DOUBLE_EQ(a.mean, 1.0);
  EXPECT_EQ(a.capped, 0);
  EXPECT_FALSE(a.lower_bound_only);
}

TEST(Arl, CapIsFlagged) {
  const auto a = estimate_arl(RuleConfig::cusum(), 1e308, GaussianModel(2.0, 1.0), 1000, 50, 1);
  EXPECT_DOUBLE_EQ(a.mean, 50.0);
  EXPECT_TRUE(a.lower_bound_only);
}

TEST(GammaBound, ClosedFormValues) {
  EXPECT_DOUBLE_EQ(gamma_bound(20, 0.001), 19971.5);
  EXPECT_NEAR(gamma_bound(10, 0.05), 186.5, 1e-12);
  EXPECT_NEAR(gamma_bound(5, 0.2), 19.0, 1e-12);
  EXPECT_THROW(gamma_bound(20, 0.0), DomainError);
  EXPECT_THROW(gamma_bound(20, 1.0), DomainError);
  EXPECT_THROW(gamma_bound(0, 0.1), DomainError);
}

TEST(Lpfa, ZeroDelayIsTheLargestConditionalRateForModifiedCusum) {
  // Checked at alpha = 0.05 scale for l in {0, m, 2m}, within 3 SE.
  const GaussianModel model(2.0, 1.0);
  const std::int64_t m = 20;
  const auto rule = RuleConfig::modified_cusum(0.1);
  const auto cal = calibrate_threshold(rule, spec_for(m, 0.05, 100'000, 21), model);
  const auto at0 = estimate_conditional_lpfa(rule, cal.threshold, model, m, 0, 100'000, 22);
  for (std::int64_t ell : {m, 2 * m}) {
    const auto later = estimate_conditional_lpfa(rule, cal.threshold, model, m, ell, 100'000, 23);
    EXPECT_LE(later.pd_hat, at0.pd_hat + 3 * std::hypot(at0.std_error, later.std_error)) << "l=" << ell;
  }
}

TEST(Lpfa, FmaStartupWindowMakesLaterDelaysWorse) {
  // FMA tests only from n = L on, so the window starting at l = 0 holds
  // m - L + 1 tests while later windows hold m. The l = 0 rate is therefore
  // not the supremum when m > L.
  const GaussianModel model(2.0, 1.0);
  const std::int64_t m = 20;
  const auto rule = RuleConfig::fma(10, InputForm::observation);
  const auto cal = calibrate_threshold(rule, spec_for(m, 0.05, 100'000, 21), model);
  const auto at0 = estimate_conditional_lpfa(rule, cal.threshold, model, m, 0, 100'000, 22);
  const auto later = estimate_conditional_lpfa(rule, cal.threshold, model, m, m, 100'000, 23);
  EXPECT_GT(later.pd_hat, at0.pd_hat + 3 * std::hypot(at0.std_error, later.std_error));
}

TEST(Determinism, ThreadCountDoesNotChangeResults) {
  const auto rule = RuleConfig::modified_cusum(0.1);
  const GaussianModel model(2.0, 1.0);
  auto s1 = spec_for(20, 0.01, 40'000, 8);
  s1.threads = 1;
  auto s4 = s1;
  s4.threads = 4;
  const auto c1 = calibrate_threshold(rule, s1, model);
  const auto c4 = calibrate_threshold(rule, s4, model);
  EXPECT_EQ(c1.threshold, c4.threshold);
  EXPECT_EQ(c1.lpfa.hits, c4.lpfa.hits);
  ExperimentSpec p;
  p.model = model;
  p.replications = 40'000;
  p.threads = 1;
  const auto pd1 = estimate_pd(rule, c1.threshold, p);
  p.threads = 4;
  const auto pd4 = estimate_pd(rule, c1.threshold, p);
  EXPECT_EQ(pd1.hits, pd4.hits);
  EXPECT_EQ(estimate_arl(rule, 2.0, model, 5000, 500, 3, 1).mean, estimate_arl(rule, 2.0, model, 5000, 500, 3, 4).mean);
}
