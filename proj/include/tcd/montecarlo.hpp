#pragma once

// Monte Carlo machinery: local false-alarm probability, threshold
// calibration, probability of detection and run-length estimates.
//
// Every replication r draws from RngStream(seed, r), and results are combined
// through integer counts, so estimates do not depend on the thread count.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tcd/detectors.hpp"
#include "tcd/model.hpp"

namespace tcd {

class BracketError : public std::runtime_error {
 public:
  BracketError(double lo, double hi, double lpfa_lo, double lpfa_hi, double alpha);
  double lo, hi, lpfa_lo, lpfa_hi, alpha;
};

struct PdEstimate {
  double pd_hat = 0.0;
  double std_error = 0.0;
  std::int64_t replications = 0;
  std::int64_t hits = 0;

  static PdEstimate from_counts(std::int64_t hits, std::int64_t replications);
};

struct CalibrationSpec {
  double target_alpha = 0.001;
  std::int64_t window_m = 20;
  std::int64_t replications = 1'000'000;
  std::uint64_t seed = 1;
  /// Search interval in the rule's threshold domain. Without one, the range
  /// of the simulated window maxima is used, which always straddles alpha.
  std::optional<std::pair<double, double>> bracket;
  double tolerance = 0.05;
  int max_iterations = 40;
  unsigned threads = 0;

  void validate() const;
};

struct CalibrationResult {
  double threshold = 0.0;
  /// LPFA of the returned threshold on the calibration sample.
  PdEstimate lpfa;
  int iterations = 0;
  bool within_tolerance = false;
};

struct ExperimentSpec {
  LlrModel model = GaussianModel{};  // assumed model, drives the LLR
  std::optional<double> true_theta;  // Gaussian only; defaults to the assumed theta
  DurationLaw duration = DurationLaw::geometric(0.1);
  std::int64_t replications = 100'000;
  std::uint64_t seed = 1;
  unsigned threads = 0;

  LlrModel truth() const;
};

struct ArlEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::int64_t replications = 0;
  std::int64_t capped = 0;
  /// Set when more than 1% of runs hit the cap; mean is then a lower bound.
  bool lower_bound_only = false;
};

/// Increment fed to the rule for observation y: the LLR, or the standardized
/// observation for the FMA observation form.
double rule_increment(const RuleConfig& rule, const LlrModel& model, double y);

/// Largest testable statistic over steps 1..m for each pre-change replication.
/// T <= m at threshold h iff this maximum is >= h, so one sample serves every
/// threshold (common random numbers).
std::vector<double> simulate_window_maxima(const RuleConfig& rule, const LlrModel& model, std::int64_t m,
                                           std::int64_t replications, std::uint64_t seed, unsigned threads);

/// P_inf(T <= m), the local false-alarm probability at l = 0.
PdEstimate estimate_lpfa(const RuleConfig& rule, double threshold, const CalibrationSpec& spec,
                         const LlrModel& model);

/// P_inf(T <= l + m | T > l), for auditing that l = 0 attains the supremum.
PdEstimate estimate_conditional_lpfa(const RuleConfig& rule, double threshold, const LlrModel& model,
                                     std::int64_t m, std::int64_t ell, std::int64_t replications,
                                     std::uint64_t seed, unsigned threads = 0);

/// Bisection on the threshold with common random numbers until the alarm
/// count brackets alpha as tightly as the sample allows.
CalibrationResult calibrate_threshold(const RuleConfig& rule, const CalibrationSpec& spec, const LlrModel& model);

/// PD = P_0(T <= N) averaged over the duration law; observations 1..N are
/// post-change with the true parameter.
PdEstimate estimate_pd(const RuleConfig& rule, double threshold, const ExperimentSpec& spec);

ArlEstimate estimate_arl(const RuleConfig& rule, double threshold, const LlrModel& model,
                         std::int64_t replications, std::int64_t cap, std::uint64_t seed, unsigned threads = 0);

/// gamma(m, alpha) = 3/2 + (m / alpha)(1 - 3 alpha / 2).
double gamma_bound(std::int64_t m, double alpha);

}  // namespace tcd
