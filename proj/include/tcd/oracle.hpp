#pragma once

// Exact stopping-time probabilities on small discrete models by depth-first
// enumeration of every observation sequence. Stopped prefixes are pruned and
// their mass is booked once, so the cost is far below K^n for most rules.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "tcd/detectors.hpp"
#include "tcd/model.hpp"

namespace tcd {

class SizeError : public std::length_error {
 public:
  using std::length_error::length_error;
};

inline constexpr double kEnumerationBudget = 1e7;

struct ExactResult {
  double probability = 0.0;
  /// probability + tail mass; equals probability when nothing was truncated.
  double upper = 0.0;
  std::int64_t sequences_enumerated = 0;
};

struct ExactArl {
  /// sum_{l=0..n_max} P_inf(T > l): a lower bound on E_inf[T].
  double partial_sum = 0.0;
  /// P_inf(T > n_max).
  double survival = 0.0;
  std::int64_t sequences_enumerated = 0;
};

/// Law of the stopping time when every observation follows one regime.
struct StopTimeLaw {
  /// stop_mass[t - 1] = P(T = t), t = 1..depth.
  std::vector<double> stop_mass;
  /// P(T > depth).
  double survival = 0.0;
  /// Total probability booked (stops plus survivors); 1 up to rounding.
  double total_mass = 0.0;
  std::int64_t sequences_enumerated = 0;

  /// P(T <= t).
  double cdf(std::int64_t t) const;
};

StopTimeLaw enumerate_stop_times(const RuleConfig& rule, double threshold, const DiscreteModel& model,
                                 Regime regime, std::int64_t depth);

/// P_inf(T <= l + m | T > l).
ExactResult exact_lpfa(const RuleConfig& rule, double threshold, const DiscreteModel& model, std::int64_t m,
                       std::int64_t ell);

/// sum_i pi_i P_0(T <= i) for i <= n_max; geometric laws carry the tail
/// (1 - rho)^n_max in `upper`.
ExactResult exact_pd(const RuleConfig& rule, double threshold, const DiscreteModel& model,
                     const DurationLaw& duration, std::int64_t n_max);

ExactArl exact_arl(const RuleConfig& rule, double threshold, const DiscreteModel& model, std::int64_t n_max);

}  // namespace tcd
