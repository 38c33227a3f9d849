#include "tcd/oracle.hpp"

#include <cmath>

namespace tcd {

namespace {

void check_budget(const DiscreteModel& model, std::int64_t depth) {
  const double size = std::pow(static_cast<double>(model.alphabet_size()), static_cast<double>(depth));
  if (size > kEnumerationBudget) throw SizeError("enumeration exceeds the 1e7 sequence budget");
}

struct Enumerator {
  const DiscreteModel& model;
  const std::vector<double>& pmf;
  std::vector<double> llrs;
  std::int64_t depth;
  StopTimeLaw law;

  void visit(const Detector& det, std::int64_t n, double mass) {
    if (n == depth) {
      law.survival += mass;
      law.total_mass += mass;
      ++law.sequences_enumerated;
      return;
    }
    for (std::size_t k = 0; k < pmf.size(); ++k) {
      if (pmf[k] <= 0.0) continue;
      Detector next = det;
      const double child_mass = mass * pmf[k];
      if (step(next, llrs[k]).stopped) {
        law.stop_mass[static_cast<std::size_t>(n)] += child_mass;
        law.total_mass += child_mass;
        ++law.sequences_enumerated;
      } else {
        visit(next, n + 1, child_mass);
      }
    }
  }
};

}  // namespace

double StopTimeLaw::cdf(std::int64_t t) const {
  double c = 0.0;
  for (std::int64_t i = 0; i < t && i < static_cast<std::int64_t>(stop_mass.size()); ++i)
    c += stop_mass[static_cast<std::size_t>(i)];
  return c;
}

StopTimeLaw enumerate_stop_times(const RuleConfig& rule, double threshold, const DiscreteModel& model,
                                 Regime regime, std::int64_t depth) {
  if (depth < 0) throw DomainError("depth must be nonnegative");
  check_budget(model, depth);
  const auto& pmf = model.pmf(regime);
  Enumerator e{model, pmf, {}, depth, {}};
  e.llrs.resize(pmf.size(), 0.0);
  for (std::size_t k = 0; k < pmf.size(); ++k) {
    if (pmf[k] > 0.0) {
      e.llrs[k] = rule.input == InputForm::observation ? static_cast<double>(k) : model.llr_symbol(k);
    }
  }
  e.law.stop_mass.assign(static_cast<std::size_t>(depth), 0.0);
  e.visit(rule.make(threshold), 0, 1.0);
  return e.law;
}

ExactResult exact_lpfa(const RuleConfig& rule, double threshold, const DiscreteModel& model, std::int64_t m,
                       std::int64_t ell) {
  if (m < 1 || ell < 0) throw DomainError("need m >= 1 and l >= 0");
  const StopTimeLaw law = enumerate_stop_times(rule, threshold, model, Regime::pre, ell + m);
  const double survive_ell = 1.0 - law.cdf(ell);
  if (survive_ell <= 0.0) throw DomainError("P_inf(T > l) is zero; conditional LPFA undefined");
  ExactResult r;
  r.probability = (law.cdf(ell + m) - law.cdf(ell)) / survive_ell;
  r.upper = r.probability;
  r.sequences_enumerated = law.sequences_enumerated;
  return r;
}

ExactResult exact_pd(const RuleConfig& rule, double threshold, const DiscreteModel& model,
                     const DurationLaw& duration, std::int64_t n_max) {
  if (n_max < 1) throw DomainError("n_max must be at least 1");
  if (duration.is_infinite()) throw DomainError("PD is undefined for an infinite change duration");
  ExactResult r;
  if (const auto* f = std::get_if<FixedDuration>(&duration.value())) {
    if (f->n > n_max) throw DomainError("fixed duration exceeds n_max");
    const StopTimeLaw law = enumerate_stop_times(rule, threshold, model, Regime::post, f->n);
    r.probability = law.cdf(f->n);
    r.upper = r.probability;
    r.sequences_enumerated = law.sequences_enumerated;
    return r;
  }
  const auto& prior = std::get<GeomPrior>(duration.value());
  const StopTimeLaw law = enumerate_stop_times(rule, threshold, model, Regime::post, n_max);
  double cdf = 0.0;
  for (std::int64_t i = 1; i <= n_max; ++i) {
    cdf += law.stop_mass[static_cast<std::size_t>(i - 1)];
    r.probability += prior.pmf(i) * cdf;
  }
  r.upper = r.probability + std::pow(1.0 - prior.rho, static_cast<double>(n_max));
  r.sequences_enumerated = law.sequences_enumerated;
  return r;
}

ExactArl exact_arl(const RuleConfig& rule, double threshold, const DiscreteModel& model, std::int64_t n_max) {
  if (n_max < 0) throw DomainError("n_max must be nonnegative");
  const StopTimeLaw law = enumerate_stop_times(rule, threshold, model, Regime::pre, n_max);
  ExactArl a;
  double cdf = 0.0;
  a.partial_sum = 1.0;  // P(T > 0)
  for (std::int64_t l = 1; l <= n_max; ++l) {
    cdf += law.stop_mass[static_cast<std::size_t>(l - 1)];
    a.partial_sum += 1.0 - cdf;
  }
  a.survival = law.survival;
  a.sequences_enumerated = law.sequences_enumerated;
  return a;
}

}  // namespace tcd
