#include "tcd/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "tcd/parallel.hpp"

namespace tcd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string bracket_message(double lo, double hi, double plo, double phi, double alpha) {
  std::ostringstream os;
  os << "bracket [" << lo << ", " << hi << "] does not straddle alpha=" << alpha << ": LPFA(lo)=" << plo
     << ", LPFA(hi)=" << phi;
  return os.str();
}

template <typename Body>
std::vector<std::int64_t> chunk_counts(std::int64_t n, unsigned threads, std::size_t width, Body&& body) {
  // Per-chunk integer accumulators, summed afterwards (exact and order-free).
  const unsigned workers = resolve_threads(threads);
  std::vector<std::vector<std::int64_t>> partial(workers, std::vector<std::int64_t>(width, 0));
  parallel_for(n, workers, [&](std::int64_t begin, std::int64_t end, unsigned chunk) {
    body(begin, end, partial[chunk]);
  });
  std::vector<std::int64_t> total(width, 0);
  for (const auto& p : partial) {
    for (std::size_t i = 0; i < width; ++i) total[i] += p[i];
  }
  return total;
}

}  // namespace

BracketError::BracketError(double lo_, double hi_, double lpfa_lo_, double lpfa_hi_, double alpha_)
    : std::runtime_error(bracket_message(lo_, hi_, lpfa_lo_, lpfa_hi_, alpha_)),
      lo(lo_), hi(hi_), lpfa_lo(lpfa_lo_), lpfa_hi(lpfa_hi_), alpha(alpha_) {}

PdEstimate PdEstimate::from_counts(std::int64_t hits, std::int64_t replications) {
  if (replications <= 0) throw DomainError("replications must be positive");
  PdEstimate e;
  e.hits = hits;
  e.replications = replications;
  e.pd_hat = static_cast<double>(hits) / static_cast<double>(replications);
  e.std_error = std::sqrt(e.pd_hat * (1.0 - e.pd_hat) / static_cast<double>(replications));
  return e;
}

void CalibrationSpec::validate() const {
  if (!(target_alpha > 0.0 && target_alpha < 1.0)) throw DomainError("target_alpha must lie in (0, 1)");
  if (window_m < 1) throw DomainError("window_m must be at least 1");
  if (replications < 1) throw DomainError("replications must be positive");
  if (static_cast<double>(replications) < 10.0 / target_alpha)
    throw DomainError("replications must be at least 10 / target_alpha");
  if (bracket && !(bracket->first < bracket->second)) throw DomainError("bracket requires lo < hi");
  if (!(tolerance > 0.0)) throw DomainError("tolerance must be positive");
  if (max_iterations < 1) throw DomainError("max_iterations must be positive");
}

LlrModel ExperimentSpec::truth() const {
  if (!true_theta) return model;
  const auto* g = std::get_if<GaussianModel>(&model);
  if (g == nullptr) throw DomainError("true_theta applies to the Gaussian model only");
  return GaussianModel(*true_theta, g->sigma);
}

double rule_increment(const RuleConfig& rule, const LlrModel& model, double y) {
  if (rule.input == InputForm::observation) {
    if (const auto* g = std::get_if<GaussianModel>(&model)) return g->standardize(y);
    return y;
  }
  return llr(model, y);
}

std::vector<double> simulate_window_maxima(const RuleConfig& rule, const LlrModel& model, std::int64_t m,
                                           std::int64_t replications, std::uint64_t seed, unsigned threads) {
  if (m < 1) throw DomainError("window m must be at least 1");
  if (replications < 1) throw DomainError("replications must be positive");
  std::vector<double> maxima(static_cast<std::size_t>(replications), -kInf);
  parallel_for(replications, threads, [&](std::int64_t begin, std::int64_t end, unsigned) {
    Detector det = rule.make(kInf);
    for (std::int64_t r = begin; r < end; ++r) {
      reset(det);
      RngStream rng(seed, static_cast<std::uint64_t>(r));
      double best = -kInf;
      for (std::int64_t n = 1; n <= m; ++n) {
        const double y = sample_observation(model, Regime::pre, rng);
        step(det, rule_increment(rule, model, y));
        if (testable(det)) best = std::max(best, statistic(det));
      }
      maxima[static_cast<std::size_t>(r)] = best;
    }
  });
  return maxima;
}

PdEstimate estimate_lpfa(const RuleConfig& rule, double threshold, const CalibrationSpec& spec,
                         const LlrModel& model) {
  if (spec.replications < 1) throw DomainError("replications must be positive");
  if (spec.window_m < 1) throw DomainError("window_m must be at least 1");
  const auto counts = chunk_counts(spec.replications, spec.threads, 1, [&](std::int64_t begin, std::int64_t end,
                                                                          std::vector<std::int64_t>& acc) {
    Detector det = rule.make(threshold);
    for (std::int64_t r = begin; r < end; ++r) {
      reset(det);
      RngStream rng(spec.seed, static_cast<std::uint64_t>(r));
      for (std::int64_t n = 1; n <= spec.window_m; ++n) {
        const double y = sample_observation(model, Regime::pre, rng);
        if (step(det, rule_increment(rule, model, y)).stopped) {
          ++acc[0];
          break;
        }
      }
    }
  });
  return PdEstimate::from_counts(counts[0], spec.replications);
}

PdEstimate estimate_conditional_lpfa(const RuleConfig& rule, double threshold, const LlrModel& model,
                                     std::int64_t m, std::int64_t ell, std::int64_t replications,
                                     std::uint64_t seed, unsigned threads) {
  if (m < 1 || ell < 0) throw DomainError("need m >= 1 and l >= 0");
  if (replications < 1) throw DomainError("replications must be positive");
  // acc[0]: survived past l, acc[1]: then stopped within (l, l + m].
  const auto counts = chunk_counts(replications, threads, 2, [&](std::int64_t begin, std::int64_t end,
                                                                 std::vector<std::int64_t>& acc) {
    Detector det = rule.make(threshold);
    for (std::int64_t r = begin; r < end; ++r) {
      reset(det);
      RngStream rng(seed, static_cast<std::uint64_t>(r));
      for (std::int64_t n = 1; n <= ell + m; ++n) {
        if (n == ell + 1) ++acc[0];
        const double y = sample_observation(model, Regime::pre, rng);
        if (step(det, rule_increment(rule, model, y)).stopped) {
          if (n > ell) ++acc[1];
          break;
        }
      }
    }
  });
  if (counts[0] == 0) throw DomainError("no replication survived to l; conditional LPFA undefined");
  return PdEstimate::from_counts(counts[1], counts[0]);
}

CalibrationResult calibrate_threshold(const RuleConfig& rule, const CalibrationSpec& spec, const LlrModel& model) {
  spec.validate();
  std::vector<double> maxima =
      simulate_window_maxima(rule, model, spec.window_m, spec.replications, spec.seed, spec.threads);
  std::sort(maxima.begin(), maxima.end());
  const auto n = static_cast<std::int64_t>(maxima.size());
  auto alarms = [&](double h) {
    return n - static_cast<std::int64_t>(std::lower_bound(maxima.begin(), maxima.end(), h) - maxima.begin());
  };
  auto lpfa = [&](double h) { return static_cast<double>(alarms(h)) / static_cast<double>(n); };

  double lo = 0.0;
  double hi = 0.0;
  if (spec.bracket) {
    std::tie(lo, hi) = *spec.bracket;
  } else {
    const auto first_finite = std::find_if(maxima.begin(), maxima.end(), [](double v) { return std::isfinite(v); });
    if (first_finite == maxima.end()) throw BracketError(-kInf, kInf, 0.0, 0.0, spec.target_alpha);
    lo = *first_finite - 1.0;
    hi = maxima.back() + 1.0;
  }
  const double alpha = spec.target_alpha;
  const double p_lo = lpfa(lo);
  const double p_hi = lpfa(hi);
  if (!(p_lo >= alpha && p_hi <= alpha)) throw BracketError(lo, hi, p_lo, p_hi, alpha);

  // Invariant: LPFA(lo) >= alpha >= LPFA(hi). Run the full iteration budget;
  // the tolerance is checked on the result rather than used as an early exit.
  CalibrationResult result;
  for (int it = 0; it < spec.max_iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (lpfa(mid) > alpha) {
      lo = mid;
    } else {
      hi = mid;
    }
    result.iterations = it + 1;
  }
  result.threshold = hi;
  result.lpfa = PdEstimate::from_counts(alarms(hi), n);
  result.within_tolerance = std::abs(result.lpfa.pd_hat - alpha) <= spec.tolerance * alpha;
  return result;
}

PdEstimate estimate_pd(const RuleConfig& rule, double threshold, const ExperimentSpec& spec) {
  if (spec.duration.is_infinite()) throw DomainError("PD is undefined for an infinite change duration");
  if (spec.replications < 1) throw DomainError("replications must be positive");
  const LlrModel truth = spec.truth();
  const auto counts = chunk_counts(spec.replications, spec.threads, 1, [&](std::int64_t begin, std::int64_t end,
                                                                          std::vector<std::int64_t>& acc) {
    Detector det = rule.make(threshold);
    for (std::int64_t r = begin; r < end; ++r) {
      reset(det);
      RngStream rng(spec.seed, static_cast<std::uint64_t>(r));
      const std::int64_t duration = sample_duration(spec.duration, rng);
      for (std::int64_t n = 1; n <= duration; ++n) {
        const double y = sample_observation(truth, Regime::post, rng);
        if (step(det, rule_increment(rule, spec.model, y)).stopped) {
          ++acc[0];
          break;
        }
      }
    }
  });
  return PdEstimate::from_counts(counts[0], spec.replications);
}

__extension__ typedef __int128 Wide;  // exact sum of squared run lengths

ArlEstimate estimate_arl(const RuleConfig& rule, double threshold, const LlrModel& model,
                         std::int64_t replications, std::int64_t cap, std::uint64_t seed, unsigned threads) {
  if (replications < 1) throw DomainError("replications must be positive");
  if (cap < 1) throw DomainError("cap must be at least 1");
  const unsigned workers = resolve_threads(threads);
  struct Acc {
    std::int64_t sum = 0;
    Wide sum_sq = 0;
    std::int64_t capped = 0;
  };
  std::vector<Acc> partial(workers);
  parallel_for(replications, workers, [&](std::int64_t begin, std::int64_t end, unsigned chunk) {
    Detector det = rule.make(threshold);
    Acc& acc = partial[chunk];
    for (std::int64_t r = begin; r < end; ++r) {
      reset(det);
      RngStream rng(seed, static_cast<std::uint64_t>(r));
      std::int64_t t = cap;
      bool hit = false;
      for (std::int64_t n = 1; n <= cap; ++n) {
        const double y = sample_observation(model, Regime::pre, rng);
        if (step(det, rule_increment(rule, model, y)).stopped) {
          t = n;
          hit = true;
          break;
        }
      }
      if (!hit) ++acc.capped;
      acc.sum += t;
      acc.sum_sq += static_cast<Wide>(t) * t;
    }
  });
  Acc total;
  for (const auto& p : partial) {
    total.sum += p.sum;
    total.sum_sq += p.sum_sq;
    total.capped += p.capped;
  }
  ArlEstimate e;
  e.replications = replications;
  e.capped = total.capped;
  const auto nd = static_cast<double>(replications);
  e.mean = static_cast<double>(total.sum) / nd;
  const double second = static_cast<double>(total.sum_sq) / nd;
  const double var = std::max(0.0, second - e.mean * e.mean) * nd / std::max(1.0, nd - 1.0);
  e.std_error = std::sqrt(var / nd);
  e.lower_bound_only = static_cast<double>(total.capped) > 0.01 * nd;
  return e;
}

double gamma_bound(std::int64_t m, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  if (m < 1) throw DomainError("m must be at least 1");
  const auto md = static_cast<double>(m);
  return 1.5 + (md / alpha) * (1.0 - 1.5 * alpha);
}

}  // namespace tcd
