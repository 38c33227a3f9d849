#pragma once

// Observation models for the i.i.d. change detection problem: a pre-change
// density g, a post-change density f, and the per-observation log-likelihood
// ratio log f(y)/g(y). Also the law of the change duration N.

#include <cstdint>
#include <optional>
#include <string>
#include <stdexcept>
#include <variant>
#include <vector>

#include "tcd/rng.hpp"

namespace tcd {

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class Regime { pre, post };

/// N(0, sigma^2) before the change, N(theta, sigma^2) after.
struct GaussianModel {
  double theta = 1.0;
  double sigma = 1.0;

  GaussianModel() = default;
  GaussianModel(double theta, double sigma);

  double llr(double y) const;
  double sample(Regime regime, RngStream& rng) const;
  /// Standardized observation y / sigma, the monotone statistic behind the LLR.
  double standardize(double y) const { return y / sigma; }
};

/// Finite alphabet {0, ..., K-1} with pmf tables g (pre) and f (post).
/// Observations are the symbol index carried as a double.
struct DiscreteModel {
  static constexpr std::size_t kMaxAlphabet = 4;

  std::vector<double> pre;
  std::vector<double> post;

  DiscreteModel() = default;
  DiscreteModel(std::vector<double> pre_pmf, std::vector<double> post_pmf);

  std::size_t alphabet_size() const { return pre.size(); }
  double llr(double y) const;
  double llr_symbol(std::size_t k) const;
  double sample(Regime regime, RngStream& rng) const;
  const std::vector<double>& pmf(Regime regime) const { return regime == Regime::pre ? pre : post; }
};

using LlrModel = std::variant<GaussianModel, DiscreteModel>;

double llr(const LlrModel& model, double y);
double sample_observation(const LlrModel& model, Regime regime, RngStream& rng);

/// Geometric law on {1, 2, ...}: pmf(i) = rho (1 - rho)^(i - 1).
struct GeomPrior {
  double rho = 0.1;

  GeomPrior() = default;
  explicit GeomPrior(double rho);

  double pmf(std::int64_t i) const;
  double mean() const { return 1.0 / rho; }
};

inline double geom_pmf(const GeomPrior& prior, std::int64_t i) { return prior.pmf(i); }

struct FixedDuration {
  std::int64_t n = 1;
};

struct InfiniteDuration {};

/// Law of the change duration N.
class DurationLaw {
 public:
  using Variant = std::variant<GeomPrior, FixedDuration, InfiniteDuration>;

  static DurationLaw geometric(double rho) { return DurationLaw(GeomPrior(rho)); }
  static DurationLaw fixed(std::int64_t n);
  static DurationLaw infinite() { return DurationLaw(InfiniteDuration{}); }

  const Variant& value() const { return law_; }
  bool is_infinite() const { return std::holds_alternative<InfiniteDuration>(law_); }
  /// Short label used in CSV output, e.g. "geom(0.1)" or "fixed(10)".
  std::string label() const;

 private:
  explicit DurationLaw(Variant law) : law_(std::move(law)) {}
  Variant law_;
};

/// Sentinel returned by sample_duration for the infinite law.
inline constexpr std::int64_t kInfiniteDuration = -1;

std::int64_t sample_duration(const DurationLaw& law, RngStream& rng);

}  // namespace tcd
