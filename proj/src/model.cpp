#include "tcd/model.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

namespace tcd {

namespace {

void require_finite(double y) {
  if (!std::isfinite(y)) throw DomainError("observation is not finite");
}

void check_pmf(const std::vector<double>& p, const char* name) {
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError(std::string(name) + " pmf has an invalid entry");
  }
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-12) throw DomainError(std::string(name) + " pmf does not sum to 1");
}

}  // namespace

GaussianModel::GaussianModel(double theta_, double sigma_) : theta(theta_), sigma(sigma_) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("sigma must be positive");
  if (!std::isfinite(theta)) throw DomainError("theta must be finite");
}

double GaussianModel::llr(double y) const {
  require_finite(y);
  const double t = theta / sigma;
  return t * (y / sigma) - 0.5 * t * t;
}

double GaussianModel::sample(Regime regime, RngStream& rng) const {
  const double mean = regime == Regime::post ? theta : 0.0;
  return mean + sigma * rng.normal();
}

DiscreteModel::DiscreteModel(std::vector<double> pre_pmf, std::vector<double> post_pmf)
    : pre(std::move(pre_pmf)), post(std::move(post_pmf)) {
  if (pre.empty() || pre.size() != post.size()) throw DomainError("pmf tables must be nonempty and of equal size");
  if (pre.size() > kMaxAlphabet) throw DomainError("alphabet larger than 4 symbols");
  check_pmf(pre, "pre-change");
  check_pmf(post, "post-change");
  for (std::size_t k = 0; k < pre.size(); ++k) {
    if (pre[k] > 0.0 && post[k] <= 0.0) throw DomainError("post-change pmf must be positive wherever pre-change pmf is");
  }
}

double DiscreteModel::llr_symbol(std::size_t k) const {
  if (k >= pre.size() || pre[k] <= 0.0 || post[k] <= 0.0) throw DomainError("symbol outside the common support");
  return std::log(post[k]) - std::log(pre[k]);
}

double DiscreteModel::llr(double y) const {
  require_finite(y);
  if (y < 0.0 || y != std::floor(y)) throw DomainError("discrete observation must be a symbol index");
  return llr_symbol(static_cast<std::size_t>(y));
}

double DiscreteModel::sample(Regime regime, RngStream& rng) const {
  const auto& p = pmf(regime);
  const double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t k = 0; k + 1 < p.size(); ++k) {
    cum += p[k];
    if (u < cum) return static_cast<double>(k);
  }
  return static_cast<double>(p.size() - 1);
}

double llr(const LlrModel& model, double y) {
  return std::visit([y](const auto& m) { return m.llr(y); }, model);
}

double sample_observation(const LlrModel& model, Regime regime, RngStream& rng) {
  return std::visit([&](const auto& m) { return m.sample(regime, rng); }, model);
}

GeomPrior::GeomPrior(double rho_) : rho(rho_) {
  if (!(rho > 0.0 && rho < 1.0)) throw DomainError("geometric rho must lie in (0, 1)");
}

double GeomPrior::pmf(std::int64_t i) const {
  if (i < 1) throw DomainError("geometric support starts at 1");
  return rho * std::pow(1.0 - rho, static_cast<double>(i - 1));
}

DurationLaw DurationLaw::fixed(std::int64_t n) {
  if (n < 1) throw DomainError("fixed duration must be at least 1");
  return DurationLaw(FixedDuration{n});
}

std::string DurationLaw::label() const {
  std::ostringstream os;
  if (const auto* g = std::get_if<GeomPrior>(&law_)) {
    os << "geom(" << g->rho << ")";
  } else if (const auto* f = std::get_if<FixedDuration>(&law_)) {
    os << "fixed(" << f->n << ")";
  } else {
    os << "infinite";
  }
  return os.str();
}

std::int64_t sample_duration(const DurationLaw& law, RngStream& rng) {
  if (const auto* g = std::get_if<GeomPrior>(&law.value())) {
    std::geometric_distribution<std::int64_t> failures(g->rho);
    return 1 + failures(rng);
  }
  if (const auto* f = std::get_if<FixedDuration>(&law.value())) return f->n;
  return kInfiniteDuration;
}

}  // namespace tcd
