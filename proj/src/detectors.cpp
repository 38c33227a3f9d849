#include "tcd/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tcd/model.hpp"

namespace tcd {

namespace {

void check_not_stopped(bool stopped) {
  if (stopped) throw UsageError("detector already stopped; reset() before reuse");
}

StopReport report(bool stop, std::int64_t n, double statistic) {
  StopReport r;
  r.stopped = stop;
  if (stop) r.stop_time = n;
  r.statistic = statistic;
  return r;
}

double checked_log_threshold(double threshold) {
  if (!(threshold > 0.0)) throw DomainError("threshold must be positive");
  return std::log(threshold);
}

}  // namespace

ModifiedCusum::ModifiedCusum(double rho, double log_threshold)
    : rho_(rho), log_discount_(std::log1p(-rho)), log_threshold_(log_threshold) {
  if (!(rho >= 0.0 && rho < 1.0)) throw DomainError("rho must lie in [0, 1)");
  if (std::isnan(log_threshold)) throw DomainError("threshold is NaN");
}

ModifiedCusum ModifiedCusum::with_threshold(double rho, double threshold_b) {
  return ModifiedCusum(rho, checked_log_threshold(threshold_b));
}

StopReport ModifiedCusum::step(double llr) {
  check_not_stopped(stopped_);
  ++n_;
  // (max + llr) + log(1 - rho): at rho = 0 the last term is +0.0 and the
  // trajectory is bit-identical to Cusum.
  log_v_ = (std::max(0.0, log_v_) + llr) + log_discount_;
  stopped_ = log_v_ >= log_threshold_;
  return report(stopped_, n_, log_v_);
}

void ModifiedCusum::reset() {
  log_v_ = 0.0;
  n_ = 0;
  stopped_ = false;
}

double ModifiedCusum::value() const { return std::exp(log_v_); }

Cusum::Cusum(double log_threshold) : log_threshold_(log_threshold) {
  if (std::isnan(log_threshold)) throw DomainError("threshold is NaN");
}

Cusum Cusum::with_threshold(double threshold_c) { return Cusum(checked_log_threshold(threshold_c)); }

StopReport Cusum::step(double llr) {
  check_not_stopped(stopped_);
  ++n_;
  log_v_ = std::max(0.0, log_v_) + llr;
  stopped_ = log_v_ >= log_threshold_;
  return report(stopped_, n_, log_v_);
}

void Cusum::reset() {
  log_v_ = 0.0;
  n_ = 0;
  stopped_ = false;
}

double Cusum::value() const { return std::exp(log_v_); }

Fma::Fma(std::int64_t window_len, double threshold, InputForm form)
    : threshold_(threshold), form_(form) {
  if (window_len < 1) throw DomainError("FMA window must be at least 1");
  if (std::isnan(threshold)) throw DomainError("threshold is NaN");
  buffer_.assign(static_cast<std::size_t>(window_len), 0.0);
}

StopReport Fma::step(double increment) {
  check_not_stopped(stopped_);
  ++n_;
  sum_ += increment - buffer_[head_];
  buffer_[head_] = increment;
  head_ = (head_ + 1) % buffer_.size();
  // Rebuild the running sum once per wrap so rounding cannot accumulate.
  if (head_ == 0) sum_ = buffer_sum();
  stopped_ = testable() && sum_ >= threshold_;
  return report(stopped_, n_, sum_);
}

void Fma::reset() {
  std::fill(buffer_.begin(), buffer_.end(), 0.0);
  head_ = 0;
  sum_ = 0.0;
  n_ = 0;
  stopped_ = false;
}

double Fma::buffer_sum() const {
  // Oldest to newest, the same order a direct window sum would use.
  double s = 0.0;
  for (std::size_t i = 0; i < buffer_.size(); ++i) s += buffer_[(head_ + i) % buffer_.size()];
  return s;
}

WlCusum::WlCusum(std::vector<double> thresholds, double offset)
    : thresholds_(std::move(thresholds)), offset_(offset) {
  if (thresholds_.empty()) throw DomainError("WL-CUSUM needs A(k) for k = 1..L, L >= 1");
  for (double a : thresholds_) {
    if (!std::isfinite(a)) throw DomainError("A(k) must be finite");
  }
  if (std::isnan(offset)) throw DomainError("threshold is NaN");
  buffer_.assign(thresholds_.size(), 0.0);
}

WlCusum WlCusum::constant(std::int64_t window_len, double a) {
  if (window_len < 1) throw DomainError("WL-CUSUM window must be at least 1");
  return WlCusum(std::vector<double>(static_cast<std::size_t>(window_len), 0.0), a);
}

StopReport WlCusum::step(double llr) {
  check_not_stopped(stopped_);
  ++n_;
  buffer_[head_] = llr;
  const std::size_t len = buffer_.size();
  // Suffix sums, newest first: k = 1 is the latest LLR.
  double suffix = 0.0;
  double best = -std::numeric_limits<double>::infinity();
  const std::size_t avail = static_cast<std::size_t>(std::min<std::int64_t>(n_, window()));
  for (std::size_t k = 1; k <= avail; ++k) {
    suffix += buffer_[(head_ + len - (k - 1)) % len];
    best = std::max(best, suffix - thresholds_[k - 1]);
  }
  head_ = (head_ + 1) % len;
  stat_ = best;
  stopped_ = testable() && stat_ >= offset_;
  return report(stopped_, n_, stat_);
}

void WlCusum::reset() {
  std::fill(buffer_.begin(), buffer_.end(), 0.0);
  head_ = 0;
  stat_ = -std::numeric_limits<double>::infinity();
  n_ = 0;
  stopped_ = false;
}

StopReport step(Detector& detector, double increment) {
  return std::visit([increment](auto& d) { return d.step(increment); }, detector);
}

double statistic(const Detector& detector) {
  return std::visit([](const auto& d) { return d.statistic(); }, detector);
}

bool testable(const Detector& detector) {
  return std::visit([](const auto& d) { return d.testable(); }, detector);
}

bool stopped(const Detector& detector) {
  return std::visit([](const auto& d) { return d.stopped(); }, detector);
}

void reset(Detector& detector) {
  std::visit([](auto& d) { d.reset(); }, detector);
}

StopReport run_to_stop(Detector& detector, std::span<const double> increments, std::int64_t cap) {
  if (cap < 1) throw DomainError("cap must be at least 1");
  StopReport last;
  const auto limit = std::min<std::int64_t>(cap, static_cast<std::int64_t>(increments.size()));
  for (std::int64_t i = 0; i < limit; ++i) {
    last = step(detector, increments[static_cast<std::size_t>(i)]);
    if (last.stopped) return last;
  }
  last.stopped = false;
  last.stop_time.reset();
  return last;
}

std::string_view rule_name(Rule rule) {
  switch (rule) {
    case Rule::modified_cusum: return "mod-cusum";
    case Rule::cusum: return "cusum";
    case Rule::fma: return "fma";
    case Rule::wl_cusum: return "wl-cusum";
  }
  return "unknown";
}

std::optional<Rule> parse_rule(std::string_view name) {
  for (Rule r : {Rule::modified_cusum, Rule::cusum, Rule::fma, Rule::wl_cusum}) {
    if (rule_name(r) == name) return r;
  }
  return std::nullopt;
}

RuleConfig RuleConfig::modified_cusum(double rho) {
  RuleConfig c;
  c.rule = Rule::modified_cusum;
  c.rho = rho;
  return c;
}

RuleConfig RuleConfig::cusum() {
  RuleConfig c;
  c.rule = Rule::cusum;
  return c;
}

RuleConfig RuleConfig::fma(std::int64_t window, InputForm input) {
  RuleConfig c;
  c.rule = Rule::fma;
  c.window = window;
  c.input = input;
  return c;
}

RuleConfig RuleConfig::wl_cusum(std::int64_t window, std::vector<double> base_thresholds) {
  RuleConfig c;
  c.rule = Rule::wl_cusum;
  c.window = window;
  c.wl_thresholds = std::move(base_thresholds);
  return c;
}

Detector RuleConfig::make(double threshold) const {
  switch (rule) {
    case Rule::modified_cusum: return ModifiedCusum(rho, threshold);
    case Rule::cusum: return Cusum(threshold);
    case Rule::fma: return Fma(window, threshold, input);
    case Rule::wl_cusum:
      if (wl_thresholds.empty()) return WlCusum::constant(window, threshold);
      if (static_cast<std::int64_t>(wl_thresholds.size()) != window)
        throw DomainError("WL-CUSUM threshold map must define A(k) for every k in 1..L");
      return WlCusum(wl_thresholds, threshold);
  }
  throw DomainError("unknown rule");
}

std::int64_t RuleConfig::first_testable_step() const {
  return (rule == Rule::fma || rule == Rule::wl_cusum) ? window : 1;
}

}  // namespace tcd
