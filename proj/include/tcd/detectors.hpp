#pragma once

// Sequential stopping rules as single-owner state machines. Each rule is fed
// one increment at a time (an LLR, or a monotone statistic of the observation
// for the FMA observation form) and reports whether it has stopped.
//
// Thresholds live in the statistic domain of each rule:
//   modified CUSUM / CUSUM : log B / log C (statistics are kept as log V)
//   FMA                    : a (LLR form) or a~ (observation form)
//   WL-CUSUM               : offset c, stop when max_k [S_k - A(k)] >= c

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tcd {

class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct StopReport {
  bool stopped = false;
  std::optional<std::int64_t> stop_time;
  double statistic = 0.0;
};

/// V_rho(n) = max{1, V_rho(n-1)} Lambda_n (1 - rho), V_rho(0) = 1, kept as w = log V.
class ModifiedCusum {
 public:
  ModifiedCusum(double rho, double log_threshold);
  static ModifiedCusum with_threshold(double rho, double threshold_b);

  StopReport step(double llr);
  void reset();

  double statistic() const { return log_v_; }
  double value() const;
  double threshold() const { return log_threshold_; }
  double rho() const { return rho_; }
  bool testable() const { return true; }
  bool stopped() const { return stopped_; }
  std::int64_t steps() const { return n_; }

 private:
  double rho_;
  double log_discount_;
  double log_threshold_;
  double log_v_ = 0.0;
  std::int64_t n_ = 0;
  bool stopped_ = false;
};

/// Page's CUSUM: V(n) = max{1, V(n-1)} Lambda_n, kept as w = log V.
class Cusum {
 public:
  explicit Cusum(double log_threshold);
  static Cusum with_threshold(double threshold_c);

  StopReport step(double llr);
  void reset();

  double statistic() const { return log_v_; }
  double value() const;
  double threshold() const { return log_threshold_; }
  bool testable() const { return true; }
  bool stopped() const { return stopped_; }
  std::int64_t steps() const { return n_; }

 private:
  double log_threshold_;
  double log_v_ = 0.0;
  std::int64_t n_ = 0;
  bool stopped_ = false;
};

enum class InputForm { llr, observation };

/// Finite moving average: stop at the first n >= L whose last-L window sum
/// reaches the threshold.
class Fma {
 public:
  Fma(std::int64_t window_len, double threshold, InputForm form = InputForm::llr);

  StopReport step(double increment);
  void reset();

  double statistic() const { return sum_; }
  double threshold() const { return threshold_; }
  InputForm form() const { return form_; }
  std::int64_t window() const { return static_cast<std::int64_t>(buffer_.size()); }
  bool testable() const { return n_ >= window(); }
  bool stopped() const { return stopped_; }
  std::int64_t steps() const { return n_; }
  /// Sum recomputed from the buffer; matches statistic() up to rounding.
  double buffer_sum() const;

 private:
  std::vector<double> buffer_;
  std::size_t head_ = 0;
  double sum_ = 0.0;
  double threshold_;
  InputForm form_;
  std::int64_t n_ = 0;
  bool stopped_ = false;
};

/// Window-limited CUSUM: stop at the first n >= L with
/// max_{1<=k<=L} [sum of last k LLRs - A(k)] >= offset.
class WlCusum {
 public:
  /// `thresholds[k-1]` is A(k), k = 1..L.
  WlCusum(std::vector<double> thresholds, double offset = 0.0);
  static WlCusum constant(std::int64_t window_len, double a);

  StopReport step(double llr);
  void reset();

  double statistic() const { return stat_; }
  double threshold() const { return offset_; }
  std::int64_t window() const { return static_cast<std::int64_t>(thresholds_.size()); }
  const std::vector<double>& thresholds() const { return thresholds_; }
  bool testable() const { return n_ >= window(); }
  bool stopped() const { return stopped_; }
  std::int64_t steps() const { return n_; }

 private:
  std::vector<double> thresholds_;
  std::vector<double> buffer_;
  std::size_t head_ = 0;
  double offset_;
  double stat_ = -std::numeric_limits<double>::infinity();
  std::int64_t n_ = 0;
  bool stopped_ = false;
};

using Detector = std::variant<ModifiedCusum, Cusum, Fma, WlCusum>;

StopReport step(Detector& detector, double increment);
double statistic(const Detector& detector);
bool testable(const Detector& detector);
bool stopped(const Detector& detector);
void reset(Detector& detector);

/// Feeds increments until the detector stops or `cap` increments were used.
StopReport run_to_stop(Detector& detector, std::span<const double> increments, std::int64_t cap);

enum class Rule { modified_cusum, cusum, fma, wl_cusum };

std::string_view rule_name(Rule rule);
std::optional<Rule> parse_rule(std::string_view name);

/// A detector family: everything but the threshold. `make` builds a fresh
/// state at a given threshold (statistic domain, see top of file).
struct RuleConfig {
  Rule rule = Rule::modified_cusum;
  double rho = 0.0;
  std::int64_t window = 1;
  InputForm input = InputForm::llr;
  /// Base A(k) for WL-CUSUM; empty means A(k) = 0, so the offset is the constant threshold.
  std::vector<double> wl_thresholds;

  static RuleConfig modified_cusum(double rho);
  static RuleConfig cusum();
  static RuleConfig fma(std::int64_t window, InputForm input = InputForm::llr);
  static RuleConfig wl_cusum(std::int64_t window, std::vector<double> base_thresholds = {});

  Detector make(double threshold) const;
  /// Smallest step index at which the rule may stop (1 or L).
  std::int64_t first_testable_step() const;
  std::string name() const { return std::string(rule_name(rule)); }
};

}  // namespace tcd
