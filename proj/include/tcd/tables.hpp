#pragma once

// Reproduction of the published Gaussian experiments (Tables I-V) and the
// generic assumed-vs-true intensity mismatch study.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tcd/detectors.hpp"
#include "tcd/montecarlo.hpp"

namespace tcd {

enum class TableId { I, II, III, IV, V };

std::optional<TableId> parse_table_id(std::string_view id);
std::string_view table_name(TableId id);

struct TableRunOptions {
  std::int64_t pd_replications = 100'000;
  std::int64_t calibration_replications = 1'000'000;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  double alpha = 0.001;
  /// Absolute tolerance against the published value.
  double tolerance = 0.02;

  void validate() const;
};

/// One simulated (configuration, rule) pair.
struct TableRow {
  std::string table;
  std::string cell_id;
  std::string rule;
  double assumed_theta = 0.0;
  double true_theta = 0.0;
  double rho = 0.0;
  std::int64_t m = 0;
  double alpha = 0.0;
  std::int64_t window = 0;
  std::string duration_law;
  PdEstimate pd;
  /// NaN when no published value exists.
  double paper_value = 0.0;
  bool pass = false;
  double threshold = 0.0;
  PdEstimate calibration_lpfa;
  std::string paper_ref;
};

struct TableReport {
  std::string table;
  std::vector<TableRow> rows;
  double wall_seconds = 0.0;
  std::int64_t calibrations = 0;
};

/// One configuration of a PD experiment: a rule tuned to an assumed theta.
struct ExperimentCell {
  std::string table;
  std::string cell_id;
  RuleConfig rule;
  double assumed_theta = 2.0;
  double true_theta = 2.0;
  double rho = 0.1;
  std::int64_t m = 20;
  DurationLaw duration = DurationLaw::geometric(0.1);
  double paper_value = 0.0;
  std::string paper_ref;
};

/// The cells of a published table, published values attached.
std::vector<ExperimentCell> table_cells(TableId id);

/// Calibrates each distinct (rule, assumed theta, m) once, then estimates PD
/// per cell. Calibration noise depends only on m and PD noise only on the
/// true theta and duration law, so rules and rows share common random numbers.
std::vector<TableRow> run_cells(const std::vector<ExperimentCell>& cells, const TableRunOptions& options,
                                std::int64_t* calibrations = nullptr);

TableReport reproduce_table(TableId id, const TableRunOptions& options);

struct MismatchGrid {
  std::vector<double> assumed_thetas;
  std::vector<double> true_thetas;
  double rho = 0.1;
  std::int64_t m = 20;
  std::int64_t fma_window = 10;
  std::optional<DurationLaw> duration;  // defaults to Geom(rho)
};

std::vector<TableRow> run_mismatch_study(const MismatchGrid& grid, const TableRunOptions& options);

/// CSV with header
/// table,cell_id,rule,assumed_theta,true_theta,rho,m,alpha,L,duration_law,pd_hat,se,paper_value,pass
std::string rows_to_csv(const std::vector<TableRow>& rows);

}  // namespace tcd
