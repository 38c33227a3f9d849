#include "tcd/tables.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

#include "tcd/rng.hpp"

namespace tcd {

namespace {

constexpr double kNoValue = std::numeric_limits<double>::quiet_NaN();

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string fmt(double v, int digits = 6) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string one_decimal(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

const std::vector<double> kRhos = {0.2, 0.1, 0.05};

// Published PD values, [block][rho index] with rows (T_rho, other rule).
struct Block {
  double theta;
  std::int64_t m;
  double first[3];
  double second[3];
};

const Block kTableI[] = {
    {2.0, 20, {0.3677, 0.6099, 0.7843}, {0.3512, 0.5014, 0.6394}},
    {2.0, 80, {0.3290, 0.5659, 0.7797}, {0.3220, 0.4763, 0.6029}},
    {1.2, 20, {0.1510, 0.3547, 0.5641}, {0.1424, 0.3142, 0.4738}},
    {1.2, 80, {0.1197, 0.2917, 0.4910}, {0.1016, 0.2694, 0.4423}},
};

// Columns are N = 5, 10, 20.
const Block kTableII[] = {
    {2.0, 20, {0.6739, 0.9790, 0.998}, {0.7454, 0.9956, 0.999}},
    {2.0, 80, {0.5574, 0.9632, 0.998}, {0.6246, 0.9880, 0.999}},
    {1.2, 20, {0.0886, 0.4662, 0.9205}, {0.1355, 0.5452, 0.9629}},
    {1.2, 80, {0.0383, 0.3356, 0.8666}, {0.0739, 0.4023, 0.9203}},
};

const Block kTableIV[] = {
    {2.0, 20, {0.3747, 0.6179, 0.7855}, {0.3702, 0.6121, 0.7848}},
    {2.0, 60, {0.3340, 0.5787, 0.7695}, {0.3286, 0.5776, 0.7618}},
    {2.0, 100, {0.3216, 0.5624, 0.7598}, {0.3192, 0.5613, 0.7520}},
};

const Block kTableV[] = {
    {1.2, 20, {0.1294, 0.3392, 0.5892}, {0.1271, 0.3385, 0.5791}},
    {1.2, 60, {0.0927, 0.2922, 0.5377}, {0.0875, 0.2851, 0.5270}},
    {1.2, 100, {0.0890, 0.2728, 0.5163}, {0.0839, 0.2656, 0.5066}},
};

const std::vector<double> kMismatchAssumed = {2.0, 1.8, 1.6, 1.4, 1.2};
const std::vector<double> kMismatchTrue = {1.0, 1.2, 1.4, 1.6, 1.8, 2.0};

// [assumed theta][true theta] for T_rho and FMA.
const double kTableIIIRho[5][6] = {
    {0.1654, 0.2742, 0.3870, 0.4772, 0.5517, 0.6091},
    {0.1776, 0.2929, 0.3952, 0.4852, 0.5523, 0.6064},
    {0.1975, 0.3077, 0.4088, 0.4888, 0.5530, 0.6029},
    {0.2099, 0.3193, 0.4109, 0.4851, 0.5454, 0.5925},
    {0.2219, 0.3226, 0.4083, 0.4792, 0.5352, 0.5806},
};
const double kTableIIIFma[5][6] = {
    {0.2452, 0.3341, 0.3994, 0.4436, 0.4847, 0.5162},
    {0.2464, 0.3351, 0.3972, 0.4465, 0.4837, 0.5170},
    {0.2467, 0.3338, 0.3992, 0.4461, 0.4846, 0.5178},
    {0.2453, 0.3349, 0.3993, 0.4462, 0.4854, 0.5168},
    {0.2473, 0.3357, 0.3986, 0.4471, 0.4847, 0.5160},
};

std::int64_t window_for(double rho) { return static_cast<std::int64_t>(std::lround(1.0 / rho)); }

ExperimentCell make_cell(std::string table, std::string cell_id, RuleConfig rule, double theta, double theta_r,
                         double rho, std::int64_t m, DurationLaw duration, double paper, std::string ref) {
  ExperimentCell c;
  c.table = std::move(table);
  c.cell_id = std::move(cell_id);
  c.rule = std::move(rule);
  c.assumed_theta = theta;
  c.true_theta = theta_r;
  c.rho = rho;
  c.m = m;
  c.duration = std::move(duration);
  c.paper_value = paper;
  c.paper_ref = std::move(ref);
  return c;
}

std::string rho_cell_id(double theta, std::int64_t m, double rho) {
  return "theta=" + one_decimal(theta) + ";m=" + std::to_string(m) + ";rho=" + fmt(rho);
}

void geometric_blocks(std::vector<ExperimentCell>& out, const std::string& table, const Block* blocks,
                      std::size_t count, bool second_is_fma) {
  const std::string ref = "Table " + table;
  for (std::size_t b = 0; b < count; ++b) {
    const Block& blk = blocks[b];
    for (std::size_t i = 0; i < kRhos.size(); ++i) {
      const double rho = kRhos[i];
      const std::string id = rho_cell_id(blk.theta, blk.m, rho);
      out.push_back(make_cell(table, id, RuleConfig::modified_cusum(rho), blk.theta, blk.theta, rho, blk.m,
                              DurationLaw::geometric(rho), blk.first[i], ref));
      const RuleConfig other =
          second_is_fma ? RuleConfig::fma(window_for(rho), InputForm::observation) : RuleConfig::cusum();
      out.push_back(make_cell(table, id, other, blk.theta, blk.theta, rho, blk.m, DurationLaw::geometric(rho),
                              blk.second[i], ref));
    }
  }
}

std::string calibration_key(const ExperimentCell& c) {
  std::ostringstream os;
  os << rule_name(c.rule.rule) << '|' << c.rule.rho << '|' << c.rule.window << '|'
     << static_cast<int>(c.rule.input) << '|' << c.m << '|';
  // The observation-form FMA never looks at theta.
  if (!(c.rule.rule == Rule::fma && c.rule.input == InputForm::observation)) os << c.assumed_theta;
  return os.str();
}

}  // namespace

std::optional<TableId> parse_table_id(std::string_view id) {
  for (TableId t : {TableId::I, TableId::II, TableId::III, TableId::IV, TableId::V}) {
    if (table_name(t) == id) return t;
  }
  return std::nullopt;
}

std::string_view table_name(TableId id) {
  switch (id) {
    case TableId::I: return "I";
    case TableId::II: return "II";
    case TableId::III: return "III";
    case TableId::IV: return "IV";
    case TableId::V: return "V";
  }
  return "?";
}

void TableRunOptions::validate() const {
  if (pd_replications < 1) throw DomainError("pd replications must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  if (static_cast<double>(calibration_replications) < 10.0 / alpha)
    throw DomainError("calibration replications must be at least 10 / alpha");
  if (!(tolerance > 0.0)) throw DomainError("tolerance must be positive");
}

std::vector<ExperimentCell> table_cells(TableId id) {
  std::vector<ExperimentCell> cells;
  switch (id) {
    case TableId::I:
      geometric_blocks(cells, "I", kTableI, std::size(kTableI), true);
      break;
    case TableId::II: {
      const std::int64_t durations[3] = {5, 10, 20};
      for (const Block& blk : kTableII) {
        for (std::size_t i = 0; i < 3; ++i) {
          const std::int64_t n = durations[i];
          const double rho = 1.0 / static_cast<double>(n);
          const std::string id2 = "theta=" + one_decimal(blk.theta) + ";m=" + std::to_string(blk.m) +
                                  ";N=" + std::to_string(n);
          cells.push_back(make_cell("II", id2, RuleConfig::modified_cusum(rho), blk.theta, blk.theta, rho, blk.m,
                                    DurationLaw::fixed(n), blk.first[i], "Table II"));
          cells.push_back(make_cell("II", id2, RuleConfig::fma(n, InputForm::observation), blk.theta, blk.theta,
                                    rho, blk.m, DurationLaw::fixed(n), blk.second[i], "Table II"));
        }
      }
      break;
    }
    case TableId::III:
      for (std::size_t a = 0; a < kMismatchAssumed.size(); ++a) {
        for (std::size_t t = 0; t < kMismatchTrue.size(); ++t) {
          const double theta = kMismatchAssumed[a];
          const double theta_r = kMismatchTrue[t];
          const std::string id3 = "theta=" + one_decimal(theta) + ";theta_r=" + one_decimal(theta_r);
          cells.push_back(make_cell("III", id3, RuleConfig::modified_cusum(0.1), theta, theta_r, 0.1, 20,
                                    DurationLaw::geometric(0.1), kTableIIIRho[a][t], "Table III"));
          cells.push_back(make_cell("III", id3, RuleConfig::fma(10, InputForm::observation), theta, theta_r, 0.1,
                                    20, DurationLaw::geometric(0.1), kTableIIIFma[a][t], "Table III"));
        }
      }
      break;
    case TableId::IV:
      geometric_blocks(cells, "IV", kTableIV, std::size(kTableIV), false);
      break;
    case TableId::V:
      geometric_blocks(cells, "V", kTableV, std::size(kTableV), false);
      break;
  }
  return cells;
}

std::vector<TableRow> run_cells(const std::vector<ExperimentCell>& cells, const TableRunOptions& options,
                                std::int64_t* calibrations) {
  options.validate();
  std::map<std::string, CalibrationResult> calibrated;
  std::vector<TableRow> rows;
  rows.reserve(cells.size());
  for (const ExperimentCell& cell : cells) {
    const GaussianModel assumed(cell.assumed_theta, 1.0);
    const std::string key = calibration_key(cell);
    auto it = calibrated.find(key);
    if (it == calibrated.end()) {
      CalibrationSpec spec;
      spec.target_alpha = options.alpha;
      spec.window_m = cell.m;
      spec.replications = options.calibration_replications;
      spec.seed = derive_seed(options.seed, fnv1a("calibrate|m=" + std::to_string(cell.m)));
      spec.threads = options.threads;
      it = calibrated.emplace(key, calibrate_threshold(cell.rule, spec, assumed)).first;
    }
    const CalibrationResult& cal = it->second;

    ExperimentSpec exp;
    exp.model = assumed;
    exp.true_theta = cell.true_theta;
    exp.duration = cell.duration;
    exp.replications = options.pd_replications;
    exp.seed = derive_seed(options.seed, fnv1a("pd|theta_r=" + fmt(cell.true_theta) + "|" + cell.duration.label()));
    exp.threads = options.threads;

    TableRow row;
    row.table = cell.table;
    row.cell_id = cell.cell_id;
    row.rule = cell.rule.name();
    row.assumed_theta = cell.assumed_theta;
    row.true_theta = cell.true_theta;
    row.rho = cell.rho;
    row.m = cell.m;
    row.alpha = options.alpha;
    row.window = cell.rule.rule == Rule::fma ? cell.rule.window : window_for(cell.rho);
    row.duration_law = cell.duration.label();
    row.pd = estimate_pd(cell.rule, cal.threshold, exp);
    row.paper_value = cell.paper_value;
    row.pass = !std::isnan(cell.paper_value) && std::abs(row.pd.pd_hat - cell.paper_value) <= options.tolerance;
    row.threshold = cal.threshold;
    row.calibration_lpfa = cal.lpfa;
    row.paper_ref = cell.paper_ref;
    rows.push_back(std::move(row));
  }
  if (calibrations != nullptr) *calibrations = static_cast<std::int64_t>(calibrated.size());
  return rows;
}

TableReport reproduce_table(TableId id, const TableRunOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  TableReport report;
  report.table = std::string(table_name(id));
  report.rows = run_cells(table_cells(id), options, &report.calibrations);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::vector<TableRow> run_mismatch_study(const MismatchGrid& grid, const TableRunOptions& options) {
  if (grid.assumed_thetas.empty() || grid.true_thetas.empty()) throw DomainError("mismatch grid is empty");
  const DurationLaw duration = grid.duration.value_or(DurationLaw::geometric(grid.rho));
  std::vector<ExperimentCell> cells;
  for (double theta : grid.assumed_thetas) {
    for (double theta_r : grid.true_thetas) {
      const std::string id = "theta=" + fmt(theta) + ";theta_r=" + fmt(theta_r);
      cells.push_back(make_cell("mismatch", id, RuleConfig::modified_cusum(grid.rho), theta, theta_r, grid.rho,
                                grid.m, duration, kNoValue, "Table III"));
      cells.push_back(make_cell("mismatch", id, RuleConfig::fma(grid.fma_window, InputForm::observation), theta,
                                theta_r, grid.rho, grid.m, duration, kNoValue, "Table III"));
    }
  }
  return run_cells(cells, options);
}

std::string rows_to_csv(const std::vector<TableRow>& rows) {
  std::ostringstream os;
  os << "table,cell_id,rule,assumed_theta,true_theta,rho,m,alpha,L,duration_law,pd_hat,se,paper_value,pass\n";
  for (const auto& r : rows) {
    os << r.table << ',' << r.cell_id << ',' << r.rule << ',' << fmt(r.assumed_theta) << ',' << fmt(r.true_theta)
       << ',' << fmt(r.rho) << ',' << r.m << ',' << fmt(r.alpha) << ',' << r.window << ',' << r.duration_law << ','
       << fmt(r.pd.pd_hat) << ',' << fmt(r.pd.std_error) << ',' << fmt(r.paper_value) << ','
       << (std::isnan(r.paper_value) ? "" : (r.pass ? "true" : "false")) << '\n';
  }
  return os.str();
}

}  // namespace tcd
