// tcd: calibration, detection-probability tables, mismatch studies and the
// streak pipeline from the command line.
//
// Exit codes: 0 ok, 1 internal error, 2 configuration error, 3 calibration
// bracket failure, 4 unreadable or corrupt frame file.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tcd/detectors.hpp"
#include "tcd/frame_io.hpp"
#include "tcd/model.hpp"
#include "tcd/montecarlo.hpp"
#include "tcd/parallel.hpp"
#include "tcd/streak.hpp"
#include "tcd/tables.hpp"

namespace {

using nlohmann::ordered_json;
using namespace tcd;

enum Exit { kOk = 0, kInternal = 1, kConfig = 2, kBracket = 3, kCorrupt = 4 };

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::runtime_error("invalid --" + field + ": " + what) {}
};

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field, what);
}

// ---------------------------------------------------------------- options

struct Common {
  std::uint64_t seed = 1;
  unsigned threads = 0;
  std::string out;
  std::string manifest;
};

struct ModelOpts {
  double theta = 1.0;
  double sigma = 1.0;
  std::vector<double> pre_pmf;
  std::vector<double> post_pmf;
};

struct RuleOpts {
  std::string rule = "mod-cusum";
  double rho = 0.1;
  std::int64_t window = 10;
  std::string input;
  std::vector<double> wl_base;
};

struct CalOpts {
  std::int64_t m = 20;
  double alpha = 0.001;
  std::int64_t reps = 1'000'000;
  double tolerance = 0.05;
  std::vector<double> bracket;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Master seed");
  app->add_option("--threads", c.threads, "Worker threads (0 = available parallelism; TD_THREADS overrides)");
  app->add_option("--out", c.out, "Output file (default: stdout)");
  app->add_option("--manifest", c.manifest, "Run manifest with wall time (default: <out>.manifest.json)");
}

void add_model(CLI::App* app, ModelOpts& m) {
  app->add_option("--theta", m.theta, "Assumed post-change mean (Gaussian)");
  app->add_option("--sigma", m.sigma, "Noise standard deviation (Gaussian)");
  app->add_option("--pre-pmf", m.pre_pmf, "Pre-change pmf of a discrete model");
  app->add_option("--post-pmf", m.post_pmf, "Post-change pmf of a discrete model");
}

void add_rule(CLI::App* app, RuleOpts& r) {
  app->add_option("--rule", r.rule, "mod-cusum | cusum | fma | wl-cusum");
  app->add_option("--rho", r.rho, "Discount of the modified CUSUM");
  app->add_option("--L", r.window, "Window length of FMA and WL-CUSUM");
  app->add_option("--input", r.input, "FMA input: llr | observation (default observation)");
  app->add_option("--wl-base", r.wl_base, "WL-CUSUM base thresholds A(1..L)");
}

void add_calibration(CLI::App* app, CalOpts& c) {
  app->add_option("--m", c.m, "Local false-alarm window");
  app->add_option("--alpha", c.alpha, "Target local false-alarm probability");
  app->add_option("--reps", c.reps, "Calibration replications");
  app->add_option("--tolerance", c.tolerance, "Relative tolerance on the achieved LPFA");
  app->add_option("--bracket", c.bracket, "Threshold search interval: lo hi")->expected(2);
}

unsigned effective_threads(unsigned flag) {
  if (const char* env = std::getenv("TD_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 0) throw ConfigError("threads", "TD_THREADS must be a nonnegative integer");
    return static_cast<unsigned>(v);
  }
  return flag;
}

LlrModel build_model(const ModelOpts& m) {
  if (!m.pre_pmf.empty() || !m.post_pmf.empty()) {
    require(!m.pre_pmf.empty() && !m.post_pmf.empty(), "pre-pmf", "discrete models need both --pre-pmf and --post-pmf");
    try {
      return DiscreteModel(m.pre_pmf, m.post_pmf);
    } catch (const DomainError& e) {
      throw ConfigError("pre-pmf", e.what());
    }
  }
  require(std::isfinite(m.theta) && m.theta != 0.0, "theta", "must be finite and nonzero");
  require(std::isfinite(m.sigma) && m.sigma > 0.0, "sigma", "must be positive");
  return GaussianModel(m.theta, m.sigma);
}

RuleConfig build_rule(const RuleOpts& r) {
  const auto rule = parse_rule(r.rule);
  require(rule.has_value(), "rule", "expected one of mod-cusum, cusum, fma, wl-cusum");
  InputForm input = InputForm::observation;
  if (!r.input.empty()) {
    require(r.input == "llr" || r.input == "observation", "input", "expected llr or observation");
    input = r.input == "llr" ? InputForm::llr : InputForm::observation;
  }
  switch (*rule) {
    case Rule::modified_cusum:
      require(r.rho >= 0.0 && r.rho < 1.0, "rho", "must lie in [0, 1)");
      return RuleConfig::modified_cusum(r.rho);
    case Rule::cusum:
      return RuleConfig::cusum();
    case Rule::fma:
      require(r.window >= 1, "L", "must be at least 1");
      return RuleConfig::fma(r.window, input);
    case Rule::wl_cusum:
      require(r.window >= 1, "L", "must be at least 1");
      require(r.wl_base.empty() || static_cast<std::int64_t>(r.wl_base.size()) == r.window, "wl-base",
              "needs exactly L values");
      return RuleConfig::wl_cusum(r.window, r.wl_base);
  }
  throw ConfigError("rule", "unsupported");
}

CalibrationSpec build_calibration(const CalOpts& c, const Common& common) {
  require(c.alpha > 0.0 && c.alpha < 1.0, "alpha", "must lie in (0, 1)");
  require(c.m >= 1, "m", "must be at least 1");
  require(c.reps >= 1, "reps", "must be positive");
  require(static_cast<double>(c.reps) >= 10.0 / c.alpha, "reps", "must be at least 10 / alpha");
  require(c.tolerance > 0.0, "tolerance", "must be positive");
  CalibrationSpec spec;
  spec.target_alpha = c.alpha;
  spec.window_m = c.m;
  spec.replications = c.reps;
  spec.seed = common.seed;
  spec.tolerance = c.tolerance;
  spec.threads = effective_threads(common.threads);
  if (!c.bracket.empty()) {
    require(c.bracket.size() == 2 && c.bracket[0] < c.bracket[1], "bracket", "needs lo < hi");
    spec.bracket = std::make_pair(c.bracket[0], c.bracket[1]);
  }
  return spec;
}

DurationLaw parse_duration(const std::string& s) {
  try {
    if (s == "infinite") return DurationLaw::infinite();
    const auto colon = s.find(':');
    require(colon != std::string::npos, "duration", "expected geom:<rho>, fixed:<n> or infinite");
    const std::string kind = s.substr(0, colon);
    const std::string value = s.substr(colon + 1);
    std::size_t used = 0;
    if (kind == "geom") {
      const double rho = std::stod(value, &used);
      require(used == value.size(), "duration", "malformed rho");
      return DurationLaw::geometric(rho);
    }
    if (kind == "fixed") {
      const long long n = std::stoll(value, &used);
      require(used == value.size(), "duration", "malformed length");
      return DurationLaw::fixed(n);
    }
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const ConfigError*>(&e) == nullptr) throw ConfigError("duration", e.what());
  }
  throw ConfigError("duration", "expected geom:<rho>, fixed:<n> or infinite");
}

// ---------------------------------------------------------------- output

void emit(const std::string& text, const Common& c) {
  if (c.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream os(c.out, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + c.out);
  os << text;
}

void write_manifest(const Common& c, const std::string& command, double seconds, const ordered_json& extra = {}) {
  std::string path = c.manifest;
  if (path.empty() && !c.out.empty()) path = c.out + ".manifest.json";
  if (path.empty()) return;
  ordered_json m;
  m["command"] = command;
  m["seed"] = c.seed;
  m["threads"] = resolve_threads(effective_threads(c.threads));
  m["wall_seconds"] = seconds;
  if (!extra.is_null()) m["details"] = extra;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << m.dump(2) << '\n';
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// ---------------------------------------------------------------- commands

struct CalibrateCmd {
  Common common;
  ModelOpts model;
  RuleOpts rule;
  CalOpts cal;

  int run() {
    const Stopwatch clock;
    const auto r = build_rule(rule);
    const auto m = build_model(model);
    const auto spec = build_calibration(cal, common);
    const auto res = calibrate_threshold(r, spec, m);
    ordered_json j;
    j["command"] = "calibrate";
    j["rule"] = r.name();
    j["m"] = spec.window_m;
    j["alpha"] = spec.target_alpha;
    j["seed"] = spec.seed;
    j["threshold"] = res.threshold;
    j["lpfa"] = res.lpfa.pd_hat;
    j["se"] = res.lpfa.std_error;
    j["replications"] = res.lpfa.replications;
    j["iterations"] = res.iterations;
    j["within_tolerance"] = res.within_tolerance;
    j["paper_ref"] = "Tables I-V";
    emit(j.dump(2) + "\n", common);
    write_manifest(common, "calibrate", clock.seconds());
    return kOk;
  }
};

struct PdCmd {
  Common common;
  ModelOpts model;
  RuleOpts rule;
  CalOpts cal;
  std::optional<double> threshold;
  std::optional<double> true_theta;
  std::string duration = "geom:0.1";
  std::int64_t reps = 100'000;

  int run() {
    const Stopwatch clock;
    const auto r = build_rule(rule);
    const auto m = build_model(model);
    const auto law = parse_duration(duration);
    require(!law.is_infinite(), "duration", "detection within an infinite change is not a PD experiment");
    require(reps >= 1, "reps", "must be positive");
    if (true_theta) require(std::holds_alternative<GaussianModel>(m), "true-theta", "applies to Gaussian models");

    ordered_json j;
    j["command"] = "pd";
    j["rule"] = r.name();
    double h = 0.0;
    if (threshold) {
      h = *threshold;
    } else {
      const auto spec = build_calibration(cal, common);
      const auto res = calibrate_threshold(r, spec, m);
      h = res.threshold;
      j["calibration"] = {{"m", spec.window_m}, {"alpha", spec.target_alpha}, {"lpfa", res.lpfa.pd_hat},
                          {"se", res.lpfa.std_error}};
    }
    ExperimentSpec exp;
    exp.model = m;
    exp.true_theta = true_theta;
    exp.duration = law;
    exp.replications = reps;
    exp.seed = common.seed;
    exp.threads = effective_threads(common.threads);
    const auto pd = estimate_pd(r, h, exp);
    j["threshold"] = h;
    j["duration_law"] = law.label();
    j["pd_hat"] = pd.pd_hat;
    j["se"] = pd.std_error;
    j["replications"] = pd.replications;
    j["seed"] = common.seed;
    j["paper_ref"] = "Tables I-V";
    emit(j.dump(2) + "\n", common);
    write_manifest(common, "pd", clock.seconds());
    return kOk;
  }
};

ordered_json rows_json(const std::vector<TableRow>& rows) {
  ordered_json arr = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json o;
    o["table"] = r.table;
    o["cell_id"] = r.cell_id;
    o["rule"] = r.rule;
    o["assumed_theta"] = r.assumed_theta;
    o["true_theta"] = r.true_theta;
    o["rho"] = r.rho;
    o["m"] = r.m;
    o["alpha"] = r.alpha;
    o["L"] = r.window;
    o["duration_law"] = r.duration_law;
    o["threshold"] = r.threshold;
    o["calibration_lpfa"] = r.calibration_lpfa.pd_hat;
    o["pd_hat"] = r.pd.pd_hat;
    o["se"] = r.pd.std_error;
    o["paper_value"] = std::isnan(r.paper_value) ? ordered_json(nullptr) : ordered_json(r.paper_value);
    o["pass"] = std::isnan(r.paper_value) ? ordered_json(nullptr) : ordered_json(r.pass);
    o["paper_ref"] = r.paper_ref;
    arr.push_back(std::move(o));
  }
  return arr;
}

struct TableOpts {
  std::int64_t reps = 100'000;
  std::int64_t cal_reps = 1'000'000;
  double alpha = 0.001;
  double tolerance = 0.02;
  std::string json;

  TableRunOptions build(const Common& c) const {
    require(reps >= 1, "reps", "must be positive");
    require(alpha > 0.0 && alpha < 1.0, "alpha", "must lie in (0, 1)");
    require(static_cast<double>(cal_reps) >= 10.0 / alpha, "cal-reps", "must be at least 10 / alpha");
    require(tolerance > 0.0, "tolerance", "must be positive");
    TableRunOptions o;
    o.pd_replications = reps;
    o.calibration_replications = cal_reps;
    o.alpha = alpha;
    o.tolerance = tolerance;
    o.seed = c.seed;
    o.threads = effective_threads(c.threads);
    return o;
  }

  void write_json(const std::vector<TableRow>& rows) const {
    if (json.empty()) return;
    std::ofstream os(json);
    if (!os) throw std::runtime_error("cannot write " + json);
    os << rows_json(rows).dump(2) << '\n';
  }
};

void add_table_opts(CLI::App* app, TableOpts& t) {
  app->add_option("--reps", t.reps, "PD replications per cell");
  app->add_option("--cal-reps", t.cal_reps, "Calibration replications");
  app->add_option("--alpha", t.alpha, "Target local false-alarm probability");
  app->add_option("--tolerance", t.tolerance, "Absolute tolerance against published values");
  app->add_option("--json", t.json, "Also write rows as JSON");
}

struct TableCmd {
  Common common;
  TableOpts opts;
  std::string id;

  int run() {
    const Stopwatch clock;
    const auto tid = parse_table_id(id);
    require(tid.has_value(), "id", "expected one of I, II, III, IV, V");
    const auto report = reproduce_table(*tid, opts.build(common));
    emit(rows_to_csv(report.rows), common);
    opts.write_json(report.rows);
    write_manifest(common, "table", clock.seconds(), {{"table", report.table}, {"calibrations", report.calibrations}});
    return kOk;
  }
};

struct MismatchCmd {
  Common common;
  TableOpts opts;
  std::vector<double> assumed{2.0, 1.8, 1.6, 1.4, 1.2};
  std::vector<double> truth{2.0, 1.8, 1.6, 1.4, 1.2, 1.0};
  double rho = 0.1;
  std::int64_t m = 20;
  std::int64_t window = 10;
  std::string duration;

  int run() {
    const Stopwatch clock;
    require(rho > 0.0 && rho < 1.0, "rho", "must lie in (0, 1)");
    require(m >= 1, "m", "must be at least 1");
    require(window >= 1, "L", "must be at least 1");
    for (double t : assumed) require(std::isfinite(t) && t != 0.0, "assumed", "values must be finite and nonzero");
    for (double t : truth) require(std::isfinite(t), "true", "values must be finite");
    MismatchGrid grid;
    grid.assumed_thetas = assumed;
    grid.true_thetas = truth;
    grid.rho = rho;
    grid.m = m;
    grid.fma_window = window;
    if (!duration.empty()) {
      grid.duration = parse_duration(duration);
      require(!grid.duration->is_infinite(), "duration", "must be finite");
    }
    const auto rows = run_mismatch_study(grid, opts.build(common));
    emit(rows_to_csv(rows), common);
    opts.write_json(rows);
    write_manifest(common, "mismatch", clock.seconds());
    return kOk;
  }
};

struct ArlCmd {
  Common common;
  ModelOpts model;
  RuleOpts rule;
  CalOpts cal;
  bool simulate = false;
  std::optional<double> threshold;
  std::int64_t reps = 100'000;
  std::int64_t cap = 10'000'000;

  int run() {
    const Stopwatch clock;
    require(cal.alpha > 0.0 && cal.alpha < 1.0, "alpha", "must lie in (0, 1)");
    require(cal.m >= 1, "m", "must be at least 1");
    ordered_json j;
    j["command"] = "arl-bound";
    j["m"] = cal.m;
    j["alpha"] = cal.alpha;
    const double gamma = gamma_bound(cal.m, cal.alpha);
    j["gamma"] = gamma;
    if (simulate) {
      require(reps >= 2, "reps", "must be at least 2");
      require(cap >= 1, "cap", "must be positive");
      const auto r = build_rule(rule);
      const auto m = build_model(model);
      double h = 0.0;
      if (threshold) {
        h = *threshold;
      } else {
        h = calibrate_threshold(r, build_calibration(cal, common), m).threshold;
      }
      const auto arl = estimate_arl(r, h, m, reps, cap, derive_seed(common.seed, 0x61726cu),
                                    effective_threads(common.threads));
      j["rule"] = r.name();
      j["threshold"] = h;
      j["arl"] = arl.mean;
      j["se"] = arl.std_error;
      j["replications"] = arl.replications;
      j["capped"] = arl.capped;
      j["lower_bound_only"] = arl.lower_bound_only;
      j["meets_bound"] = arl.mean + 3.0 * arl.std_error >= gamma;
    }
    j["seed"] = common.seed;
    j["paper_ref"] = nullptr;
    emit(j.dump(2) + "\n", common);
    write_manifest(common, "arl-bound", clock.seconds());
    return kOk;
  }
};

// ---------------------------------------------------------------- streak

struct SearchOpts {
  std::optional<double> threshold;
  int band = 32;
  double step = 0.5;
  int window_len = 15;
  int window_width = 8;
  int min_len = 20;
  int max_gap = 14;
  double psf_width = 1.0;
  std::string shape = "segment";

  void add(CLI::App* app) {
    app->add_option("--threshold", threshold, "Standardized scan threshold");
    app->add_option("--band", band, "Width of the centered search band (px)");
    app->add_option("--direction-step", step, "Direction grid step on the borders (px)");
    app->add_option("--window-len", window_len, "Scan window length N_d (px)");
    app->add_option("--window-width", window_width, "Scan window width K_d (px)");
    app->add_option("--min-len", min_len, "Minimal streak length (px)");
    app->add_option("--max-gap", max_gap, "Sub-threshold steps bridged inside one run");
    app->add_option("--psf-width", psf_width, "Gaussian PSF width (px)");
    app->add_option("--template", shape, "Along-track template: segment | flat");
  }

  streak::SearchConfig build(int width, int height, unsigned threads) const {
    require(band >= 1, "band", "must be at least 1");
    require(step > 0.0, "direction-step", "must be positive");
    require(window_len >= 1, "window-len", "must be at least 1");
    require(window_len <= height, "window-len", "exceeds the frame height");
    require(window_width >= 1, "window-width", "must be at least 1");
    require(min_len >= 1, "min-len", "must be at least 1");
    require(max_gap >= 0, "max-gap", "must be nonnegative");
    require(psf_width > 0.0, "psf-width", "must be positive");
    require(shape == "segment" || shape == "flat", "template", "expected segment or flat");
    auto cfg = streak::SearchConfig::centered(width, height, band);
    cfg.direction_step = step;
    cfg.window_len = window_len;
    cfg.window_width = window_width;
    cfg.min_streak_len = min_len;
    cfg.max_gap = max_gap;
    cfg.psf_width = psf_width;
    cfg.shape = shape == "flat" ? streak::TemplateShape::flat : streak::TemplateShape::segment;
    if (threshold) {
      require(std::isfinite(*threshold), "threshold", "must be finite");
      cfg.threshold = *threshold;
    }
    cfg.threads = threads;
    return cfg;
  }
};

struct SynthCmd {
  Common common;
  SearchOpts search;
  int width = 512;
  int height = 512;
  double snr = 1.0;
  double length = 70.0;
  double sigma = 1.0;
  std::string base = "frame";
  std::string pgm;

  int run() {
    const Stopwatch clock;
    require(width >= 1, "w", "must be positive");
    require(height >= 1, "h", "must be positive");
    require(std::isfinite(snr) && snr >= 0.0, "snr", "must be nonnegative");
    require(std::isfinite(sigma) && sigma > 0.0, "sigma", "must be positive");
    require(length >= 1.0, "len", "must be at least 1 px");
    const auto cfg = search.build(width, height, 1);
    RngStream rng(common.seed, 0);
    streak::FrameFile file;
    file.seed = common.seed;
    if (snr > 0.0) {
      try {
        file.streak = streak::random_streak(cfg, length, snr * sigma, rng);
      } catch (const DomainError& e) {
        throw ConfigError("len", e.what());
      }
    }
    file.frame = streak::synth_frame(width, height, file.streak, sigma, rng);
    if (!pgm.empty()) file.pgm = streak::write_pgm(pgm, file.frame);
    streak::write_frame(base, file);
    ordered_json j;
    j["command"] = "streak synth";
    j["frame"] = streak::sidecar_path(base);
    j["raster"] = streak::raster_path(base);
    if (file.streak) {
      const auto& s = *file.streak;
      j["streak"] = {{"x0", s.x0}, {"y0", s.y0}, {"x1", s.x1}, {"y1", s.y1}, {"A", s.amplitude},
                     {"psf_width", s.psf_width}};
    } else {
      j["streak"] = nullptr;
    }
    j["paper_ref"] = "Fig. 5";
    emit(j.dump(2) + "\n", common);
    write_manifest(common, "streak synth", clock.seconds());
    return kOk;
  }
};

struct DetectCmd {
  Common common;
  SearchOpts search;
  std::string input;

  int run() {
    const Stopwatch clock;
    require(!input.empty(), "in", "a frame file is required");
    const auto file = streak::read_frame(input);
    const auto cfg = search.build(file.frame.width, file.frame.height, effective_threads(common.threads));
    const auto det = streak::detect_streak(file.frame, cfg);
    ordered_json j;
    j["command"] = "streak detect";
    j["detection"] = det.detected;
    j["threshold"] = cfg.threshold;
    if (det.area) {
      const auto& a = *det.area;
      j["localization"] = {{"x0", a.area.x0}, {"y0", a.area.y0}, {"x1", a.area.x1}, {"y1", a.area.y1},
                           {"direction", a.direction}, {"start_step", a.start_step}, {"end_step", a.end_step},
                           {"coarse", {a.x_start, a.y_start, a.x_end, a.y_end}}};
    }
    if (det.estimate) {
      const auto& e = *det.estimate;
      j["estimate"] = {{"x0", e.x0_hat}, {"y0", e.y0_hat}, {"x1", e.x1_hat}, {"y1", e.y1_hat},
                       {"A", e.a_hat}, {"residual_ss", e.residual_ss}};
    }
    j["paper_ref"] = "Fig. 5";
    emit(j.dump(2) + "\n", common);
    write_manifest(common, "streak detect", clock.seconds());
    return kOk;
  }
};

struct BenchCmd {
  Common common;
  SearchOpts search;
  std::vector<double> snr{0.9, 1.0, 2.0, 5.0, 10.0};
  int trials = 1000;
  int width = 256;
  int height = 256;
  double length = 50.0;
  int bootstrap = 200;

  int run() {
    const Stopwatch clock;
    require(trials >= 1000, "trials", "must be at least 1000 per SNR point");
    require(!snr.empty(), "snr", "needs at least one value");
    for (double s : snr) require(std::isfinite(s) && s >= 0.0, "snr", "values must be nonnegative");
    require(width >= 1 && height >= 1, "w", "frame dimensions must be positive");
    require(length >= 1.0, "len", "must be at least 1 px");
    require(bootstrap >= 2, "bootstrap", "must be at least 2");
    streak::BenchOptions o;
    o.width = width;
    o.height = height;
    o.streak_len = length;
    o.trials = trials;
    o.bootstrap = bootstrap;
    o.seed = common.seed;
    o.threads = effective_threads(common.threads);
    o.search = search.build(width, height, 1);
    emit(streak::bench_to_csv(streak::bench_sd_vs_snr(snr, o)), common);
    write_manifest(common, "streak bench", clock.seconds());
    return kOk;
  }
};

// ---------------------------------------------------------------- --config

// Splices a JSON object of flag values into argv. Flags already present on
// the command line win; a "command" member supplies missing subcommands.
std::vector<std::string> splice_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config") {
      require(i + 1 < args.size(), "config", "expects a file path");
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (path.empty()) return args;

  std::ifstream is(path);
  require(static_cast<bool>(is), "config", "cannot open " + path);
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config", e.what());
  }
  require(cfg.is_object(), "config", "must be a JSON object");

  if (cfg.contains("command") && (args.size() < 2 || args[1].rfind("--", 0) == 0)) {
    std::vector<std::string> words;
    if (cfg["command"].is_string()) {
      std::istringstream ss(cfg["command"].get<std::string>());
      for (std::string w; ss >> w;) words.push_back(w);
    } else {
      throw ConfigError("config", "'command' must be a string such as \"streak bench\"");
    }
    args.insert(args.begin() + 1, words.begin(), words.end());
  }
  std::set<std::string> given;
  for (const auto& a : args)
    if (a.rfind("--", 0) == 0) given.insert(a.substr(0, a.find('=')));

  auto scalar = [](const nlohmann::json& v, const std::string& key) -> std::string {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
    if (v.is_number_float()) {
      std::ostringstream os;
      os.precision(17);
      os << v.get<double>();
      return os.str();
    }
    throw ConfigError(key, "unsupported value in config");
  };
  for (const auto& [key, value] : cfg.items()) {
    if (key == "command") continue;
    const std::string flag = "--" + key;
    if (given.count(flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_array()) {
      args.push_back(flag);
      for (const auto& v : value) args.push_back(scalar(v, key));
    } else if (!value.is_null()) {
      args.push_back(flag);
      args.push_back(scalar(value, key));
    }
  }
  return args;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  args = splice_config(std::move(args));

  CLI::App app{"Transient change detection toolkit"};
  app.set_help_flag("--help", "Print help and exit");
  app.require_subcommand(1);
  app.add_option("--config", "JSON file with flag values (flags given on the command line win)");

  CalibrateCmd calibrate;
  auto* c = app.add_subcommand("calibrate", "Calibrate a threshold to a local false-alarm probability");
  c->set_help_flag("--help");
  add_common(c, calibrate.common);
  add_model(c, calibrate.model);
  add_rule(c, calibrate.rule);
  add_calibration(c, calibrate.cal);

  PdCmd pd;
  auto* p = app.add_subcommand("pd", "Estimate the probability of detection");
  p->set_help_flag("--help");
  add_common(p, pd.common);
  add_model(p, pd.model);
  add_rule(p, pd.rule);
  add_calibration(p, pd.cal);
  p->add_option("--threshold", pd.threshold, "Threshold (default: calibrate first)");
  p->add_option("--true-theta", pd.true_theta, "True post-change mean (default: assumed)");
  p->add_option("--duration", pd.duration, "geom:<rho> | fixed:<n>");
  p->add_option("--pd-reps", pd.reps, "PD replications");

  TableCmd table;
  auto* t = app.add_subcommand("table", "Reproduce a published PD table");
  t->set_help_flag("--help");
  add_common(t, table.common);
  add_table_opts(t, table.opts);
  t->add_option("--id", table.id, "I | II | III | IV | V")->required();

  MismatchCmd mismatch;
  auto* mm = app.add_subcommand("mismatch", "Assumed versus true intensity study");
  mm->set_help_flag("--help");
  add_common(mm, mismatch.common);
  add_table_opts(mm, mismatch.opts);
  mm->add_option("--assumed", mismatch.assumed, "Assumed intensities");
  mm->add_option("--true", mismatch.truth, "True intensities");
  mm->add_option("--rho", mismatch.rho, "Discount of the modified CUSUM");
  mm->add_option("--m", mismatch.m, "Local false-alarm window");
  mm->add_option("--L", mismatch.window, "FMA window");
  mm->add_option("--duration", mismatch.duration, "geom:<rho> | fixed:<n> (default geom:<rho>)");

  ArlCmd arl;
  auto* a = app.add_subcommand("arl-bound", "ARL implied by a local false-alarm constraint");
  a->set_help_flag("--help");
  add_common(a, arl.common);
  add_model(a, arl.model);
  add_rule(a, arl.rule);
  add_calibration(a, arl.cal);
  a->add_flag("--simulate", arl.simulate, "Also calibrate the rule and estimate its ARL");
  a->add_option("--threshold", arl.threshold, "Threshold (default: calibrate)");
  a->add_option("--arl-reps", arl.reps, "ARL replications");
  a->add_option("--cap", arl.cap, "Run-length cap per replication");

  auto* s = app.add_subcommand("streak", "Streak synthesis, detection and benchmarking");
  s->set_help_flag("--help");
  s->require_subcommand(1);

  SynthCmd synth;
  auto* ss = s->add_subcommand("synth", "Synthesize a frame");
  ss->set_help_flag("--help");
  add_common(ss, synth.common);
  synth.search.add(ss);
  ss->add_option("--w", synth.width, "Frame width");
  ss->add_option("--h", synth.height, "Frame height");
  ss->add_option("--snr", synth.snr, "A / sigma; 0 gives pure noise");
  ss->add_option("--len", synth.length, "Streak length (px)");
  ss->add_option("--sigma", synth.sigma, "Noise standard deviation");
  ss->add_option("--frame", synth.base, "Output base name for <base>.json and <base>.f32");
  ss->add_option("--pgm", synth.pgm, "Also export a 16-bit PGM");

  DetectCmd detect;
  auto* sd = s->add_subcommand("detect", "Detect and localize a streak");
  sd->set_help_flag("--help");
  add_common(sd, detect.common);
  detect.search.add(sd);
  sd->add_option("--in", detect.input, "Frame file (.json or .f32)")->required();

  BenchCmd bench;
  auto* sb = s->add_subcommand("bench", "Endpoint SD versus SNR");
  sb->set_help_flag("--help");
  add_common(sb, bench.common);
  bench.search.add(sb);
  sb->add_option("--snr", bench.snr, "SNR grid");
  sb->add_option("--trials", bench.trials, "Trials per SNR point");
  sb->add_option("--w", bench.width, "Frame width");
  sb->add_option("--h", bench.height, "Frame height");
  sb->add_option("--len", bench.length, "Streak length (px)");
  sb->add_option("--bootstrap", bench.bootstrap, "Bootstrap resamples for the SEs");

  std::vector<std::string> rest(args.rbegin(), args.rend() - 1);
  try {
    app.parse(std::move(rest));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  if (c->parsed()) return calibrate.run();
  if (p->parsed()) return pd.run();
  if (t->parsed()) return table.run();
  if (mm->parsed()) return mismatch.run();
  if (a->parsed()) return arl.run();
  if (ss->parsed()) return synth.run();
  if (sd->parsed()) return detect.run();
  if (sb->parsed()) return bench.run();
  return kConfig;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const BracketError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBracket;
  } catch (const streak::FrameIoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCorrupt;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInternal;
  }
}
