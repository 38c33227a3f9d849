#pragma once

// Faint linear streak detection in 2-D frames: a matched-filter FMA slid
// along candidate near-vertical directions localizes the streak, then a
// least-squares fit with the amplitude profiled out refines its endpoints.
//
// Pixel (x, y) has its center at integer coordinates; x is the column and y
// the row. Rasters are row-major.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tcd/rng.hpp"

namespace tcd::streak {

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct Rect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool empty() const { return x1 <= x0 || y1 <= y0; }
  bool contains(double x, double y) const { return x >= x0 && x <= x1 - 1 && y >= y0 && y <= y1 - 1; }
  bool contains(const Rect& r) const { return r.x0 >= x0 && r.y0 >= y0 && r.x1 <= x1 && r.y1 <= y1; }
  Rect intersect(const Rect& r) const;
  Rect dilate(int px) const { return {x0 - px, y0 - px, x1 + px, y1 + px}; }
};

struct Frame {
  int width = 0;
  int height = 0;
  double sigma = 1.0;
  std::vector<float> pixels;

  Frame() = default;
  Frame(int width, int height, double sigma);

  float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  Rect bounds() const { return {0, 0, width, height}; }
  void validate() const;
};

struct StreakParams {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;
  double amplitude = 1.0;
  double psf_width = 1.0;

  double length() const;
};

/// A profile raster over `region`.
struct Profile {
  Rect region;
  std::vector<double> values;

  double at(int x, int y) const {
    return values[static_cast<std::size_t>(y - region.y0) * region.width() + (x - region.x0)];
  }
};

inline constexpr int kMinSamplesPerPixel = 8;

/// Unit-height Gaussian PSF integrated along the segment by dense sampling,
/// normalized so the largest pixel of the full footprint equals 1. Pixels
/// farther than 6 PSF widths from every sample are exactly zero.
Profile render_profile(const StreakParams& streak, const Rect& region, int samples_per_px = kMinSamplesPerPixel);

/// Y = A S + eps with eps ~ N(0, sigma^2) i.i.d.; no streak gives pure noise.
Frame synth_frame(int width, int height, const std::optional<StreakParams>& streak, double sigma, RngStream& rng);

/// Per-step exceedance probability 1e-3 under noise, where the standardized
/// statistic is exactly N(0, 1).
inline constexpr double kDefaultScanThreshold = 3.090232306167813;

enum class TemplateShape {
  segment,  // rendered length-N_d segment: tapered at the window ends
  flat,     // constant along the window
};

struct SearchConfig {
  Rect search_area;
  double direction_step = 0.5;
  int window_len = 15;
  int window_width = 8;
  /// Threshold on the standardized statistic R / (sigma sqrt(sum S^2)).
  double threshold = kDefaultScanThreshold;
  int min_streak_len = 20;
  /// Runs of one direction separated by at most this many sub-threshold steps
  /// count as one sequence when localizing. The default, window_len - 1, joins
  /// runs whose swept windows overlap.
  int max_gap = 14;
  double slope_cap_fraction = 0.25;
  double psf_width = 1.0;
  int dilation = 10;
  TemplateShape shape = TemplateShape::segment;
  unsigned threads = 0;

  /// Central band of `band_width` columns spanning the full frame height.
  static SearchConfig centered(int frame_width, int frame_height, int band_width = 32);
  void validate() const;
};

/// Segment from (x_top, top row) to (x_bottom, bottom row) of the search area.
struct Direction {
  int id = 0;
  double x_top = 0.0;
  double x_bottom = 0.0;
  int row_top = 0;
  int row_bottom = 0;

  double x_at(double row) const;
  double slope() const;  // dx per row
};

std::vector<Direction> enumerate_directions(const SearchConfig& cfg);

struct Run {
  int start = 0;  // first step index
  int end = 0;    // last step index, inclusive
  int length() const { return end - start + 1; }
};

/// Step k covers rows [row_top + k, row_top + k + N_d).
struct DirectionTrace {
  int direction = 0;
  std::vector<double> statistic;     // R_k
  std::vector<double> standardized;  // R_k / (sigma sqrt(sum S^2))
  std::vector<Run> runs;             // maximal runs with standardized >= threshold
  bool truncated = false;            // window left the frame somewhere

  const Run* longest_run() const;
};

DirectionTrace scan_direction(const Frame& frame, const Direction& d, const SearchConfig& cfg);

/// Scans every direction; when `keep_statistics` is false only runs are kept.
std::vector<DirectionTrace> scan_all(const Frame& frame, const std::vector<Direction>& directions,
                                     const SearchConfig& cfg, bool keep_statistics = false);

struct LocalizationArea {
  Rect area;
  int direction = 0;
  int start_step = 0;
  int end_step = 0;
  /// Coarse endpoints: window centers of the first and last steps of the run.
  double x_start = 0.0, y_start = 0.0, x_end = 0.0, y_end = 0.0;
};

/// Runs of a trace with dips of at most `max_gap` steps bridged.
std::vector<Run> bridge_runs(const std::vector<Run>& runs, int max_gap);

/// Longest bridged run over all traces (ties: lowest direction id).
std::optional<LocalizationArea> localize(const std::vector<DirectionTrace>& traces,
                                         const std::vector<Direction>& directions, const SearchConfig& cfg,
                                         const Rect& frame_bounds);

struct StreakEstimate {
  double x0_hat = 0.0, y0_hat = 0.0, x1_hat = 0.0, y1_hat = 0.0;
  double a_hat = 0.0;
  double residual_ss = 0.0;
  int evaluations = 0;
};

struct RefineOptions {
  double start_step = 2.0;
  double min_step = 0.05;
  int max_evaluations = 4000;
};

/// Sum over the area of (Y - A S(X))^2 for a given A.
double full_objective(const Frame& frame, const Rect& area, const StreakParams& x, double amplitude);

/// Amplitude profiled out: A(X) = sum Y S / sum S^2. Returns {objective, A(X)}.
std::pair<double, double> reduced_objective(const Frame& frame, const Rect& area, const StreakParams& x);

/// Coordinate descent with shrinking steps on the reduced objective, endpoints
/// kept inside the area. Empty when the fitted amplitude is not positive.
std::optional<StreakEstimate> refine_ml(const Frame& frame, const LocalizationArea& area, const StreakParams& init,
                                        const RefineOptions& options = {});

struct Detection {
  bool detected = false;
  std::optional<LocalizationArea> area;
  std::optional<StreakEstimate> estimate;
};

Detection detect_streak(const Frame& frame, const SearchConfig& cfg);

/// Near-vertical streak of the given length whose supporting line crosses the
/// top and bottom rows of `cfg.search_area` inside its column range.
StreakParams random_streak(const SearchConfig& cfg, double length, double amplitude, RngStream& rng);

/// Standardized threshold with per-step exceedance probability alpha on
/// pure-noise frames, pooled over all directions and steps.
double calibrate_scan_threshold(const SearchConfig& cfg, int width, int height, double sigma, int frames,
                                double alpha, std::uint64_t seed);

/// Smallest standardized threshold at which at most `rate` of pure-noise
/// frames yield a localization (a bridged run of min_streak_len - N_d steps).
double calibrate_localization_threshold(const SearchConfig& cfg, int width, int height, double sigma, int frames,
                                        double rate, std::uint64_t seed);

/// Longest above-threshold run each frame would need to be declared.
int required_run_length(const SearchConfig& cfg);

/// Endpoint errors of one trial; NaN where the stage produced nothing.
struct TrialRecord {
  bool detected = false;
  double coarse_start = 0.0;
  double coarse_end = 0.0;
  double refined_start = 0.0;
  double refined_end = 0.0;
};

struct BenchPoint {
  double snr = 0.0;
  int trials = 0;
  double detect_rate = 0.0;
  double sd_start = 0.0;
  double sd_end = 0.0;
  double se_sd_start = 0.0;
  double se_sd_end = 0.0;
  std::vector<TrialRecord> records;
};

struct BenchOptions {
  int width = 256;
  int height = 256;
  double sigma = 1.0;
  double streak_len = 50.0;
  int trials = 1000;
  int bootstrap = 200;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  std::optional<SearchConfig> search;  // defaults to SearchConfig::centered
};

std::vector<BenchPoint> bench_sd_vs_snr(const std::vector<double>& snr_grid, const BenchOptions& options);

/// snr,trials,detect_rate,sd_start,sd_end,se_sd_start,se_sd_end
std::string bench_to_csv(const std::vector<BenchPoint>& points);

}  // namespace tcd::streak
