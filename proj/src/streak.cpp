#include "tcd/streak.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <limits>
#include <sstream>

#include "tcd/model.hpp"
#include "tcd/parallel.hpp"

namespace tcd::streak {

namespace {

constexpr double kCutoffWidths = 6.0;
constexpr int kOffsetLevels = 64;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Unnormalized line integral of the PSF over `region`.
std::vector<double> render_raw(const StreakParams& s, const Rect& region, int samples_per_px) {
  std::vector<double> out(static_cast<std::size_t>(std::max(0, region.width())) *
                              static_cast<std::size_t>(std::max(0, region.height())),
                          0.0);
  if (region.empty()) return out;
  const double len = s.length();
  const int n = std::max(1, static_cast<int>(std::ceil(len * samples_per_px)));
  const double w = s.psf_width;
  const double cut = kCutoffWidths * w;
  const double cut2 = cut * cut;
  const double inv2w2 = 1.0 / (2.0 * w * w);
  std::vector<double> gx;
  std::vector<double> gy;
  for (int i = 0; i < n; ++i) {
    const double t = (i + 0.5) / n;
    const double sx = s.x0 + t * (s.x1 - s.x0);
    const double sy = s.y0 + t * (s.y1 - s.y0);
    const int xa = std::max(region.x0, static_cast<int>(std::ceil(sx - cut)));
    const int xb = std::min(region.x1 - 1, static_cast<int>(std::floor(sx + cut)));
    const int ya = std::max(region.y0, static_cast<int>(std::ceil(sy - cut)));
    const int yb = std::min(region.y1 - 1, static_cast<int>(std::floor(sy + cut)));
    if (xa > xb || ya > yb) continue;
    gx.resize(static_cast<std::size_t>(xb - xa + 1));
    for (int x = xa; x <= xb; ++x) {
      const double dx = x - sx;
      gx[static_cast<std::size_t>(x - xa)] = std::exp(-dx * dx * inv2w2);
    }
    for (int y = ya; y <= yb; ++y) {
      const double dy = y - sy;
      const double ey = std::exp(-dy * dy * inv2w2);
      double* row = &out[static_cast<std::size_t>(y - region.y0) * region.width()];
      for (int x = xa; x <= xb; ++x) {
        const double dx = x - sx;
        if (dx * dx + dy * dy > cut2) continue;
        row[x - region.x0] += gx[static_cast<std::size_t>(x - xa)] * ey;
      }
    }
  }
  return out;
}

Rect footprint(const StreakParams& s) {
  const int pad = static_cast<int>(std::ceil(kCutoffWidths * s.psf_width)) + 1;
  return Rect{static_cast<int>(std::floor(std::min(s.x0, s.x1))) - pad,
              static_cast<int>(std::floor(std::min(s.y0, s.y1))) - pad,
              static_cast<int>(std::ceil(std::max(s.x0, s.x1))) + pad + 1,
              static_cast<int>(std::ceil(std::max(s.y0, s.y1))) + pad + 1};
}

void check_segment(const StreakParams& s) {
  if (!(s.psf_width > 0.0) || !std::isfinite(s.psf_width)) throw DomainError("psf_width must be positive");
  if (!std::isfinite(s.x0) || !std::isfinite(s.y0) || !std::isfinite(s.x1) || !std::isfinite(s.y1))
    throw DomainError("streak endpoints must be finite");
  if (!(s.length() > 0.0)) throw DomainError("zero-length streak");
}

double peak_of(const StreakParams& s, int samples_per_px) {
  const auto raw = render_raw(s, footprint(s), samples_per_px);
  return *std::max_element(raw.begin(), raw.end());
}

struct Sums {
  double ys = 0.0;
  double ss = 0.0;
};

Sums cross_sums(const Frame& frame, const Rect& area, const std::vector<double>& s) {
  Sums out;
  std::size_t idx = 0;
  for (int y = area.y0; y < area.y1; ++y) {
    for (int x = area.x0; x < area.x1; ++x, ++idx) {
      const double v = s[idx];
      if (v == 0.0) continue;
      out.ys += frame.at(x, y) * v;
      out.ss += v * v;
    }
  }
  return out;
}

double sum_sq(const Frame& frame, const Rect& area) {
  double acc = 0.0;
  for (int y = area.y0; y < area.y1; ++y)
    for (int x = area.x0; x < area.x1; ++x) acc += static_cast<double>(frame.at(x, y)) * frame.at(x, y);
  return acc;
}

// Along-track template weights for a window of n rows on a line with the
// given cosine of inclination from vertical.
std::vector<double> along_profile(int n, double cos_t, double psf_width, TemplateShape shape) {
  std::vector<double> a(static_cast<std::size_t>(n), 1.0);
  if (shape == TemplateShape::flat) return a;
  const double scale = cos_t * psf_width;
  for (int j = 0; j < n; ++j)
    a[static_cast<std::size_t>(j)] = normal_cdf((j + 0.5) / scale) - normal_cdf((j - n + 0.5) / scale);
  const double peak = *std::max_element(a.begin(), a.end());
  for (double& v : a) v /= peak;
  return a;
}

double quantile_upper(std::vector<double>& v, double tail) {
  const auto n = static_cast<double>(v.size());
  auto k = static_cast<std::size_t>(std::floor((1.0 - tail) * n));
  if (k >= v.size()) k = v.size() - 1;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

}  // namespace

Rect Rect::intersect(const Rect& r) const {
  Rect out{std::max(x0, r.x0), std::max(y0, r.y0), std::min(x1, r.x1), std::min(y1, r.y1)};
  if (out.x1 < out.x0) out.x1 = out.x0;
  if (out.y1 < out.y0) out.y1 = out.y0;
  return out;
}

Frame::Frame(int w, int h, double s) : width(w), height(h), sigma(s) {
  if (w <= 0 || h <= 0) throw DomainError("frame dimensions must be positive");
  if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("frame sigma must be positive");
  pixels.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0.0f);
}

void Frame::validate() const {
  if (width <= 0 || height <= 0) throw DomainError("frame dimensions must be positive");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("frame sigma must be positive");
  if (pixels.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw DomainError("raster length does not match width * height");
}

double StreakParams::length() const { return std::hypot(x1 - x0, y1 - y0); }

Profile render_profile(const StreakParams& streak, const Rect& region, int samples_per_px) {
  check_segment(streak);
  if (samples_per_px < kMinSamplesPerPixel) throw DomainError("at least 8 samples per pixel are required");
  const double peak = peak_of(streak, samples_per_px);
  Profile p{region, render_raw(streak, region, samples_per_px)};
  for (double& v : p.values) v /= peak;
  return p;
}

Frame synth_frame(int width, int height, const std::optional<StreakParams>& streak, double sigma, RngStream& rng) {
  Frame frame(width, height, sigma);
  std::vector<double> y(frame.pixels.size());
  for (double& v : y) v = sigma * rng.normal();
  if (streak && streak->amplitude != 0.0) {
    if (streak->amplitude < 0.0) throw DomainError("streak amplitude must be nonnegative");
    const Rect region = footprint(*streak).intersect(frame.bounds());
    const Profile p = render_profile(*streak, region);
    for (int r = region.y0; r < region.y1; ++r)
      for (int c = region.x0; c < region.x1; ++c)
        y[static_cast<std::size_t>(r) * width + c] += streak->amplitude * p.at(c, r);
  }
  for (std::size_t i = 0; i < y.size(); ++i) frame.pixels[i] = static_cast<float>(y[i]);
  return frame;
}

SearchConfig SearchConfig::centered(int frame_width, int frame_height, int band_width) {
  SearchConfig cfg;
  band_width = std::min(band_width, frame_width);
  const int x0 = (frame_width - band_width) / 2;
  cfg.search_area = Rect{x0, 0, x0 + band_width, frame_height};
  return cfg;
}

void SearchConfig::validate() const {
  if (search_area.empty()) throw DomainError("search_area must be nonempty");
  if (!(direction_step > 0.0)) throw DomainError("direction_step must be positive");
  if (window_len < 1) throw DomainError("window_len must be >= 1");
  if (window_width < 1) throw DomainError("window_width must be >= 1");
  if (search_area.height() < window_len) throw DomainError("search_area is shorter than window_len");
  if (min_streak_len < 1) throw DomainError("min_streak_len must be >= 1");
  if (!(slope_cap_fraction >= 0.0)) throw DomainError("slope_cap_fraction must be nonnegative");
  if (!(psf_width > 0.0)) throw DomainError("psf_width must be positive");
  if (dilation < 0) throw DomainError("dilation must be nonnegative");
  if (max_gap < 0) throw DomainError("max_gap must be nonnegative");
  if (!std::isfinite(threshold)) throw DomainError("threshold must be finite");
}

double Direction::x_at(double row) const {
  if (row_bottom == row_top) return x_top;
  return x_top + (x_bottom - x_top) * (row - row_top) / (row_bottom - row_top);
}

double Direction::slope() const {
  if (row_bottom == row_top) return 0.0;
  return (x_bottom - x_top) / (row_bottom - row_top);
}

std::vector<Direction> enumerate_directions(const SearchConfig& cfg) {
  cfg.validate();
  const Rect& a = cfg.search_area;
  const int points = static_cast<int>(std::floor((a.width() - 1) / cfg.direction_step + 1e-9)) + 1;
  const double cap = cfg.slope_cap_fraction * a.height() + 1e-9;
  std::vector<Direction> out;
  for (int i = 0; i < points; ++i) {
    const double xt = a.x0 + cfg.direction_step * i;
    for (int j = 0; j < points; ++j) {
      const double xb = a.x0 + cfg.direction_step * j;
      if (std::abs(xb - xt) > cap) continue;
      out.push_back(Direction{static_cast<int>(out.size()), xt, xb, a.y0, a.y1 - 1});
    }
  }
  return out;
}

const Run* DirectionTrace::longest_run() const {
  const Run* best = nullptr;
  for (const Run& r : runs)
    if (!best || r.length() > best->length()) best = &r;
  return best;
}

DirectionTrace scan_direction(const Frame& frame, const Direction& d, const SearchConfig& cfg) {
  const int rows = d.row_bottom - d.row_top + 1;
  const int nd = cfg.window_len;
  const int kd = cfg.window_width;
  if (rows < nd) throw DomainError("direction is shorter than the window");

  DirectionTrace trace;
  trace.direction = d.id;
  const double s = d.slope();
  const double cos_t = 1.0 / std::sqrt(1.0 + s * s);
  const double inv2w2 = cos_t * cos_t / (2.0 * cfg.psf_width * cfg.psf_width);

  // Cross-track weights, tabulated by the quantized sub-pixel offset.
  const double half = (kd - 1) / 2.0;
  std::vector<double> table(static_cast<std::size_t>(kOffsetLevels + 1) * kd);
  for (int q = 0; q <= kOffsetLevels; ++q) {
    const double u = half - 0.5 + static_cast<double>(q) / kOffsetLevels;
    for (int j = 0; j < kd; ++j) {
      const double dx = j - u;
      table[static_cast<std::size_t>(q) * kd + j] = std::exp(-dx * dx * inv2w2);
    }
  }

  std::vector<double> cross(static_cast<std::size_t>(rows), 0.0);
  std::vector<double> energy(static_cast<std::size_t>(rows), 0.0);
  for (int r = 0; r < rows; ++r) {
    const int row = d.row_top + r;
    if (row < 0 || row >= frame.height) {
      trace.truncated = true;
      continue;
    }
    const double x = d.x_at(row);
    const double start = x - half + 0.5;
    const int c0 = static_cast<int>(std::floor(start));
    const int q = static_cast<int>(std::lround((start - c0) * kOffsetLevels));
    const double* w = &table[static_cast<std::size_t>(q) * kd];
    double acc = 0.0;
    double e = 0.0;
    for (int j = 0; j < kd; ++j) {
      const int c = c0 + j;
      if (c < 0 || c >= frame.width) {
        trace.truncated = true;
        continue;
      }
      acc += w[j] * frame.at(c, row);
      e += w[j] * w[j];
    }
    cross[static_cast<std::size_t>(r)] = acc;
    energy[static_cast<std::size_t>(r)] = e;
  }

  const auto along = along_profile(nd, cos_t, cfg.psf_width, cfg.shape);
  const int steps = rows - nd + 1;
  trace.statistic.resize(static_cast<std::size_t>(steps));
  trace.standardized.resize(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) {
    double r_k = 0.0;
    double v = 0.0;
    for (int j = 0; j < nd; ++j) {
      const double a = along[static_cast<std::size_t>(j)];
      r_k += a * cross[static_cast<std::size_t>(k + j)];
      v += a * a * energy[static_cast<std::size_t>(k + j)];
    }
    trace.statistic[static_cast<std::size_t>(k)] = r_k;
    trace.standardized[static_cast<std::size_t>(k)] = v > 0.0 ? r_k / (frame.sigma * std::sqrt(v)) : 0.0;
  }

  for (int k = 0; k < steps;) {
    if (trace.standardized[static_cast<std::size_t>(k)] >= cfg.threshold) {
      int e = k;
      while (e + 1 < steps && trace.standardized[static_cast<std::size_t>(e + 1)] >= cfg.threshold) ++e;
      trace.runs.push_back(Run{k, e});
      k = e + 1;
    } else {
      ++k;
    }
  }
  return trace;
}

std::vector<DirectionTrace> scan_all(const Frame& frame, const std::vector<Direction>& directions,
                                     const SearchConfig& cfg, bool keep_statistics) {
  std::vector<DirectionTrace> traces(directions.size());
  parallel_for(static_cast<std::int64_t>(directions.size()), cfg.threads,
               [&](std::int64_t begin, std::int64_t end, unsigned) {
                 for (std::int64_t i = begin; i < end; ++i) {
                   auto t = scan_direction(frame, directions[static_cast<std::size_t>(i)], cfg);
                   if (!keep_statistics) {
                     t.statistic = {};
                     t.standardized = {};
                   }
                   traces[static_cast<std::size_t>(i)] = std::move(t);
                 }
               });
  return traces;
}

std::vector<Run> bridge_runs(const std::vector<Run>& runs, int max_gap) {
  std::vector<Run> out;
  for (const Run& r : runs) {
    if (!out.empty() && r.start - out.back().end - 1 <= max_gap) {
      out.back().end = r.end;
    } else {
      out.push_back(r);
    }
  }
  return out;
}

int required_run_length(const SearchConfig& cfg) { return std::max(1, cfg.min_streak_len - cfg.window_len); }

std::optional<LocalizationArea> localize(const std::vector<DirectionTrace>& traces,
                                         const std::vector<Direction>& directions, const SearchConfig& cfg,
                                         const Rect& frame_bounds) {
  const DirectionTrace* best_trace = nullptr;
  std::optional<Run> best_run;
  for (const auto& t : traces) {
    for (const Run& r : bridge_runs(t.runs, cfg.max_gap)) {
      const bool better = !best_run || r.length() > best_run->length() ||
                          (r.length() == best_run->length() && t.direction < best_trace->direction);
      if (better) {
        best_trace = &t;
        best_run = r;
      }
    }
  }
  if (!best_run || best_run->length() < required_run_length(cfg)) return std::nullopt;

  const auto it = std::find_if(directions.begin(), directions.end(),
                               [&](const Direction& d) { return d.id == best_trace->direction; });
  if (it == directions.end()) throw DomainError("trace refers to an unknown direction");
  const Direction& d = *it;

  const int nd = cfg.window_len;
  const double half = (cfg.window_width - 1) / 2.0;
  const int row_a = d.row_top + best_run->start;
  const int row_b = d.row_top + best_run->end + nd - 1;
  int col_a = std::numeric_limits<int>::max();
  int col_b = std::numeric_limits<int>::min();
  for (int row = row_a; row <= row_b; ++row) {
    const int c0 = static_cast<int>(std::floor(d.x_at(row) - half + 0.5));
    col_a = std::min(col_a, c0);
    col_b = std::max(col_b, c0 + cfg.window_width - 1);
  }

  LocalizationArea out;
  out.area = Rect{col_a, row_a, col_b + 1, row_b + 1}.dilate(cfg.dilation).intersect(frame_bounds);
  out.direction = d.id;
  out.start_step = best_run->start;
  out.end_step = best_run->end;
  const double centre = (nd - 1) / 2.0;
  out.y_start = d.row_top + best_run->start + centre;
  out.y_end = d.row_top + best_run->end + centre;
  out.x_start = d.x_at(out.y_start);
  out.x_end = d.x_at(out.y_end);
  return out;
}

double full_objective(const Frame& frame, const Rect& area, const StreakParams& x, double amplitude) {
  const Profile p = render_profile(x, area);
  double acc = 0.0;
  for (int r = area.y0; r < area.y1; ++r)
    for (int c = area.x0; c < area.x1; ++c) {
      const double e = frame.at(c, r) - amplitude * p.at(c, r);
      acc += e * e;
    }
  return acc;
}

std::pair<double, double> reduced_objective(const Frame& frame, const Rect& area, const StreakParams& x) {
  const Profile p = render_profile(x, area);
  const Sums s = cross_sums(frame, area, p.values);
  const double yy = sum_sq(frame, area);
  if (s.ss <= 0.0) return {yy, 0.0};
  return {yy - s.ys * s.ys / s.ss, s.ys / s.ss};
}

std::optional<StreakEstimate> refine_ml(const Frame& frame, const LocalizationArea& loc, const StreakParams& init,
                                        const RefineOptions& options) {
  const Rect& area = loc.area;
  if (area.empty()) throw DomainError("localization area is empty");
  const double yy = sum_sq(frame, area);
  const double lo[4] = {static_cast<double>(area.x0), static_cast<double>(area.y0), static_cast<double>(area.x0),
                        static_cast<double>(area.y0)};
  const double hi[4] = {static_cast<double>(area.x1 - 1), static_cast<double>(area.y1 - 1),
                        static_cast<double>(area.x1 - 1), static_cast<double>(area.y1 - 1)};

  StreakEstimate est;
  auto eval = [&](const std::array<double, 4>& p) {
    ++est.evaluations;
    StreakParams s{p[0], p[1], p[2], p[3], 1.0, init.psf_width};
    if (!(s.length() >= 1.0)) return std::numeric_limits<double>::infinity();
    const Sums sm = cross_sums(frame, area, render_raw(s, area, kMinSamplesPerPixel));
    if (sm.ss <= 0.0 || sm.ys <= 0.0) return yy;  // amplitude clipped at zero
    return yy - sm.ys * sm.ys / sm.ss;
  };

  std::array<double, 4> p{init.x0, init.y0, init.x1, init.y1};
  for (int i = 0; i < 4; ++i) p[i] = std::clamp(p[i], lo[i], hi[i]);
  double best = eval(p);
  for (double step = options.start_step; step >= options.min_step && est.evaluations < options.max_evaluations;) {
    bool moved = false;
    for (int i = 0; i < 4; ++i) {
      for (double sign : {1.0, -1.0}) {
        auto q = p;
        q[i] = std::clamp(p[i] + sign * step, lo[i], hi[i]);
        if (q[i] == p[i]) continue;
        const double v = eval(q);
        if (v < best) {
          best = v;
          p = q;
          moved = true;
          break;
        }
      }
    }
    if (!moved) step *= 0.5;
  }

  StreakParams fit{p[0], p[1], p[2], p[3], 1.0, init.psf_width};
  if (!(fit.length() >= 1.0)) return std::nullopt;
  const auto [obj, a_hat] = reduced_objective(frame, area, fit);
  if (!(a_hat > 0.0)) return std::nullopt;
  if (p[1] > p[3]) {
    std::swap(p[0], p[2]);
    std::swap(p[1], p[3]);
  }
  est.x0_hat = p[0];
  est.y0_hat = p[1];
  est.x1_hat = p[2];
  est.y1_hat = p[3];
  est.a_hat = a_hat;
  est.residual_ss = std::max(0.0, obj);
  return est;
}

Detection detect_streak(const Frame& frame, const SearchConfig& cfg) {
  frame.validate();
  const auto directions = enumerate_directions(cfg);
  const auto traces = scan_all(frame, directions, cfg);
  Detection out;
  out.area = localize(traces, directions, cfg, frame.bounds());
  if (!out.area) return out;
  const StreakParams init{out.area->x_start, out.area->y_start, out.area->x_end, out.area->y_end, 1.0,
                          cfg.psf_width};
  out.estimate = refine_ml(frame, *out.area, init);
  out.detected = out.estimate.has_value();
  return out;
}

StreakParams random_streak(const SearchConfig& cfg, double length, double amplitude, RngStream& rng) {
  cfg.validate();
  const Rect& a = cfg.search_area;
  const double span = a.width() - 1;
  const double cap = cfg.slope_cap_fraction * a.height();
  double xt = 0.0;
  double xb = 0.0;
  do {
    xt = a.x0 + span * rng.uniform();
    xb = a.x0 + span * rng.uniform();
  } while (std::abs(xb - xt) > cap);
  const double rows = a.height() - 1;
  const double dx = (xb - xt) / rows;  // per row
  const double dy_len = length / std::sqrt(1.0 + dx * dx);
  const double margin = 10.0;
  const double room = rows - dy_len - 2.0 * margin;
  if (room < 0.0) throw DomainError("streak does not fit in the search area");
  const double y0 = a.y0 + margin + room * rng.uniform();
  const double y1 = y0 + dy_len;
  const auto x_of = [&](double y) { return xt + dx * (y - a.y0); };
  return StreakParams{x_of(y0), y0, x_of(y1), y1, amplitude, cfg.psf_width};
}

double calibrate_scan_threshold(const SearchConfig& cfg, int width, int height, double sigma, int frames,
                                double alpha, std::uint64_t seed) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  if (frames < 1) throw DomainError("frames must be >= 1");
  const auto directions = enumerate_directions(cfg);
  std::vector<double> pooled;
  for (int f = 0; f < frames; ++f) {
    RngStream rng(seed, static_cast<std::uint64_t>(f));
    const Frame frame = synth_frame(width, height, std::nullopt, sigma, rng);
    for (const auto& t : scan_all(frame, directions, cfg, true))
      pooled.insert(pooled.end(), t.standardized.begin(), t.standardized.end());
  }
  return quantile_upper(pooled, alpha);
}

double calibrate_localization_threshold(const SearchConfig& cfg, int width, int height, double sigma, int frames,
                                        double rate, std::uint64_t seed) {
  if (!(rate > 0.0 && rate < 1.0)) throw DomainError("rate must lie in (0, 1)");
  if (frames < 1) throw DomainError("frames must be >= 1");
  const auto directions = enumerate_directions(cfg);
  const int q = required_run_length(cfg);
  // Localization is monotone in the threshold, so each frame has a critical
  // value: the largest statistic value at which it still localizes.
  auto localizes = [&](const std::vector<DirectionTrace>& traces, double h) {
    for (const auto& t : traces) {
      int seq_start = -1;
      int last = -1;
      const auto& z = t.standardized;
      for (int k = 0; k < static_cast<int>(z.size()); ++k) {
        if (z[static_cast<std::size_t>(k)] < h) continue;
        if (seq_start < 0 || k - last - 1 > cfg.max_gap) seq_start = k;
        last = k;
        if (last - seq_start + 1 >= q) return true;
      }
    }
    return false;
  };
  std::vector<double> frame_max(static_cast<std::size_t>(frames));
  for (int f = 0; f < frames; ++f) {
    RngStream rng(seed, static_cast<std::uint64_t>(f));
    const Frame frame = synth_frame(width, height, std::nullopt, sigma, rng);
    const auto traces = scan_all(frame, directions, cfg, true);
    std::vector<double> values;
    for (const auto& t : traces) values.insert(values.end(), t.standardized.begin(), t.standardized.end());
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    // First index whose value no longer localizes.
    std::size_t lo = 0;
    std::size_t hi = values.size();
    while (lo < hi) {
      const std::size_t mid = lo + (hi - lo) / 2;
      if (localizes(traces, values[mid])) {
        lo = mid + 1;
      } else {
        hi = mid;
      }
    }
    frame_max[static_cast<std::size_t>(f)] =
        lo == 0 ? -std::numeric_limits<double>::infinity() : values[lo - 1];
  }
  const double h = quantile_upper(frame_max, rate);
  return std::nextafter(h, std::numeric_limits<double>::infinity());
}

namespace {

struct PairStats {
  double sd = 0.0;
  double se = 0.0;
};

double endpoint_sd(const std::vector<double>& dx, const std::vector<double>& dy, const std::vector<std::size_t>& idx) {
  const auto n = static_cast<double>(idx.size());
  if (idx.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0.0, my = 0.0;
  for (auto i : idx) {
    mx += dx[i];
    my += dy[i];
  }
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0;
  for (auto i : idx) {
    vx += (dx[i] - mx) * (dx[i] - mx);
    vy += (dy[i] - my) * (dy[i] - my);
  }
  return std::sqrt((vx + vy) / (n - 1.0));
}

PairStats sd_with_bootstrap(const std::vector<double>& dx, const std::vector<double>& dy, int resamples,
                            RngStream& rng) {
  std::vector<std::size_t> all(dx.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  PairStats out;
  out.sd = endpoint_sd(dx, dy, all);
  if (all.size() < 2 || resamples < 2) {
    out.se = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  std::vector<double> reps;
  std::vector<std::size_t> idx(all.size());
  for (int b = 0; b < resamples; ++b) {
    for (auto& i : idx) i = static_cast<std::size_t>(rng() % all.size());
    reps.push_back(endpoint_sd(dx, dy, idx));
  }
  double m = 0.0;
  for (double v : reps) m += v;
  m /= reps.size();
  double v = 0.0;
  for (double r : reps) v += (r - m) * (r - m);
  out.se = std::sqrt(v / (reps.size() - 1.0));
  return out;
}

}  // namespace

std::vector<BenchPoint> bench_sd_vs_snr(const std::vector<double>& snr_grid, const BenchOptions& options) {
  if (options.trials < 1) throw DomainError("trials must be >= 1");
  if (!(options.sigma > 0.0)) throw DomainError("sigma must be positive");
  SearchConfig cfg = options.search ? *options.search : SearchConfig::centered(options.width, options.height);
  cfg.threads = 1;
  cfg.validate();
  const auto directions = enumerate_directions(cfg);

  std::vector<BenchPoint> out;
  for (double snr : snr_grid) {
    if (!(snr >= 0.0) || !std::isfinite(snr)) throw DomainError("SNR values must be nonnegative");
    const std::uint64_t point_seed = derive_seed(options.seed, std::bit_cast<std::uint64_t>(snr));
    struct Trial {
      TrialRecord rec;
      double dx0 = 0, dy0 = 0, dx1 = 0, dy1 = 0;
    };
    std::vector<Trial> trials(static_cast<std::size_t>(options.trials));
    parallel_for(options.trials, options.threads, [&](std::int64_t begin, std::int64_t end, unsigned) {
      for (std::int64_t t = begin; t < end; ++t) {
        RngStream rng(point_seed, static_cast<std::uint64_t>(t));
        std::optional<StreakParams> truth;
        if (snr > 0.0) truth = random_streak(cfg, options.streak_len, snr * options.sigma, rng);
        const Frame frame = synth_frame(options.width, options.height, truth, options.sigma, rng);
        const auto traces = scan_all(frame, directions, cfg);
        Trial& tr = trials[static_cast<std::size_t>(t)];
        const double nan = std::numeric_limits<double>::quiet_NaN();
        tr.rec = TrialRecord{false, nan, nan, nan, nan};
        const auto loc = localize(traces, directions, cfg, frame.bounds());
        if (!loc) continue;
        const StreakParams init{loc->x_start, loc->y_start, loc->x_end, loc->y_end, 1.0, cfg.psf_width};
        const auto est = refine_ml(frame, *loc, init);
        tr.rec.detected = est.has_value();
        if (!truth) continue;
        StreakParams s = *truth;
        if (s.y0 > s.y1) {
          std::swap(s.x0, s.x1);
          std::swap(s.y0, s.y1);
        }
        tr.rec.coarse_start = std::hypot(loc->x_start - s.x0, loc->y_start - s.y0);
        tr.rec.coarse_end = std::hypot(loc->x_end - s.x1, loc->y_end - s.y1);
        if (!est) continue;
        tr.dx0 = est->x0_hat - s.x0;
        tr.dy0 = est->y0_hat - s.y0;
        tr.dx1 = est->x1_hat - s.x1;
        tr.dy1 = est->y1_hat - s.y1;
        tr.rec.refined_start = std::hypot(tr.dx0, tr.dy0);
        tr.rec.refined_end = std::hypot(tr.dx1, tr.dy1);
      }
    });

    BenchPoint bp;
    bp.snr = snr;
    bp.trials = options.trials;
    std::vector<double> dx0, dy0, dx1, dy1;
    int hits = 0;
    for (const auto& t : trials) {
      bp.records.push_back(t.rec);
      if (!t.rec.detected) continue;
      ++hits;
      if (snr > 0.0) {
        dx0.push_back(t.dx0);
        dy0.push_back(t.dy0);
        dx1.push_back(t.dx1);
        dy1.push_back(t.dy1);
      }
    }
    bp.detect_rate = static_cast<double>(hits) / options.trials;
    RngStream boot(point_seed, ~std::uint64_t{0});
    const auto s0 = sd_with_bootstrap(dx0, dy0, options.bootstrap, boot);
    const auto s1 = sd_with_bootstrap(dx1, dy1, options.bootstrap, boot);
    bp.sd_start = s0.sd;
    bp.se_sd_start = s0.se;
    bp.sd_end = s1.sd;
    bp.se_sd_end = s1.se;
    out.push_back(std::move(bp));
  }
  return out;
}

std::string bench_to_csv(const std::vector<BenchPoint>& points) {
  std::ostringstream os;
  os.precision(10);
  os << "snr,trials,detect_rate,sd_start,sd_end,se_sd_start,se_sd_end\n";
  for (const auto& p : points)
    os << p.snr << ',' << p.trials << ',' << p.detect_rate << ',' << p.sd_start << ',' << p.sd_end << ','
       << p.se_sd_start << ',' << p.se_sd_end << '\n';
  return os.str();
}

}  // namespace tcd::streak
