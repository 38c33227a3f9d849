#pragma once

// Frame files: a JSON sidecar plus a raw little-endian float32 raster, with an
// optional 16-bit PGM export for viewing.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "tcd/streak.hpp"

namespace tcd::streak {

class FrameIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PgmScaling {
  std::string path;
  double min = 0.0;
  double max = 0.0;
};

struct FrameFile {
  Frame frame;
  std::uint64_t seed = 0;
  std::optional<StreakParams> streak;  // ground truth, when synthesized
  std::optional<PgmScaling> pgm;
};

/// Paths derived from a base name: <base>.json and <base>.f32.
std::string sidecar_path(const std::string& base);
std::string raster_path(const std::string& base);
/// Strips a trailing .json or .f32 so either file may name the pair.
std::string frame_base(const std::string& path);

void write_frame(const std::string& base, const FrameFile& file);
FrameFile read_frame(const std::string& path);

/// P5, maxval 65535, linear min-max scaling; returns the scaling used.
PgmScaling write_pgm(const std::string& path, const Frame& frame);

}  // namespace tcd::streak
