#include "tcd/frame_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include <json.hpp>

namespace tcd::streak {

namespace {

using nlohmann::json;

static_assert(sizeof(float) == 4);

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw FrameIoError(std::string("sidecar is missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw FrameIoError(std::string("sidecar field '") + key + "' has the wrong type");
  }
}

}  // namespace

std::string sidecar_path(const std::string& base) { return base + ".json"; }
std::string raster_path(const std::string& base) { return base + ".f32"; }

std::string frame_base(const std::string& path) {
  for (const char* ext : {".json", ".f32"})
    if (ends_with(path, ext)) return path.substr(0, path.size() - std::strlen(ext));
  return path;
}

void write_frame(const std::string& base, const FrameFile& file) {
  file.frame.validate();
  json j;
  j["width"] = file.frame.width;
  j["height"] = file.frame.height;
  j["sigma"] = file.frame.sigma;
  j["seed"] = file.seed;
  if (file.streak) {
    const auto& s = *file.streak;
    j["streak"] = {{"x0", s.x0}, {"y0", s.y0}, {"x1", s.x1}, {"y1", s.y1}, {"A", s.amplitude},
                   {"psf_width", s.psf_width}};
  }
  if (file.pgm) j["pgm"] = {{"path", file.pgm->path}, {"min", file.pgm->min}, {"max", file.pgm->max}};

  std::ofstream meta(sidecar_path(base));
  if (!meta) throw FrameIoError("cannot write " + sidecar_path(base));
  meta << j.dump(2) << '\n';

  std::ofstream raw(raster_path(base), std::ios::binary);
  if (!raw) throw FrameIoError("cannot write " + raster_path(base));
  std::vector<std::uint32_t> words(file.frame.pixels.size());
  for (std::size_t i = 0; i < words.size(); ++i) words[i] = to_le(std::bit_cast<std::uint32_t>(file.frame.pixels[i]));
  raw.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
  if (!raw) throw FrameIoError("short write to " + raster_path(base));
}

FrameFile read_frame(const std::string& path) {
  const std::string base = frame_base(path);
  std::ifstream meta(sidecar_path(base));
  if (!meta) throw FrameIoError("cannot open " + sidecar_path(base));
  json j;
  try {
    j = json::parse(meta);
  } catch (const json::exception& e) {
    throw FrameIoError("malformed sidecar: " + std::string(e.what()));
  }

  FrameFile out;
  const int width = field<int>(j, "width");
  const int height = field<int>(j, "height");
  const double sigma = field<double>(j, "sigma");
  if (width <= 0 || height <= 0 || !(sigma > 0.0)) throw FrameIoError("sidecar has invalid dimensions or sigma");
  out.frame = Frame(width, height, sigma);
  if (j.contains("seed")) out.seed = field<std::uint64_t>(j, "seed");
  if (j.contains("streak") && !j["streak"].is_null()) {
    const json& s = j["streak"];
    out.streak = StreakParams{field<double>(s, "x0"), field<double>(s, "y0"), field<double>(s, "x1"),
                              field<double>(s, "y1"), field<double>(s, "A"), field<double>(s, "psf_width")};
  }
  if (j.contains("pgm")) {
    const json& p = j["pgm"];
    out.pgm = PgmScaling{field<std::string>(p, "path"), field<double>(p, "min"), field<double>(p, "max")};
  }

  std::ifstream raw(raster_path(base), std::ios::binary);
  if (!raw) throw FrameIoError("cannot open " + raster_path(base));
  std::vector<char> bytes((std::istreambuf_iterator<char>(raw)), std::istreambuf_iterator<char>());
  const std::size_t expected = out.frame.pixels.size() * 4;
  if (bytes.size() != expected)
    throw FrameIoError("raster has " + std::to_string(bytes.size()) + " bytes, expected " + std::to_string(expected));
  for (std::size_t i = 0; i < out.frame.pixels.size(); ++i) {
    std::uint32_t w = 0;
    std::memcpy(&w, bytes.data() + 4 * i, 4);
    out.frame.pixels[i] = std::bit_cast<float>(to_le(w));
  }
  return out;
}

PgmScaling write_pgm(const std::string& path, const Frame& frame) {
  frame.validate();
  const auto [lo, hi] = std::minmax_element(frame.pixels.begin(), frame.pixels.end());
  PgmScaling scaling{path, *lo, *hi};
  const double range = scaling.max - scaling.min;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FrameIoError("cannot write " + path);
  os << "P5\n" << frame.width << ' ' << frame.height << "\n65535\n";
  std::vector<unsigned char> buf(frame.pixels.size() * 2);
  for (std::size_t i = 0; i < frame.pixels.size(); ++i) {
    const double t = range > 0.0 ? (frame.pixels[i] - scaling.min) / range : 0.0;
    const auto v = static_cast<std::uint16_t>(std::lround(std::clamp(t, 0.0, 1.0) * 65535.0));
    buf[2 * i] = static_cast<unsigned char>(v >> 8);  // PGM is big-endian
    buf[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os) throw FrameIoError("short write to " + path);
  return scaling;
}

}  // namespace tcd::streak
