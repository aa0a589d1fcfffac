#pragma once

// Procedural clips for fixtures and demos. All generators return model-space
// clips ([-1, 1]) and are pure functions of their arguments.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hb/data_pipeline.hpp"
#include "hb/rng.hpp"
#include "hb/video.hpp"

namespace hb::synth {

/// Uniform value in [0, 1) from integer lattice coordinates.
inline double lattice_hash(std::uint64_t seed, std::int64_t y, std::int64_t x) {
  std::uint64_t s = mix_seed(mix_seed(seed, static_cast<std::uint64_t>(y)), static_cast<std::uint64_t>(x));
  return static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53;
}

/// Smooth two-octave value noise in [0, 1]; `cell` is the coarse lattice spacing in pixels.
inline double value_noise(std::uint64_t seed, double y, double x, double cell = 8.0) {
  auto octave = [&](std::uint64_t s, double c) {
    const double fy = y / c, fx = x / c;
    const double y0 = std::floor(fy), x0 = std::floor(fx);
    const double ty = fy - y0, tx = fx - x0;
    const double sy = ty * ty * (3 - 2 * ty), sx = tx * tx * (3 - 2 * tx);
    const auto iy = static_cast<std::int64_t>(y0), ix = static_cast<std::int64_t>(x0);
    const double a = lattice_hash(s, iy, ix), b = lattice_hash(s, iy, ix + 1);
    const double cc = lattice_hash(s, iy + 1, ix), d = lattice_hash(s, iy + 1, ix + 1);
    return (a * (1 - sx) + b * sx) * (1 - sy) + (cc * (1 - sx) + d * sx) * sy;
  };
  return (2.0 * octave(seed, cell) + octave(mix_seed(seed, 1), cell / 2)) / 3.0;
}

/// Colour from three decorrelated noise fields, stretched to fill [-1, 1].
inline void colour_at(std::uint64_t seed, double y, double x, double cell, float out[3]) {
  for (int c = 0; c < 3; ++c) {
    const double v = value_noise(mix_seed(seed, 100 + static_cast<std::uint64_t>(c)), y, x, cell);
    out[c] = static_cast<float>(std::clamp(3.0 * (v - 0.5), -1.0, 1.0));
  }
}

/// Each frame is the previous one scaled by `factor` about the frame centre
/// (factor > 1 zooms in, so content moves outward).
inline VideoTensor<float> zoom_clip(std::size_t frames, std::size_t size, std::uint64_t seed,
                                    double factor = 1.05) {
  VideoTensor<float> v(frames, size, size);
  const double c = 0.5 * static_cast<double>(size);
  for (std::size_t n = 0; n < frames; ++n) {
    const double s = std::pow(factor, static_cast<double>(n));
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        float rgb[3];
        colour_at(seed, c + (static_cast<double>(y) + 0.5 - c) / s, c + (static_cast<double>(x) + 0.5 - c) / s,
                  6.0, rgb);
        for (int ch = 0; ch < 3; ++ch) v.at(n, static_cast<std::size_t>(ch), y, x) = rgb[ch];
      }
  }
  return v;
}

/// Integer translation by (dy, dx) pixels per frame of a per-pixel hashed
/// texture, so block matching has a unique exact answer. `smooth` > 0 uses
/// value noise with that cell size instead.
inline VideoTensor<float> translation_clip(std::size_t frames, std::size_t size, std::uint64_t seed, int dy,
                                           int dx, double smooth = 0.0) {
  VideoTensor<float> v(frames, size, size);
  for (std::size_t n = 0; n < frames; ++n)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const auto sy = static_cast<std::int64_t>(y) - dy * static_cast<std::int64_t>(n);
        const auto sx = static_cast<std::int64_t>(x) - dx * static_cast<std::int64_t>(n);
        for (std::size_t ch = 0; ch < 3; ++ch) {
          double val;
          if (smooth > 0.0) {
            float rgb[3];
            colour_at(seed, static_cast<double>(sy), static_cast<double>(sx), smooth, rgb);
            val = rgb[ch];
          } else {
            val = 2.0 * lattice_hash(mix_seed(seed, ch), sy, sx) - 1.0;
          }
          v.at(n, ch, y, x) = static_cast<float>(val);
        }
      }
  return v;
}

/// Static 8x8 blocks of random colour: strong grid-aligned edges.
inline VideoTensor<float> blocky_clip(std::size_t frames, std::size_t size, std::uint64_t seed) {
  VideoTensor<float> v(frames, size, size);
  for (std::size_t n = 0; n < frames; ++n)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x)
        for (std::size_t ch = 0; ch < 3; ++ch)
          v.at(n, ch, y, x) = static_cast<float>(
              2.0 * lattice_hash(mix_seed(seed, ch), static_cast<std::int64_t>(y / 8), static_cast<std::int64_t>(x / 8)) - 1.0);
  return v;
}

inline VideoTensor<float> flat_clip(std::size_t frames, std::size_t size, float level = 0.0f) {
  VideoTensor<float> v(frames, size, size);
  v.tensor().fill(level);
  return v;
}

/// Independent per-pixel, per-frame random colours.
inline VideoTensor<float> colour_noise_clip(std::size_t frames, std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  VideoTensor<float> v(frames, size, size);
  for (auto& x : v.tensor().data()) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

struct FixtureClip {
  VideoRecord record;
  VideoTensor<float> clip;
};

/// The 10-record curation fixture. Clips are written to `dir` (paths in the
/// records are relative to it) unless `dir` is empty.
inline std::vector<FixtureClip> curation_fixture(std::size_t frames = 24, std::size_t size = 32,
                                                 std::uint64_t seed = 7) {
  auto rec = [](std::string id, std::string prompt, double fps) {
    VideoRecord r;
    r.id = id;
    r.path = id + ".hbvid";
    r.prompt = std::move(prompt);
    r.fps = fps;
    return r;
  };
  std::vector<FixtureClip> f;
  f.push_back({rec("zoom_in", "a camera pushes toward a mossy stone wall", 24), zoom_clip(frames, size, mix_seed(seed, 1), 1.05)});
  f.push_back({rec("pan_right", "a slow pan across a field of wildflowers", 24), translation_clip(frames, size, mix_seed(seed, 2), 0, 1)});
  f.push_back({rec("blocky", "a heavily compressed city skyline", 24), blocky_clip(frames, size, mix_seed(seed, 3))});
  f.push_back({rec("flat", "an empty grey wall", 24), flat_clip(frames, size)});
  f.push_back({rec("zoom_out", "a drone pulls away from a red barn", 24), zoom_clip(frames, size, mix_seed(seed, 5), 1.0 / 1.05)});
  f.push_back({rec("tilt_down", "tall pine trees seen from a tilting camera", 12), translation_clip(frames, size, mix_seed(seed, 6), 1, 0, 6.0)});
  f.push_back({rec("diagonal", "autumn leaves drifting past the lens", 30), translation_clip(frames, size, mix_seed(seed, 7), 1, -1, 6.0)});
  f.push_back({rec("still_texture", "a still photograph of coral", 24), translation_clip(frames, size, mix_seed(seed, 8), 0, 0, 6.0)});
  f.push_back({rec("sparkle", "television static glittering in colour", 24), colour_noise_clip(frames, size, mix_seed(seed, 9))});
  f.push_back({rec("pan_left", "a train window view of rolling hills", 24), translation_clip(frames, size, mix_seed(seed, 10), 0, -2, 6.0)});
  return f;
}

inline std::vector<VideoRecord> write_fixture(const std::vector<FixtureClip>& fixture, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<VideoRecord> records;
  for (const auto& f : fixture) {
    write_video(dir / f.record.path, f.clip);
    records.push_back(f.record);
  }
  return records;
}

}  // namespace hb::synth
