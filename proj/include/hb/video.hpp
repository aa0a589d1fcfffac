#pragma once

// Pixel-space and latent-space clips, and the ".hbvid" container.
//
// .hbvid layout (little endian):
//   "HBV1" | u32 N | u32 C | u32 H | u32 W | N*C*H*W float32, frame-major,
//   then channel, then row-major.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "hb/errors.hpp"
#include "hb/tensor.hpp"

namespace hb {

/// Clip in model space: [frames, 3, height, width], values in [-1, 1].
template <class T = float>
class VideoTensor {
 public:
  VideoTensor() = default;
  explicit VideoTensor(Tensor<T> data) : data_(std::move(data)) {
    if (data_.rank() != 4 || data_.dim(0) < 1 || data_.dim(1) != 3)
      throw ShapeError("video must be [N,3,H,W], got " + shape_str(data_.shape()));
  }
  VideoTensor(std::size_t frames, std::size_t height, std::size_t width)
      : VideoTensor(Tensor<T>({frames, 3, height, width})) {}

  std::size_t frames() const { return data_.dim(0); }
  std::size_t height() const { return data_.dim(2); }
  std::size_t width() const { return data_.dim(3); }
  const Tensor<T>& tensor() const { return data_; }
  Tensor<T>& tensor() { return data_; }

  T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) { return data_.at(n, c, y, x); }
  const T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data_.at(n, c, y, x);
  }

  /// Range invariant of model-space clips.
  bool in_range() const {
    for (T v : data_.data())
      if (!std::isfinite(v) || std::abs(static_cast<double>(v)) > 1.0 + 1e-6) return false;
    return true;
  }

  void clamp() {
    for (auto& v : data_.data()) v = std::clamp(v, T{-1}, T{1});
  }

  bool operator==(const VideoTensor&) const = default;

 private:
  Tensor<T> data_;
};

/// Latent clip: [frames, latent_channels, h, w].
template <class T = float>
class LatentVideo {
 public:
  LatentVideo() = default;
  explicit LatentVideo(Tensor<T> data) : data_(std::move(data)) {
    if (data_.rank() != 4) throw ShapeError("latent must be rank 4, got " + shape_str(data_.shape()));
  }

  std::size_t frames() const { return data_.dim(0); }
  std::size_t channels() const { return data_.dim(1); }
  std::size_t height() const { return data_.dim(2); }
  std::size_t width() const { return data_.dim(3); }
  const Shape& shape() const { return data_.shape(); }
  const Tensor<T>& tensor() const { return data_; }
  Tensor<T>& tensor() { return data_; }

  bool operator==(const LatentVideo&) const = default;

 private:
  Tensor<T> data_;
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<unsigned char, 4> b{static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                 static_cast<unsigned char>(v >> 16),
                                 static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b.data()), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw IoError("truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float f) { put_u32(os, std::bit_cast<std::uint32_t>(f)); }
inline float get_f32(std::istream& is) { return std::bit_cast<float>(get_u32(is)); }

}  // namespace detail

/// Writes any rank-4 float tensor as .hbvid.
inline void write_hbvid(const std::filesystem::path& path, const Tensor<float>& t) {
  if (t.rank() != 4) throw ShapeError("hbvid payload must be rank 4");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write("HBV1", 4);
  for (std::size_t i = 0; i < 4; ++i) detail::put_u32(os, static_cast<std::uint32_t>(t.dim(i)));
  for (float v : t.data()) detail::put_f32(os, v);
  if (!os) throw IoError("write failed: " + path.string());
}

inline Tensor<float> read_hbvid_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "HBV1", 4) != 0)
    throw IoError("bad magic in " + path.string());
  Shape s(4);
  for (auto& d : s) d = detail::get_u32(is);
  Tensor<float> t(s);
  try {
    for (auto& v : t.data()) v = detail::get_f32(is);
  } catch (const IoError&) {
    throw IoError("truncated payload in " + path.string());
  }
  return t;
}

inline void write_video(const std::filesystem::path& path, const VideoTensor<float>& v) {
  write_hbvid(path, v.tensor());
}

inline VideoTensor<float> read_video(const std::filesystem::path& path) {
  return VideoTensor<float>(read_hbvid_tensor(path));
}

}  // namespace hb
