#pragma once

// Fixed orthonormal patch codec standing in for a learned autoencoder.
//
// Each frame is cut into non-overlapping p x p patches; a patch is flattened
// as index m = c*p*p + dy*p + dx and mapped to latent channel k by
//   z[k] = sum_m Q[k][m] * x[m]
// with Q a (3p^2 x 3p^2) orthonormal matrix. Decoding applies Q^T.
//
// Q is generated from codec_seed: an Rng (splitmix64-seeded xoshiro256**)
// fills a Gaussian matrix row-major, then its columns are orthonormalized by
// modified Gram-Schmidt in column order 0, 1, 2, ... in double precision.
// The result is identical on every IEEE-754 platform.

#include <cmath>
#include <cstdint>
#include <vector>

#include "hb/autograd.hpp"
#include "hb/errors.hpp"
#include "hb/rng.hpp"
#include "hb/tensor.hpp"
#include "hb/video.hpp"

namespace hb {

inline std::vector<double> orthonormal_matrix(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> a(n * n);
  for (auto& v : a) v = rng.normal();
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < j; ++i) {
      double dot = 0.0;
      for (std::size_t r = 0; r < n; ++r) dot += a[r * n + i] * a[r * n + j];
      for (std::size_t r = 0; r < n; ++r) a[r * n + j] -= dot * a[r * n + i];
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < n; ++r) norm += a[r * n + j] * a[r * n + j];
    norm = std::sqrt(norm);
    for (std::size_t r = 0; r < n; ++r) a[r * n + j] /= norm;
  }
  return a;
}

template <class T = float>
class LatentCodec {
 public:
  explicit LatentCodec(std::uint64_t codec_seed, std::size_t patch = 4)
      : seed_(codec_seed), patch_(patch), dim_(3 * patch * patch) {
    if (patch == 0) throw ConfigError("patch size must be positive");
    const auto q = orthonormal_matrix(dim_, codec_seed);
    q_ = Tensor<T>({dim_, dim_});
    for (std::size_t i = 0; i < q.size(); ++i) q_[i] = static_cast<T>(q[i]);
  }

  std::uint64_t seed() const { return seed_; }
  std::size_t patch() const { return patch_; }
  std::size_t latent_channels() const { return dim_; }
  const Tensor<T>& matrix() const { return q_; }

  LatentVideo<T> encode(const VideoTensor<T>& video) const {
    const std::size_t n = video.frames(), H = video.height(), W = video.width();
    if (H % patch_ || W % patch_)
      throw ShapeError("encode: " + std::to_string(H) + "x" + std::to_string(W) +
                       " not divisible by patch " + std::to_string(patch_));
    const std::size_t h = H / patch_, w = W / patch_, p = patch_;
    Tensor<T> z({n, dim_, h, w});
    std::vector<T> x(dim_);
    for (std::size_t f = 0; f < n; ++f)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t dy = 0; dy < p; ++dy)
              for (std::size_t dx = 0; dx < p; ++dx)
                x[(c * p + dy) * p + dx] = video.at(f, c, i * p + dy, j * p + dx);
          for (std::size_t k = 0; k < dim_; ++k) {
            T s{0};
            for (std::size_t m = 0; m < dim_; ++m) s += q_[k * dim_ + m] * x[m];
            z.at(f, k, i, j) = s;
          }
        }
    return LatentVideo<T>(std::move(z));
  }

  VideoTensor<T> decode(const LatentVideo<T>& latent) const {
    if (latent.channels() != dim_)
      throw ShapeError("decode: expected " + std::to_string(dim_) + " latent channels, got " +
                       std::to_string(latent.channels()));
    const std::size_t n = latent.frames(), h = latent.height(), w = latent.width(), p = patch_;
    VideoTensor<T> video(n, h * p, w * p);
    std::vector<T> x(dim_);
    for (std::size_t f = 0; f < n; ++f)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          std::fill(x.begin(), x.end(), T{0});
          for (std::size_t k = 0; k < dim_; ++k) {
            const T zk = latent.tensor().at(f, k, i, j);
            for (std::size_t m = 0; m < dim_; ++m) x[m] += q_[k * dim_ + m] * zk;
          }
          for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t dy = 0; dy < p; ++dy)
              for (std::size_t dx = 0; dx < p; ++dx)
                video.at(f, c, i * p + dy, j * p + dx) = x[(c * p + dy) * p + dx];
        }
    return video;
  }

  /// Differentiable decode of a [N, 3p^2, h, w] graph node into [N, 3, H, W].
  typename Graph<T>::Var decode(Graph<T>& g, typename Graph<T>::Var latent) const {
    const Shape s = g.shape(latent);
    if (s.size() != 4 || s[1] != dim_) throw ShapeError("decode: latent channel mismatch");
    const std::size_t n = s[0], h = s[2], w = s[3], p = patch_;
    auto rows = g.reshape(g.permute(latent, {0, 2, 3, 1}), {n * h * w, dim_});
    auto pix = g.matmul(rows, g.constant(q_));
    auto blocks = g.reshape(pix, {n, h, w, 3, p, p});
    return g.reshape(g.permute(blocks, {0, 3, 1, 4, 2, 5}), {n, 3, h * p, w * p});
  }

 private:
  std::uint64_t seed_;
  std::size_t patch_;
  std::size_t dim_;
  Tensor<T> q_;
};

}  // namespace hb
