#pragma once

// Tape-based reverse-mode differentiation over dense tensors.
//
// A Graph records every operation applied to its nodes. Nodes created with
// variable() (or derived from one) carry a backward closure; everything else
// is a constant and costs nothing beyond its forward value. Graphs are
// single-use: build, call backward() once, read grads, discard.

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "hb/errors.hpp"
#include "hb/tensor.hpp"

namespace hb {

template <class T>
class Graph {
 public:
  struct Var {
    std::size_t id = std::numeric_limits<std::size_t>::max();
  };
  using Backward = std::function<void(const Tensor<T>&)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor<T> v) { return push(std::move(v), false, {}); }
  Var variable(Tensor<T> v) { return push(std::move(v), true, {}); }

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  const Shape& shape(Var v) const { return nodes_.at(v.id).value.shape(); }
  T scalar(Var v) const { return nodes_.at(v.id).value[0]; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).needs_grad; }
  std::size_t node_count() const { return nodes_.size(); }

  /// Gradient with respect to v after backward(); zeros if v did not contribute.
  Tensor<T> grad(Var v) const {
    const auto& n = nodes_.at(v.id);
    return n.grad.empty() ? Tensor<T>(n.value.shape()) : n.grad;
  }

  void backward(Var loss) {
    auto& root = nodes_.at(loss.id);
    if (root.value.size() != 1) throw ShapeError("backward: loss must be a scalar");
    if (!root.needs_grad) return;
    root.grad = Tensor<T>(root.value.shape(), T{1});
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.back && !n.grad.empty()) n.back(n.grad);
    }
  }

  // ---- elementwise ------------------------------------------------------

  Var add(Var a, Var b) { return lincomb(a, T{1}, b, T{1}); }
  Var sub(Var a, Var b) { return lincomb(a, T{1}, b, T{-1}); }
  Var scale(Var a, T s) {
    Tensor<T> out = value(a);
    for (auto& v : out.data()) v *= s;
    return record(std::move(out), {a}, [this, a, s](const Tensor<T>& g) {
      if (!requires_grad(a)) return;
      auto& ga = acc(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
    });
  }

  /// alpha*a + beta*b
  Var lincomb(Var a, T alpha, Var b, T beta) {
    require_same_shape(value(a), value(b), "lincomb");
    const auto& va = value(a);
    const auto& vb = value(b);
    Tensor<T> out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * va[i] + beta * vb[i];
    return record(std::move(out), {a, b}, [this, a, b, alpha, beta](const Tensor<T>& g) {
      if (requires_grad(a)) {
        auto& ga = acc(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += alpha * g[i];
      }
      if (requires_grad(b)) {
        auto& gb = acc(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += beta * g[i];
      }
    });
  }

  Var mul(Var a, Var b) {
    require_same_shape(value(a), value(b), "mul");
    const auto& va = value(a);
    const auto& vb = value(b);
    Tensor<T> out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
    return record(std::move(out), {a, b}, [this, a, b](const Tensor<T>& g) {
      if (requires_grad(a)) {
        auto& ga = acc(a);
        const auto& vb = value(b);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
      }
      if (requires_grad(b)) {
        auto& gb = acc(b);
        const auto& va = value(a);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
      }
    });
  }

  Var silu(Var a) {
    const auto& va = value(a);
    Tensor<T> out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] / (T{1} + std::exp(-va[i]));
    return record(std::move(out), {a}, [this, a](const Tensor<T>& g) {
      auto& ga = acc(a);
      const auto& x = value(a);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T s = T{1} / (T{1} + std::exp(-x[i]));
        ga[i] += g[i] * s * (T{1} + x[i] * (T{1} - s));
      }
    });
  }

  /// a + b where b's shape equals the trailing dimensions of a's shape.
  Var add_broadcast(Var a, Var b) {
    const auto& sa = shape(a);
    const auto& sb = shape(b);
    if (sb.size() > sa.size() || !std::equal(sb.rbegin(), sb.rend(), sa.rbegin()))
      throw ShapeError("add_broadcast: " + shape_str(sb) + " is not a suffix of " + shape_str(sa));
    const auto& va = value(a);
    const auto& vb = value(b);
    const std::size_t bs = vb.size();
    Tensor<T> out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i % bs];
    return record(std::move(out), {a, b}, [this, a, b, bs](const Tensor<T>& g) {
      if (requires_grad(a)) {
        auto& ga = acc(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (requires_grad(b)) {
        auto& gb = acc(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % bs] += g[i];
      }
    });
  }

  /// x[B,C,H,W] + v[C] broadcast over batch and space. v may also be [1,C].
  Var add_channel(Var x, Var v) {
    const auto& sx = shape(x);
    if (sx.size() != 4 || value(v).size() != sx[1])
      throw ShapeError("add_channel: expected [B,C,H,W] and [C], got " + shape_str(sx) + " and " +
                       shape_str(shape(v)));
    const std::size_t batch = sx[0], ch = sx[1], hw = sx[2] * sx[3];
    Tensor<T> out = value(x);
    const auto& vv = value(v);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < ch; ++c) {
        T* p = out.ptr() + (b * ch + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) p[i] += vv[c];
      }
    return record(std::move(out), {x, v}, [this, x, v, batch, ch, hw](const Tensor<T>& g) {
      if (requires_grad(x)) {
        auto& gx = acc(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (requires_grad(v)) {
        auto& gv = acc(v);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < ch; ++c) {
            const T* p = g.ptr() + (b * ch + c) * hw;
            T s{0};
            for (std::size_t i = 0; i < hw; ++i) s += p[i];
            gv[c] += s;
          }
      }
    });
  }

  // ---- linear algebra ---------------------------------------------------

  /// op(a)[M,K] * op(b)[K,N] for rank-2 operands.
  Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false) {
    const auto& sa = shape(a);
    const auto& sb = shape(b);
    if (sa.size() != 2 || sb.size() != 2) throw ShapeError("matmul: operands must be rank 2");
    const std::size_t m = trans_a ? sa[1] : sa[0];
    const std::size_t k = trans_a ? sa[0] : sa[1];
    const std::size_t kb = trans_b ? sb[1] : sb[0];
    const std::size_t n = trans_b ? sb[0] : sb[1];
    if (k != kb)
      throw ShapeError("matmul: inner dimensions differ " + shape_str(sa) + " x " + shape_str(sb));
    Tensor<T> out({m, n});
    gemm(trans_a, trans_b, m, n, k, value(a).ptr(), value(b).ptr(), out.ptr(), false);
    return record(std::move(out), {a, b},
                  [this, a, b, trans_a, trans_b, m, n, k](const Tensor<T>& g) {
                    if (requires_grad(a)) {
                      auto& ga = acc(a);
                      // dA = g * op(B)^T   (or its transpose when A is transposed)
                      if (!trans_a)
                        gemm(false, !trans_b, m, k, n, g.ptr(), value(b).ptr(), ga.ptr(), true);
                      else
                        gemm(trans_b, true, k, m, n, value(b).ptr(), g.ptr(), ga.ptr(), true);
                    }
                    if (requires_grad(b)) {
                      auto& gb = acc(b);
                      if (!trans_b)
                        gemm(!trans_a, false, k, n, m, value(a).ptr(), g.ptr(), gb.ptr(), true);
                      else
                        gemm(true, trans_a, n, k, m, g.ptr(), value(a).ptr(), gb.ptr(), true);
                    }
                  });
  }

  /// x[M,K] * W[N,K]^T + bias[N]
  Var linear(Var x, Var weight, Var bias) { return add_broadcast(matmul(x, weight, false, true), bias); }
  Var linear(Var x, Var weight) { return matmul(x, weight, false, true); }

  /// Batched a[B,M,K] * op(b) where b is [B,K,N] or, transposed, [B,N,K].
  Var bmm(Var a, Var b, bool trans_b = false) {
    const auto& sa = shape(a);
    const auto& sb = shape(b);
    if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0])
      throw ShapeError("bmm: expected matching rank-3 operands");
    const std::size_t batch = sa[0], m = sa[1], k = sa[2];
    const std::size_t n = trans_b ? sb[1] : sb[2];
    if ((trans_b ? sb[2] : sb[1]) != k) throw ShapeError("bmm: inner dimensions differ");
    Tensor<T> out({batch, m, n});
    for (std::size_t i = 0; i < batch; ++i)
      gemm(false, trans_b, m, n, k, value(a).ptr() + i * m * k, value(b).ptr() + i * k * n,
           out.ptr() + i * m * n, false);
    return record(std::move(out), {a, b},
                  [this, a, b, trans_b, batch, m, n, k](const Tensor<T>& g) {
                    for (std::size_t i = 0; i < batch; ++i) {
                      const T* gi = g.ptr() + i * m * n;
                      if (requires_grad(a))
                        gemm(false, !trans_b, m, k, n, gi, value(b).ptr() + i * k * n,
                             acc(a).ptr() + i * m * k, true);
                      if (requires_grad(b)) {
                        if (!trans_b)
                          gemm(true, false, k, n, m, value(a).ptr() + i * m * k, gi,
                               acc(b).ptr() + i * k * n, true);
                        else
                          gemm(true, false, n, k, m, gi, value(a).ptr() + i * m * k,
                               acc(b).ptr() + i * k * n, true);
                      }
                    }
                  });
  }

  // ---- layout -----------------------------------------------------------

  Var reshape(Var a, Shape s) {
    Tensor<T> out = value(a).reshaped(std::move(s));
    return record(std::move(out), {a}, [this, a](const Tensor<T>& g) {
      auto& ga = acc(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }

  /// out.shape[i] = in.shape[perm[i]]
  Var permute(Var a, const std::vector<std::size_t>& perm) {
    const auto& in_shape = shape(a);
    const std::size_t r = in_shape.size();
    if (perm.size() != r) throw ShapeError("permute: rank mismatch");
    Shape out_shape(r);
    std::vector<std::size_t> in_strides(r, 1);
    for (std::size_t i = r - 1; i-- > 0;) in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
    for (std::size_t i = 0; i < r; ++i) out_shape[i] = in_shape[perm[i]];
    const std::size_t total = value(a).size();
    std::vector<std::size_t> src(total);
    std::vector<std::size_t> idx(r, 0);
    for (std::size_t o = 0; o < total; ++o) {
      std::size_t off = 0;
      for (std::size_t i = 0; i < r; ++i) off += idx[i] * in_strides[perm[i]];
      src[o] = off;
      for (std::size_t i = r; i-- > 0;) {
        if (++idx[i] < out_shape[i]) break;
        idx[i] = 0;
      }
    }
    Tensor<T> out(out_shape);
    const auto& va = value(a);
    for (std::size_t o = 0; o < total; ++o) out[o] = va[src[o]];
    return record(std::move(out), {a}, [this, a, src = std::move(src)](const Tensor<T>& g) {
      auto& ga = acc(a);
      for (std::size_t o = 0; o < g.size(); ++o) ga[src[o]] += g[o];
    });
  }

  /// Concatenate two [B,C,H,W] tensors along channels.
  Var concat_channels(Var a, Var b) {
    const auto& sa = shape(a);
    const auto& sb = shape(b);
    if (sa.size() != 4 || sb.size() != 4 || sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3])
      throw ShapeError("concat_channels: incompatible " + shape_str(sa) + " and " + shape_str(sb));
    const std::size_t batch = sa[0], ca = sa[1], cb = sb[1], hw = sa[2] * sa[3];
    Tensor<T> out({batch, ca + cb, sa[2], sa[3]});
    for (std::size_t n = 0; n < batch; ++n) {
      std::copy_n(value(a).ptr() + n * ca * hw, ca * hw, out.ptr() + n * (ca + cb) * hw);
      std::copy_n(value(b).ptr() + n * cb * hw, cb * hw, out.ptr() + (n * (ca + cb) + ca) * hw);
    }
    return record(std::move(out), {a, b}, [this, a, b, batch, ca, cb, hw](const Tensor<T>& g) {
      for (std::size_t n = 0; n < batch; ++n) {
        const T* gp = g.ptr() + n * (ca + cb) * hw;
        if (requires_grad(a)) {
          T* d = acc(a).ptr() + n * ca * hw;
          for (std::size_t i = 0; i < ca * hw; ++i) d[i] += gp[i];
        }
        if (requires_grad(b)) {
          T* d = acc(b).ptr() + n * cb * hw;
          for (std::size_t i = 0; i < cb * hw; ++i) d[i] += gp[ca * hw + i];
        }
      }
    });
  }

  /// Rows of a along dimension 0, in the given order.
  Var select_rows(Var a, std::vector<std::size_t> rows) {
    const auto& sa = shape(a);
    const std::size_t row = value(a).size() / sa[0];
    Shape s = sa;
    s[0] = rows.size();
    Tensor<T> out(s);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] >= sa[0]) throw IndexError("select_rows: row out of range");
      std::copy_n(value(a).ptr() + rows[i] * row, row, out.ptr() + i * row);
    }
    return record(std::move(out), {a}, [this, a, rows = std::move(rows), row](const Tensor<T>& g) {
      auto& ga = acc(a);
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < row; ++j) ga[rows[i] * row + j] += g[i * row + j];
    });
  }

  /// Mean over dimension 0: [R, ...] -> [1, ...].
  Var mean_rows(Var a) {
    const auto& sa = shape(a);
    const std::size_t rows = sa[0];
    const std::size_t row = value(a).size() / rows;
    Shape s = sa;
    s[0] = 1;
    Tensor<T> out(s);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < row; ++j) out[j] += value(a)[r * row + j];
    for (auto& v : out.data()) v /= static_cast<T>(rows);
    return record(std::move(out), {a}, [this, a, rows, row](const Tensor<T>& g) {
      auto& ga = acc(a);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < row; ++j) ga[r * row + j] += g[j] / static_cast<T>(rows);
    });
  }

  // ---- neural network primitives -----------------------------------------

  Var softmax_last(Var a) {
    const auto& va = value(a);
    const std::size_t n = va.shape().back();
    const std::size_t rows = va.size() / n;
    Tensor<T> out(va.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      const T* x = va.ptr() + r * n;
      T* y = out.ptr() + r * n;
      const T mx = *std::max_element(x, x + n);
      T s{0};
      for (std::size_t j = 0; j < n; ++j) s += (y[j] = std::exp(x[j] - mx));
      for (std::size_t j = 0; j < n; ++j) y[j] /= s;
    }
    Var res = record(std::move(out), {a}, {});
    if (requires_grad(res))
      nodes_[res.id].back = [this, a, res, n, rows](const Tensor<T>& g) {
        auto& ga = acc(a);
        const auto& y = value(res);
        for (std::size_t r = 0; r < rows; ++r) {
          T dot{0};
          for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
          for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
        }
      };
    return res;
  }

  /// 2-D convolution, stride 1, zero padding k/2. x[B,Cin,H,W], w[Cout,Cin,k,k], bias[Cout].
  Var conv2d(Var x, Var w, Var bias) {
    const auto& sx = shape(x);
    const auto& sw = shape(w);
    if (sx.size() != 4 || sw.size() != 4 || sw[1] != sx[1] || sw[2] != sw[3] || sw[2] % 2 == 0)
      throw ShapeError("conv2d: input " + shape_str(sx) + " incompatible with weight " +
                       shape_str(sw));
    if (value(bias).size() != sw[0]) throw ShapeError("conv2d: bias size mismatch");
    const ConvDims d{sx[0], sx[1], sw[0], sx[2], sx[3], sw[2]};
    Tensor<T> out({d.batch, d.cout, d.h, d.w});
    std::vector<T> cols(d.ckk() * d.hw());
    for (std::size_t b = 0; b < d.batch; ++b) {
      const T* xb = value(x).ptr() + b * d.cin * d.hw();
      const T* src = xb;
      if (d.k != 1) {
        im2col(d, xb, cols.data());
        src = cols.data();
      }
      T* ob = out.ptr() + b * d.cout * d.hw();
      gemm(false, false, d.cout, d.hw(), d.ckk(), value(w).ptr(), src, ob, false);
      for (std::size_t c = 0; c < d.cout; ++c)
        for (std::size_t i = 0; i < d.hw(); ++i) ob[c * d.hw() + i] += value(bias)[c];
    }
    return record(std::move(out), {x, w, bias}, [this, x, w, bias, d](const Tensor<T>& g) {
      std::vector<T> cols(d.ckk() * d.hw());
      std::vector<T> dcols(d.k != 1 ? d.ckk() * d.hw() : 0);
      for (std::size_t b = 0; b < d.batch; ++b) {
        const T* gb = g.ptr() + b * d.cout * d.hw();
        const T* xb = value(x).ptr() + b * d.cin * d.hw();
        if (requires_grad(w)) {
          const T* src = xb;
          if (d.k != 1) {
            im2col(d, xb, cols.data());
            src = cols.data();
          }
          gemm(false, true, d.cout, d.ckk(), d.hw(), gb, src, acc(w).ptr(), true);
        }
        if (requires_grad(bias)) {
          auto& gbias = acc(bias);
          for (std::size_t c = 0; c < d.cout; ++c) {
            T s{0};
            for (std::size_t i = 0; i < d.hw(); ++i) s += gb[c * d.hw() + i];
            gbias[c] += s;
          }
        }
        if (requires_grad(x)) {
          T* gx = acc(x).ptr() + b * d.cin * d.hw();
          if (d.k == 1) {
            gemm(true, false, d.ckk(), d.hw(), d.cout, value(w).ptr(), gb, gx, true);
          } else {
            gemm(true, false, d.ckk(), d.hw(), d.cout, value(w).ptr(), gb, dcols.data(), false);
            col2im_add(d, dcols.data(), gx);
          }
        }
      }
    });
  }

  /// Group normalization over (C/groups, H, W) per batch item, with affine gamma/beta.
  Var group_norm(Var x, Var gamma, Var beta, std::size_t groups, T eps = T(1e-5)) {
    const auto& sx = shape(x);
    if (sx.size() != 4 || sx[1] % groups != 0)
      throw ShapeError("group_norm: channels " + std::to_string(sx.size() == 4 ? sx[1] : 0) +
                       " not divisible into " + std::to_string(groups) + " groups");
    const std::size_t batch = sx[0], ch = sx[1], hw = sx[2] * sx[3], cpg = ch / groups;
    const std::size_t gsize = cpg * hw;
    const auto& vx = value(x);
    Tensor<T> xhat(sx);
    std::vector<T> inv_std(batch * groups);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t gi = 0; gi < groups; ++gi) {
        const std::size_t off = (b * ch + gi * cpg) * hw;
        T mean{0};
        for (std::size_t i = 0; i < gsize; ++i) mean += vx[off + i];
        mean /= static_cast<T>(gsize);
        T var{0};
        for (std::size_t i = 0; i < gsize; ++i) {
          const T dv = vx[off + i] - mean;
          var += dv * dv;
        }
        var /= static_cast<T>(gsize);
        const T is = T{1} / std::sqrt(var + eps);
        inv_std[b * groups + gi] = is;
        for (std::size_t i = 0; i < gsize; ++i) xhat[off + i] = (vx[off + i] - mean) * is;
      }
    Tensor<T> out(sx);
    const auto& gm = value(gamma);
    const auto& bt = value(beta);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t i = 0; i < hw; ++i) {
          const std::size_t o = (b * ch + c) * hw + i;
          out[o] = gm[c] * xhat[o] + bt[c];
        }
    return record(
        std::move(out), {x, gamma, beta},
        [this, x, gamma, beta, batch, ch, hw, cpg, groups, gsize, xhat = std::move(xhat),
         inv_std = std::move(inv_std)](const Tensor<T>& g) {
          if (requires_grad(gamma) || requires_grad(beta)) {
            for (std::size_t b = 0; b < batch; ++b)
              for (std::size_t c = 0; c < ch; ++c) {
                T sg{0}, sgx{0};
                for (std::size_t i = 0; i < hw; ++i) {
                  const std::size_t o = (b * ch + c) * hw + i;
                  sg += g[o];
                  sgx += g[o] * xhat[o];
                }
                if (requires_grad(gamma)) acc(gamma)[c] += sgx;
                if (requires_grad(beta)) acc(beta)[c] += sg;
              }
          }
          if (!requires_grad(x)) return;
          auto& gx = acc(x);
          const auto& gm = value(gamma);
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t gi = 0; gi < groups; ++gi) {
              const std::size_t off = (b * ch + gi * cpg) * hw;
              T mean_d{0}, mean_dx{0};
              for (std::size_t i = 0; i < gsize; ++i) {
                const T dxh = g[off + i] * gm[gi * cpg + i / hw];
                mean_d += dxh;
                mean_dx += dxh * xhat[off + i];
              }
              mean_d /= static_cast<T>(gsize);
              mean_dx /= static_cast<T>(gsize);
              const T is = inv_std[b * groups + gi];
              for (std::size_t i = 0; i < gsize; ++i) {
                const T dxh = g[off + i] * gm[gi * cpg + i / hw];
                gx[off + i] += is * (dxh - mean_d - xhat[off + i] * mean_dx);
              }
            }
        });
  }

  /// Average pooling with a ky x kx window and equal stride. x[B,C,H,W].
  Var avg_pool(Var x, std::size_t ky, std::size_t kx) {
    const auto& sx = shape(x);
    if (sx.size() != 4 || ky == 0 || kx == 0 || sx[2] % ky || sx[3] % kx)
      throw ShapeError("avg_pool: " + shape_str(sx) + " not divisible by window " +
                       std::to_string(ky) + "x" + std::to_string(kx));
    const std::size_t bc = sx[0] * sx[1], h = sx[2], w = sx[3], ho = h / ky, wo = w / kx;
    const T inv = T{1} / static_cast<T>(ky * kx);
    Tensor<T> out({sx[0], sx[1], ho, wo});
    const auto& vx = value(x);
    for (std::size_t p = 0; p < bc; ++p)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx)
          out[(p * ho + y / ky) * wo + xx / kx] += vx[(p * h + y) * w + xx] * inv;
    return record(std::move(out), {x}, [this, x, bc, h, w, ho, wo, ky, kx, inv](const Tensor<T>& g) {
      auto& gx = acc(x);
      for (std::size_t p = 0; p < bc; ++p)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t xx = 0; xx < w; ++xx)
            gx[(p * h + y) * w + xx] += g[(p * ho + y / ky) * wo + xx / kx] * inv;
    });
  }

  Var avg_pool(Var x, std::size_t k) { return avg_pool(x, k, k); }

  Var upsample_nearest(Var x, std::size_t k) {
    const auto& sx = shape(x);
    if (sx.size() != 4) throw ShapeError("upsample_nearest: expected rank 4");
    const std::size_t bc = sx[0] * sx[1], h = sx[2], w = sx[3], ho = h * k, wo = w * k;
    Tensor<T> out({sx[0], sx[1], ho, wo});
    const auto& vx = value(x);
    for (std::size_t p = 0; p < bc; ++p)
      for (std::size_t y = 0; y < ho; ++y)
        for (std::size_t xx = 0; xx < wo; ++xx)
          out[(p * ho + y) * wo + xx] = vx[(p * h + y / k) * w + xx / k];
    return record(std::move(out), {x}, [this, x, bc, h, w, ho, wo, k](const Tensor<T>& g) {
      auto& gx = acc(x);
      for (std::size_t p = 0; p < bc; ++p)
        for (std::size_t y = 0; y < ho; ++y)
          for (std::size_t xx = 0; xx < wo; ++xx)
            gx[(p * h + y / k) * w + xx / k] += g[(p * ho + y) * wo + xx];
    });
  }

  /// Cosine similarity of every row of x[R,D] with y[D] -> [R]. Zero-norm rows score 0.
  Var row_cosine(Var x, Var y) {
    const auto& sx = shape(x);
    const std::size_t dimn = value(y).size();
    if (sx.size() != 2 || sx[1] != dimn) throw ShapeError("row_cosine: dimension mismatch");
    const std::size_t rows = sx[0];
    Tensor<T> out({rows});
    const auto& vx = value(x);
    const auto& vy = value(y);
    T ny{0};
    for (std::size_t j = 0; j < dimn; ++j) ny += vy[j] * vy[j];
    ny = std::sqrt(ny);
    std::vector<T> nx(rows), dots(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      T s{0}, d{0};
      for (std::size_t j = 0; j < dimn; ++j) {
        s += vx[r * dimn + j] * vx[r * dimn + j];
        d += vx[r * dimn + j] * vy[j];
      }
      nx[r] = std::sqrt(s);
      dots[r] = d;
      out[r] = (nx[r] == T{0} || ny == T{0}) ? T{0} : d / (nx[r] * ny);
    }
    Var res = record(std::move(out), {x, y}, {});
    if (requires_grad(res))
      nodes_[res.id].back = [this, x, y, res, rows, dimn, ny, nx = std::move(nx)](
                                const Tensor<T>& g) {
        const auto& vx = value(x);
        const auto& vy = value(y);
        const auto& c = value(res);
        for (std::size_t r = 0; r < rows; ++r) {
          if (nx[r] == T{0} || ny == T{0}) continue;
          const T inv = T{1} / (nx[r] * ny);
          for (std::size_t j = 0; j < dimn; ++j) {
            const T xj = vx[r * dimn + j];
            if (requires_grad(x))
              acc(x)[r * dimn + j] += g[r] * (vy[j] * inv - c[r] * xj / (nx[r] * nx[r]));
            if (requires_grad(y)) acc(y)[j] += g[r] * (xj * inv - c[r] * vy[j] / (ny * ny));
          }
        }
      };
    return res;
  }

  // ---- reductions -------------------------------------------------------

  Var sum(Var a) {
    T s{0};
    for (T v : value(a).data()) s += v;
    return record(Tensor<T>({1}, s), {a}, [this, a](const Tensor<T>& g) {
      auto& ga = acc(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
    });
  }

  Var mean(Var a) { return scale(sum(a), T{1} / static_cast<T>(value(a).size())); }

  /// mean((a - b)^2)
  Var mse(Var a, Var b) {
    require_same_shape(value(a), value(b), "mse");
    const auto& va = value(a);
    const auto& vb = value(b);
    const T n = static_cast<T>(va.size());
    T s{0};
    for (std::size_t i = 0; i < va.size(); ++i) {
      const T d = va[i] - vb[i];
      s += d * d;
    }
    return record(Tensor<T>({1}, s / n), {a, b}, [this, a, b, n](const Tensor<T>& g) {
      const auto& va = value(a);
      const auto& vb = value(b);
      for (std::size_t i = 0; i < va.size(); ++i) {
        const T d = T{2} * (va[i] - vb[i]) * g[0] / n;
        if (requires_grad(a)) acc(a)[i] += d;
        if (requires_grad(b)) acc(b)[i] -= d;
      }
    });
  }

  /// Mean elementwise Huber loss with threshold delta.
  Var huber(Var a, Var b, T delta) {
    require_same_shape(value(a), value(b), "huber");
    const auto& va = value(a);
    const auto& vb = value(b);
    const T n = static_cast<T>(va.size());
    T s{0};
    for (std::size_t i = 0; i < va.size(); ++i) {
      const T d = std::abs(va[i] - vb[i]);
      s += d <= delta ? T(0.5) * d * d : delta * (d - T(0.5) * delta);
    }
    return record(Tensor<T>({1}, s / n), {a, b}, [this, a, b, n, delta](const Tensor<T>& g) {
      const auto& va = value(a);
      const auto& vb = value(b);
      for (std::size_t i = 0; i < va.size(); ++i) {
        const T d = va[i] - vb[i];
        const T gd = (std::abs(d) <= delta ? d : (d > 0 ? delta : -delta)) * g[0] / n;
        if (requires_grad(a)) acc(a)[i] += gd;
        if (requires_grad(b)) acc(b)[i] -= gd;
      }
    });
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool needs_grad = false;
    Backward back;
  };

  struct ConvDims {
    std::size_t batch, cin, cout, h, w, k;
    std::size_t hw() const { return h * w; }
    std::size_t ckk() const { return cin * k * k; }
  };

  static void im2col(const ConvDims& d, const T* x, T* cols) {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(d.k / 2);
    const auto H = static_cast<std::ptrdiff_t>(d.h), W = static_cast<std::ptrdiff_t>(d.w);
    for (std::size_t c = 0; c < d.cin; ++c)
      for (std::size_t ky = 0; ky < d.k; ++ky)
        for (std::size_t kx = 0; kx < d.k; ++kx) {
          T* row = cols + ((c * d.k + ky) * d.k + kx) * d.hw();
          const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
          const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
          for (std::ptrdiff_t y = 0; y < H; ++y) {
            const std::ptrdiff_t sy = y + dy;
            for (std::ptrdiff_t xx = 0; xx < W; ++xx) {
              const std::ptrdiff_t sx = xx + dx;
              row[y * W + xx] = (sy >= 0 && sy < H && sx >= 0 && sx < W)
                                    ? x[(c * d.h + static_cast<std::size_t>(sy)) * d.w +
                                        static_cast<std::size_t>(sx)]
                                    : T{0};
            }
          }
        }
  }

  static void col2im_add(const ConvDims& d, const T* cols, T* x) {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(d.k / 2);
    const auto H = static_cast<std::ptrdiff_t>(d.h), W = static_cast<std::ptrdiff_t>(d.w);
    for (std::size_t c = 0; c < d.cin; ++c)
      for (std::size_t ky = 0; ky < d.k; ++ky)
        for (std::size_t kx = 0; kx < d.k; ++kx) {
          const T* row = cols + ((c * d.k + ky) * d.k + kx) * d.hw();
          const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
          const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
          for (std::ptrdiff_t y = 0; y < H; ++y) {
            const std::ptrdiff_t sy = y + dy;
            if (sy < 0 || sy >= H) continue;
            for (std::ptrdiff_t xx = 0; xx < W; ++xx) {
              const std::ptrdiff_t sx = xx + dx;
              if (sx < 0 || sx >= W) continue;
              x[(c * d.h + static_cast<std::size_t>(sy)) * d.w + static_cast<std::size_t>(sx)] +=
                  row[y * W + xx];
            }
          }
        }
  }

  Var push(Tensor<T> v, bool needs_grad, Backward back) {
    nodes_.push_back(Node{std::move(v), {}, needs_grad, std::move(back)});
    return Var{nodes_.size() - 1};
  }

  Var record(Tensor<T> out, std::initializer_list<Var> inputs, Backward back) {
    bool needs = false;
    for (Var v : inputs) needs = needs || nodes_.at(v.id).needs_grad;
    return push(std::move(out), needs, needs ? std::move(back) : Backward{});
  }

  Tensor<T>& acc(Var v) {
    auto& n = nodes_[v.id];
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  std::vector<Node> nodes_;
};

}  // namespace hb
