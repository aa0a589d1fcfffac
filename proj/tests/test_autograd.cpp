#include <gtest/gtest.h>

#include "hb/autograd.hpp"
#include "test_support.hpp"

using namespace hb;
using namespace hb::testing;

namespace {

// Contracts every output through a fixed random vector so gradients are generic.
VarD project(GraphD& g, VarD x, std::uint64_t seed = 99) {
  auto w = random_tensor(g.shape(x), seed);
  return g.sum(g.mul(x, g.constant(w)));
}

}  // namespace

TEST(Autograd, Elementwise) {
  auto a = random_tensor({3, 4}, 1), b = random_tensor({3, 4}, 2);
  EXPECT_LT(max_gradient_error({a, b}, [](GraphD& g, const std::vector<VarD>& v) {
              return project(g, g.mul(g.silu(g.lincomb(v[0], 0.7, v[1], -1.3)), v[1]));
            }),
            1e-6);
}

TEST(Autograd, MatmulAllTransposes) {
  for (int ta = 0; ta < 2; ++ta)
    for (int tb = 0; tb < 2; ++tb) {
      auto a = random_tensor(ta ? Shape{4, 3} : Shape{3, 4}, 3);
      auto b = random_tensor(tb ? Shape{5, 4} : Shape{4, 5}, 4);
      EXPECT_LT(max_gradient_error({a, b},
                                   [&](GraphD& g, const std::vector<VarD>& v) {
                                     return project(g, g.matmul(v[0], v[1], ta, tb));
                                   }),
                1e-6)
          << ta << tb;
    }
}

TEST(Autograd, BatchedMatmulAndSoftmax) {
  auto a = random_tensor({2, 3, 4}, 5), b = random_tensor({2, 5, 4}, 6);
  EXPECT_LT(max_gradient_error({a, b}, [](GraphD& g, const std::vector<VarD>& v) {
              return project(g, g.softmax_last(g.bmm(v[0], v[1], true)));
            }),
            1e-6);
  auto c = random_tensor({2, 4, 5}, 7);
  EXPECT_LT(max_gradient_error({a, c}, [](GraphD& g, const std::vector<VarD>& v) {
              return project(g, g.bmm(v[0], v[1]));
            }),
            1e-6);
}

TEST(Autograd, ConvolutionAndNorm) {
  auto x = random_tensor({2, 4, 5, 6}, 8), w = random_tensor({3, 4, 3, 3}, 9), b = random_tensor({3}, 10);
  EXPECT_LT(max_gradient_error({x, w, b}, [](GraphD& g, const std::vector<VarD>& v) {
              return project(g, g.conv2d(v[0], v[1], v[2]));
            }),
            1e-6);
  auto w1 = random_tensor({3, 4, 1, 1}, 11);
  EXPECT_LT(max_gradient_error({x, w1, b}, [](GraphD& g, const std::vector<VarD>& v) {
              return project(g, g.conv2d(v[0], v[1], v[2]));
            }),
            1e-6);
  auto gamma = random_tensor({4}, 12), beta = random_tensor({4}, 13);
  EXPECT_LT(max_gradient_error({x, gamma, beta}, [](GraphD& g, const std::vector<VarD>& v) {
              return project(g, g.group_norm(v[0], v[1], v[2], 2));
            }),
            1e-5);
}

TEST(Autograd, LayoutOps) {
  auto x = random_tensor({2, 3, 4, 4}, 14), y = random_tensor({2, 2, 4, 4}, 15);
  EXPECT_LT(max_gradient_error({x, y}, [](GraphD& g, const std::vector<VarD>& v) {
              auto c = g.concat_channels(v[0], v[1]);
              auto p = g.permute(c, {2, 0, 3, 1});
              auto r = g.reshape(p, {4, 40});
              return project(g, g.select_rows(r, {3, 1, 1}));
            }),
            1e-6);
  EXPECT_LT(max_gradient_error({x}, [](GraphD& g, const std::vector<VarD>& v) {
              return project(g, g.upsample_nearest(g.avg_pool(v[0], 2), 2));
            }),
            1e-6);
}

TEST(Autograd, BroadcastsAndReductions) {
  auto x = random_tensor({2, 3, 2, 2}, 16), c = random_tensor({3}, 17), t = random_tensor({2, 2}, 18);
  EXPECT_LT(max_gradient_error({x, c, t}, [](GraphD& g, const std::vector<VarD>& v) {
              auto a = g.add_channel(v[0], v[1]);
              auto b = g.add_broadcast(a, v[2]);
              return g.add(g.mse(b, g.constant(random_tensor({2, 3, 2, 2}, 3))), g.mean(b));
            }),
            1e-6);
  auto r = random_tensor({4, 5}, 19), y = random_tensor({5}, 20);
  EXPECT_LT(max_gradient_error({r, y}, [](GraphD& g, const std::vector<VarD>& v) {
              return project(g, g.row_cosine(v[0], v[1]));
            }),
            1e-6);
  EXPECT_LT(max_gradient_error({r, y}, [](GraphD& g, const std::vector<VarD>& v) {
              return project(g, g.row_cosine(g.mean_rows(v[0]), v[1]));
            }),
            1e-6);
}

TEST(Autograd, HuberMatchesHalfSquareInsideDelta) {
  GraphD g;
  auto a = g.constant(Tensor<double>({2}, {0.001, 0.5}));
  auto b = g.constant(Tensor<double>({2}, {0.0, 0.0}));
  const double delta = 0.01;
  const double expect = (0.5 * 0.001 * 0.001 + delta * (0.5 - 0.5 * delta)) / 2;
  EXPECT_NEAR(g.scalar(g.huber(a, b, delta)), expect, 1e-15);
}

TEST(Autograd, ConstantsRecordNoBackward) {
  GraphD g;
  auto a = g.constant(random_tensor({3}, 1));
  auto s = g.sum(g.silu(a));
  EXPECT_FALSE(g.requires_grad(s));
  g.backward(s);  // no-op
  EXPECT_EQ(g.grad(a), Tensor<double>({3}));
}
