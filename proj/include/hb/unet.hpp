#pragma once

// Tiny spatio-temporal epsilon-prediction U-Net.
//
// Layout per level i (channels c_i = base * mult[i]):
//   down: blocks_per_level[i] residual blocks, then 2x average pool (not on
//         the last level). The level's last output is kept as its skip.
//   mid:  middle_blocks residual blocks at c_{L-1}.
//   up:   concat(h, skip_i), up_blocks_per_level[i] residual blocks, then 2x
//         nearest upsample (not on level 0).
// A residual block is GN-SiLU-conv3x3, + time/fps embedding, GN-SiLU-conv3x3,
// plus a (1x1 projected) skip, followed by text cross-attention and, when
// enabled, temporal self-attention across frames. Everything except temporal
// attention acts on frames independently.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hb/autograd.hpp"
#include "hb/diffusion.hpp"
#include "hb/errors.hpp"
#include "hb/rng.hpp"
#include "hb/tensor.hpp"
#include "hb/video.hpp"

namespace hb {

struct UNetConfig {
  int latent_channels = 48;
  int base_channels = 32;
  std::vector<int> channel_mults{1, 2};
  std::vector<int> blocks_per_level{2, 2};
  std::vector<int> up_blocks_per_level{2, 2};
  int middle_blocks = 2;
  bool temporal_attention = true;
  int text_dim = 32;
  int text_tokens = 4;
  int time_embed_dim = 32;
  bool fps_embed = true;
  int norm_groups = 8;

  int levels() const { return static_cast<int>(channel_mults.size()); }
  int channels(int level) const { return base_channels * channel_mults.at(static_cast<std::size_t>(level)); }
  int token_dim() const { return text_dim / text_tokens; }

  void validate() const {
    const auto L = channel_mults.size();
    if (L == 0) throw ConfigError("unet: at least one level required");
    if (blocks_per_level.size() != L || up_blocks_per_level.size() != L)
      throw ConfigError("unet: blocks_per_level and up_blocks_per_level need one entry per level");
    if (latent_channels <= 0 || base_channels <= 0) throw ConfigError("unet: channels must be positive");
    if (norm_groups <= 0) throw ConfigError("unet: norm_groups must be positive");
    for (std::size_t i = 0; i < L; ++i) {
      if (channel_mults[i] <= 0) throw ConfigError("unet: channel multipliers must be positive");
      if (blocks_per_level[i] < 1 || up_blocks_per_level[i] < 1)
        throw ConfigError("unet: every level needs at least one block");
      if (channels(static_cast<int>(i)) % norm_groups != 0)
        throw ConfigError("unet: norm_groups must divide every level's channel count");
    }
    if (middle_blocks < 0) throw ConfigError("unet: middle_blocks must be >= 0");
    if (text_dim <= 0 || text_tokens <= 0 || text_dim % text_tokens != 0)
      throw ConfigError("unet: text_dim must be a positive multiple of text_tokens");
    if (time_embed_dim <= 0 || time_embed_dim % 2 != 0)
      throw ConfigError("unet: time_embed_dim must be positive and even");
  }

  bool operator==(const UNetConfig&) const = default;
};

/// Named parameters in a fixed (construction) order.
template <class T>
class ParameterStore {
 public:
  using Entry = std::pair<std::string, Tensor<T>>;

  void add(std::string name, Tensor<T> value) {
    if (index_.contains(name)) throw ConfigError("duplicate parameter name " + name);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(value));
  }

  bool contains(const std::string& name) const { return index_.contains(name); }

  const Tensor<T>& get(const std::string& name) const { return entries_.at(lookup(name)).second; }
  Tensor<T>& get(const std::string& name) { return entries_.at(lookup(name)).second; }

  std::size_t count() const { return entries_.size(); }
  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.size();
    return n;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  template <class U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (const auto& [n, t] : entries_) out.add(n, t.template cast<U>());
    return out;
  }

  /// Same names and shapes, all zeros.
  ParameterStore zeros_like() const {
    ParameterStore out;
    for (const auto& [n, t] : entries_) out.add(n, Tensor<T>(t.shape()));
    return out;
  }

  bool operator==(const ParameterStore& o) const { return entries_ == o.entries_; }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter " + name);
    return it->second;
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class InitKind { kFanIn, kZero, kOne };

struct ParamSpec {
  std::string name;
  Shape shape;
  InitKind init;
  std::size_t fan_in = 0;
};

namespace detail {

inline std::string level_prefix(const char* path, int level, int block) {
  return std::string(path) + "." + std::to_string(level) + ".block." + std::to_string(block);
}

inline std::string mid_prefix(int block) { return "mid.block." + std::to_string(block); }

inline void block_specs(std::vector<ParamSpec>& out, const UNetConfig& cfg, const std::string& p,
                        std::size_t cin, std::size_t cout) {
  const auto E = static_cast<std::size_t>(cfg.time_embed_dim);
  const auto td = static_cast<std::size_t>(cfg.token_dim());
  auto norm = [&](const std::string& n, std::size_t c) {
    out.push_back({p + "." + n + ".weight", {c}, InitKind::kOne});
    out.push_back({p + "." + n + ".bias", {c}, InitKind::kZero});
  };
  norm("norm1", cin);
  out.push_back({p + ".conv1.weight", {cout, cin, 3, 3}, InitKind::kFanIn, cin * 9});
  out.push_back({p + ".conv1.bias", {cout}, InitKind::kZero});
  out.push_back({p + ".temb.weight", {cout, E}, InitKind::kFanIn, E});
  out.push_back({p + ".temb.bias", {cout}, InitKind::kZero});
  norm("norm2", cout);
  out.push_back({p + ".conv2.weight", {cout, cout, 3, 3}, InitKind::kFanIn, cout * 9});
  out.push_back({p + ".conv2.bias", {cout}, InitKind::kZero});
  if (cin != cout) {
    out.push_back({p + ".skip.weight", {cout, cin, 1, 1}, InitKind::kFanIn, cin});
    out.push_back({p + ".skip.bias", {cout}, InitKind::kZero});
  }
  norm("xattn.norm", cout);
  out.push_back({p + ".xattn.q.weight", {cout, cout}, InitKind::kFanIn, cout});
  out.push_back({p + ".xattn.k.weight", {cout, td}, InitKind::kFanIn, td});
  out.push_back({p + ".xattn.v.weight", {cout, td}, InitKind::kFanIn, td});
  out.push_back({p + ".xattn.out.weight", {cout, cout}, InitKind::kFanIn, cout});
  out.push_back({p + ".xattn.out.bias", {cout}, InitKind::kZero});
  if (cfg.temporal_attention) {
    norm("tattn.norm", cout);
    for (const char* n : {"q", "k", "v", "out"})
      out.push_back({p + ".tattn." + n + ".weight", {cout, cout}, InitKind::kFanIn, cout});
    out.push_back({p + ".tattn.out.bias", {cout}, InitKind::kZero});
  }
}

/// Input/output channels of every residual block, keyed by name prefix.
struct BlockPlan {
  std::string prefix;
  std::size_t cin, cout;
};

inline std::vector<BlockPlan> block_plan(const UNetConfig& cfg) {
  std::vector<BlockPlan> plan;
  const int L = cfg.levels();
  auto ch = [&](int i) { return static_cast<std::size_t>(cfg.channels(i)); };
  std::size_t cur = ch(0);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < cfg.blocks_per_level[static_cast<std::size_t>(i)]; ++j) {
      plan.push_back({level_prefix("down", i, j), cur, ch(i)});
      cur = ch(i);
    }
  for (int j = 0; j < cfg.middle_blocks; ++j) plan.push_back({mid_prefix(j), cur, cur});
  for (int i = L - 1; i >= 0; --i)
    for (int j = 0; j < cfg.up_blocks_per_level[static_cast<std::size_t>(i)]; ++j) {
      plan.push_back({level_prefix("up", i, j), j == 0 ? cur + ch(i) : ch(i), ch(i)});
      cur = ch(i);
    }
  return plan;
}

}  // namespace detail

/// Every parameter of the network in store order.
inline std::vector<ParamSpec> parameter_specs(const UNetConfig& cfg) {
  cfg.validate();
  std::vector<ParamSpec> s;
  const auto E = static_cast<std::size_t>(cfg.time_embed_dim);
  auto mlp = [&](const std::string& p) {
    s.push_back({p + ".lin1.weight", {E, E}, InitKind::kFanIn, E});
    s.push_back({p + ".lin1.bias", {E}, InitKind::kZero});
    s.push_back({p + ".lin2.weight", {E, E}, InitKind::kFanIn, E});
    s.push_back({p + ".lin2.bias", {E}, InitKind::kZero});
  };
  mlp("time");
  if (cfg.fps_embed) mlp("fps");
  s.push_back({"null_text", {static_cast<std::size_t>(cfg.text_dim)}, InitKind::kZero});
  const auto c0 = static_cast<std::size_t>(cfg.channels(0));
  const auto cl = static_cast<std::size_t>(cfg.latent_channels);
  s.push_back({"conv_in.weight", {c0, 3 * cl, 3, 3}, InitKind::kFanIn, 3 * cl * 9});
  s.push_back({"conv_in.bias", {c0}, InitKind::kZero});
  for (const auto& b : detail::block_plan(cfg)) detail::block_specs(s, cfg, b.prefix, b.cin, b.cout);
  s.push_back({"out.norm.weight", {c0}, InitKind::kOne});
  s.push_back({"out.norm.bias", {c0}, InitKind::kZero});
  s.push_back({"conv_out.weight", {cl, c0, 3, 3}, InitKind::kZero});
  s.push_back({"conv_out.bias", {cl}, InitKind::kZero});
  return s;
}

inline std::size_t param_count(const UNetConfig& cfg) {
  std::size_t n = 0;
  for (const auto& p : parameter_specs(cfg)) n += shape_size(p.shape);
  return n;
}

/// Fan-in scaled Gaussian weights (std = 1/sqrt(fan_in)); norms at one;
/// biases, the null text embedding and the output projection at zero.
template <class T = float>
ParameterStore<T> init_params(const UNetConfig& cfg, std::uint64_t seed) {
  ParameterStore<T> store;
  Rng rng(seed);
  for (const auto& spec : parameter_specs(cfg)) {
    Tensor<T> t(spec.shape);
    switch (spec.init) {
      case InitKind::kFanIn: {
        const double sd = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
        for (auto& v : t.data()) v = static_cast<T>(sd * rng.normal());
        break;
      }
      case InitKind::kOne:
        t.fill(T{1});
        break;
      case InitKind::kZero:
        break;
    }
    store.add(spec.name, std::move(t));
  }
  return store;
}

/// Binds store entries into a graph on first use. Trainable bindings create
/// gradient-carrying variables; otherwise parameters are constants.
template <class T>
class ParamBinding {
 public:
  using Var = typename Graph<T>::Var;

  ParamBinding(Graph<T>& g, const ParameterStore<T>& store, bool trainable)
      : graph_(g), store_(store), trainable_(trainable) {}

  Var operator()(const std::string& name) {
    if (auto it = bound_.find(name); it != bound_.end()) return it->second;
    const auto& t = store_.get(name);
    Var v = trainable_ ? graph_.variable(t) : graph_.constant(t);
    bound_.emplace(name, v);
    return v;
  }

  Graph<T>& graph() { return graph_; }
  const ParameterStore<T>& store() const { return store_; }

  /// Gradients for every store entry; unused entries get zeros.
  ParameterStore<T> gradients() const {
    ParameterStore<T> out;
    for (const auto& [name, t] : store_) {
      auto it = bound_.find(name);
      out.add(name, it == bound_.end() ? Tensor<T>(t.shape()) : graph_.grad(it->second));
    }
    return out;
  }

 private:
  Graph<T>& graph_;
  const ParameterStore<T>& store_;
  bool trainable_;
  std::unordered_map<std::string, Var> bound_;
};

template <class T>
Tensor<T> sinusoidal_embedding(double value, std::size_t dim) {
  const std::size_t half = dim / 2;
  Tensor<T> e({1, dim});
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    e[i] = static_cast<T>(std::sin(value * freq));
    e[half + i] = static_cast<T>(std::cos(value * freq));
  }
  return e;
}

namespace detail {

template <class T>
class UNetBuilder {
 public:
  using Var = typename Graph<T>::Var;

  UNetBuilder(const UNetConfig& cfg, ParamBinding<T>& p)
      : cfg_(cfg), p_(p), g_(p.graph()), groups_(static_cast<std::size_t>(cfg.norm_groups)) {}

  Var run(Var z_t, int t, const ConditioningBundle<T>& cond) {
    const Shape zs = g_.shape(z_t);
    const int L = cfg_.levels();
    if (zs.size() != 4 || zs[1] != static_cast<std::size_t>(cfg_.latent_channels))
      throw ShapeError("unet: expected [N," + std::to_string(cfg_.latent_channels) +
                       ",h,w] latent, got " + shape_str(zs));
    const std::size_t div = std::size_t{1} << (L - 1);
    if (zs[2] % div || zs[3] % div)
      throw ShapeError("unet: latent spatial size " + shape_str(zs) + " not divisible by " +
                       std::to_string(div));
    frames_ = zs[0];

    embed(t, cond);
    context(cond);

    Var x = g_.concat_channels(z_t, frame_condition(cond.first_frame_latent, zs));
    x = g_.concat_channels(x, frame_condition(cond.last_frame_latent, zs));
    Var h = g_.conv2d(x, p_("conv_in.weight"), p_("conv_in.bias"));

    std::vector<Var> skips;
    for (int i = 0; i < L; ++i) {
      for (int j = 0; j < cfg_.blocks_per_level[static_cast<std::size_t>(i)]; ++j)
        h = block(h, level_prefix("down", i, j));
      skips.push_back(h);
      if (i < L - 1) h = g_.avg_pool(h, 2);
    }
    for (int j = 0; j < cfg_.middle_blocks; ++j) h = block(h, mid_prefix(j));
    for (int i = L - 1; i >= 0; --i) {
      h = g_.concat_channels(h, skips[static_cast<std::size_t>(i)]);
      for (int j = 0; j < cfg_.up_blocks_per_level[static_cast<std::size_t>(i)]; ++j)
        h = block(h, level_prefix("up", i, j));
      if (i > 0) h = g_.upsample_nearest(h, 2);
    }
    h = g_.silu(g_.group_norm(h, p_("out.norm.weight"), p_("out.norm.bias"), groups_));
    return g_.conv2d(h, p_("conv_out.weight"), p_("conv_out.bias"));
  }

 private:
  Var mlp(const std::string& prefix, Var x) {
    Var h = g_.silu(g_.linear(x, p_(prefix + ".lin1.weight"), p_(prefix + ".lin1.bias")));
    return g_.linear(h, p_(prefix + ".lin2.weight"), p_(prefix + ".lin2.bias"));
  }

  void embed(int t, const ConditioningBundle<T>& cond) {
    const auto E = static_cast<std::size_t>(cfg_.time_embed_dim);
    Var e = mlp("time", g_.constant(sinusoidal_embedding<T>(t, E)));
    if (cfg_.fps_embed) {
      if (!(cond.fps > 0.0)) throw ArgumentError("conditioning fps must be positive");
      e = g_.add(e, mlp("fps", g_.constant(sinusoidal_embedding<T>(cond.fps, E))));
    }
    temb_ = g_.silu(e);
  }

  void context(const ConditioningBundle<T>& cond) {
    const auto K = static_cast<std::size_t>(cfg_.text_tokens);
    const auto td = static_cast<std::size_t>(cfg_.token_dim());
    Var text;
    if (cond.null_flag) {
      text = p_("null_text");
    } else {
      if (cond.text_embedding.size() != static_cast<std::size_t>(cfg_.text_dim))
        throw ShapeError("text embedding has " + std::to_string(cond.text_embedding.size()) +
                         " entries, expected " + std::to_string(cfg_.text_dim));
      text = g_.constant(cond.text_embedding);
    }
    ctx_ = g_.reshape(text, {K, td});
  }

  Var frame_condition(const std::optional<Tensor<T>>& frame, const Shape& zs) {
    Tensor<T> out({zs[0], zs[1], zs[2], zs[3]});
    if (frame) {
      if (frame->shape() != Shape{zs[1], zs[2], zs[3]})
        throw ShapeError("frame condition " + shape_str(frame->shape()) +
                         " does not match latent frame shape");
      const std::size_t per = frame->size();
      for (std::size_t n = 0; n < zs[0]; ++n)
        std::copy_n(frame->ptr(), per, out.ptr() + n * per);
    }
    return g_.constant(std::move(out));
  }

  Var norm(Var h, const std::string& prefix) {
    return g_.group_norm(h, p_(prefix + ".weight"), p_(prefix + ".bias"), groups_);
  }

  Var block(Var h, const std::string& p) {
    const std::size_t cin = g_.shape(h)[1];
    const std::size_t cout = g_.shape(p_(p + ".conv1.weight"))[0];
    Var a = g_.conv2d(g_.silu(norm(h, p + ".norm1")), p_(p + ".conv1.weight"), p_(p + ".conv1.bias"));
    a = g_.add_channel(a, g_.linear(temb_, p_(p + ".temb.weight"), p_(p + ".temb.bias")));
    a = g_.conv2d(g_.silu(norm(a, p + ".norm2")), p_(p + ".conv2.weight"), p_(p + ".conv2.bias"));
    Var skip = cin != cout ? g_.conv2d(h, p_(p + ".skip.weight"), p_(p + ".skip.bias")) : h;
    h = g_.add(skip, a);
    h = cross_attention(h, p + ".xattn");
    if (cfg_.temporal_attention) h = temporal_attention(h, p + ".tattn");
    return h;
  }

  Var cross_attention(Var h, const std::string& p) {
    const Shape s = g_.shape(h);
    const std::size_t N = s[0], C = s[1], H = s[2], W = s[3];
    Var x = g_.reshape(g_.permute(norm(h, p + ".norm"), {0, 2, 3, 1}), {N * H * W, C});
    Var q = g_.linear(x, p_(p + ".q.weight"));
    Var k = g_.linear(ctx_, p_(p + ".k.weight"));
    Var v = g_.linear(ctx_, p_(p + ".v.weight"));
    Var a = g_.softmax_last(g_.scale(g_.matmul(q, k, false, true),
                                     static_cast<T>(1.0 / std::sqrt(static_cast<double>(C)))));
    Var o = g_.linear(g_.matmul(a, v), p_(p + ".out.weight"), p_(p + ".out.bias"));
    o = g_.permute(g_.reshape(o, {N, H, W, C}), {0, 3, 1, 2});
    return g_.add(h, o);
  }

  Var temporal_attention(Var h, const std::string& p) {
    const Shape s = g_.shape(h);
    const std::size_t N = s[0], C = s[1], H = s[2], W = s[3], P = H * W;
    Var x = g_.reshape(g_.permute(norm(h, p + ".norm"), {2, 3, 0, 1}), {P, N, C});
    x = g_.add_broadcast(x, g_.constant(frame_positions(N, C)));
    Var flat = g_.reshape(x, {P * N, C});
    Var q = g_.reshape(g_.linear(flat, p_(p + ".q.weight")), {P, N, C});
    Var k = g_.reshape(g_.linear(flat, p_(p + ".k.weight")), {P, N, C});
    Var v = g_.reshape(g_.linear(flat, p_(p + ".v.weight")), {P, N, C});
    Var a = g_.softmax_last(
        g_.scale(g_.bmm(q, k, true), static_cast<T>(1.0 / std::sqrt(static_cast<double>(C)))));
    Var o = g_.reshape(g_.bmm(a, v), {P * N, C});
    o = g_.linear(o, p_(p + ".out.weight"), p_(p + ".out.bias"));
    o = g_.permute(g_.reshape(o, {H, W, N, C}), {2, 3, 0, 1});
    return g_.add(h, o);
  }

  static Tensor<T> frame_positions(std::size_t frames, std::size_t channels) {
    Tensor<T> pe({frames, channels});
    for (std::size_t n = 0; n < frames; ++n) {
      auto row = sinusoidal_embedding<T>(static_cast<double>(n), channels + channels % 2);
      std::copy_n(row.ptr(), channels, pe.ptr() + n * channels);
    }
    return pe;
  }

  const UNetConfig& cfg_;
  ParamBinding<T>& p_;
  Graph<T>& g_;
  std::size_t groups_;
  std::size_t frames_ = 0;
  Var temb_{};
  Var ctx_{};
};

}  // namespace detail

/// Builds the epsilon prediction for z_t inside an existing graph.
template <class T>
typename Graph<T>::Var unet_forward(ParamBinding<T>& params, const UNetConfig& cfg,
                                    typename Graph<T>::Var z_t, int t,
                                    const ConditioningBundle<T>& cond) {
  return detail::UNetBuilder<T>(cfg, params).run(z_t, t, cond);
}

/// Inference-only forward pass.
template <class T>
LatentVideo<T> unet_forward(const ParameterStore<T>& params, const UNetConfig& cfg,
                            const LatentVideo<T>& z_t, int t, const ConditioningBundle<T>& cond) {
  Graph<T> g;
  ParamBinding<T> bind(g, params, false);
  auto out = unet_forward(bind, cfg, g.constant(z_t.tensor()), t, cond);
  return LatentVideo<T>(g.value(out));
}

/// Bundles architecture and weights; the object samplers and trainers use.
template <class T = float>
struct DenoiserModel {
  UNetConfig config;
  ParameterStore<T> params;
};

}  // namespace hb
