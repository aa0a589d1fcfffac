#pragma once

// Benchmark-style scoring: seven quality sub-metrics from analytic
// providers, pluggable semantic providers, and weighted aggregation.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hb/data_pipeline.hpp"
#include "hb/errors.hpp"
#include "hb/reward.hpp"
#include "hb/video.hpp"

namespace hb {

inline const std::vector<std::string>& quality_metric_names() {
  static const std::vector<std::string> names{"subject_consistency", "background_consistency",
                                              "temporal_flickering", "motion_smoothness",
                                              "aesthetic_quality",   "dynamic_degree",
                                              "imaging_quality"};
  return names;
}

namespace metrics {

/// Gray frames average-pooled onto an 8x8 grid (cell edges by integer division).
inline std::vector<std::vector<double>> frame_features(const GrayClip& g, std::size_t grid = 8) {
  std::vector<std::vector<double>> feats(g.frames, std::vector<double>(grid * grid, 0.0));
  std::vector<double> counts(grid * grid, 0.0);
  for (std::size_t y = 0; y < g.height; ++y)
    for (std::size_t x = 0; x < g.width; ++x) counts[(y * grid / g.height) * grid + x * grid / g.width] += 1.0;
  for (std::size_t n = 0; n < g.frames; ++n) {
    for (std::size_t y = 0; y < g.height; ++y)
      for (std::size_t x = 0; x < g.width; ++x)
        feats[n][(y * grid / g.height) * grid + x * grid / g.width] += g.at(n, y, x);
    for (std::size_t i = 0; i < feats[n].size(); ++i) feats[n][i] /= counts[i];
  }
  return feats;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] * b[i], na += a[i] * a[i], nb += b[i] * b[i];
  if (na == 0.0 && nb == 0.0) return 1.0;  // two black frames are identical
  if (na == 0.0 || nb == 0.0) return 0.0;
  return d / std::sqrt(na * nb);
}

/// Mean cosine similarity of frames 1..N-1 with frame 0 (1 for a single frame).
inline double consistency_with_first(const std::vector<std::vector<double>>& feats) {
  if (feats.size() < 2) return 1.0;
  double s = 0;
  for (std::size_t n = 1; n < feats.size(); ++n) s += cosine(feats[n], feats[0]);
  return std::clamp(s / static_cast<double>(feats.size() - 1), 0.0, 1.0);
}

template <class T>
double subject_consistency(const VideoTensor<T>& v) {
  return consistency_with_first(frame_features(luma(v)));
}

/// The outer ring of the 8x8 feature grid.
template <class T>
double background_consistency(const VideoTensor<T>& v) {
  auto feats = frame_features(luma(v));
  for (auto& f : feats) {
    std::vector<double> ring;
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j)
        if (i == 0 || j == 0 || i == 7 || j == 7) ring.push_back(f[i * 8 + j]);
    f = std::move(ring);
  }
  return consistency_with_first(feats);
}

/// Mean absolute k-th temporal difference over all [0, 1] pixel values.
template <class T>
double mean_temporal_difference(const VideoTensor<T>& v, int order) {
  const std::size_t frame = 3 * v.height() * v.width();
  const auto& d = v.tensor();
  double s = 0;
  std::size_t n = 0;
  for (std::size_t f = 0; f + static_cast<std::size_t>(order) < v.frames(); ++f)
    for (std::size_t i = 0; i < frame; ++i) {
      const double a = unit_pixel(d[f * frame + i]), b = unit_pixel(d[(f + 1) * frame + i]);
      const double diff = order == 1 ? b - a : unit_pixel(d[(f + 2) * frame + i]) - 2 * b + a;
      s += std::abs(diff);
      ++n;
    }
  return n ? s / static_cast<double>(n) : 0.0;
}

template <class T>
double temporal_flickering(const VideoTensor<T>& v) {
  return 1.0 - std::clamp(mean_temporal_difference(v, 1) / 0.25, 0.0, 1.0);
}

template <class T>
double motion_smoothness(const VideoTensor<T>& v) {
  return 1.0 - std::clamp(mean_temporal_difference(v, 2) / 0.25, 0.0, 1.0);
}

/// Fraction of matched blocks whose displacement exceeds one pixel.
template <class T>
double dynamic_degree(const VideoTensor<T>& v) {
  if (v.frames() < 2) return 0.0;
  const auto flows = block_matching(luma(v));
  if (flows.empty()) return 0.0;
  std::size_t moving = 0;
  for (const auto& f : flows) moving += std::hypot(f.dy, f.dx) > 1.0;
  return static_cast<double>(moving) / static_cast<double>(flows.size());
}

/// clamp(mean(gx^2) + mean(gy^2), over forward differences of gray, / 0.2).
template <class T>
double imaging_quality(const VideoTensor<T>& v) {
  const auto g = luma(v);
  double sx = 0, sy = 0;
  std::size_t nx = 0, ny = 0;
  for (std::size_t n = 0; n < g.frames; ++n)
    for (std::size_t y = 0; y < g.height; ++y)
      for (std::size_t x = 0; x < g.width; ++x) {
        if (x + 1 < g.width) sx += std::pow(g.at(n, y, x + 1) - g.at(n, y, x), 2), ++nx;
        if (y + 1 < g.height) sy += std::pow(g.at(n, y + 1, x) - g.at(n, y, x), 2), ++ny;
      }
  const double energy = (nx ? sx / static_cast<double>(nx) : 0.0) + (ny ? sy / static_cast<double>(ny) : 0.0);
  return std::clamp(energy / 0.2, 0.0, 1.0);
}

}  // namespace metrics

using QualityProvider = std::function<double(const VideoTensor<float>&)>;
using SemanticProvider = std::function<double(const VideoTensor<float>&, const Tensor<float>& text)>;

inline std::map<std::string, QualityProvider> builtin_quality_providers() {
  return {
      {"subject_consistency", [](const VideoTensor<float>& v) { return metrics::subject_consistency(v); }},
      {"background_consistency", [](const VideoTensor<float>& v) { return metrics::background_consistency(v); }},
      {"temporal_flickering", [](const VideoTensor<float>& v) { return metrics::temporal_flickering(v); }},
      {"motion_smoothness", [](const VideoTensor<float>& v) { return metrics::motion_smoothness(v); }},
      {"aesthetic_quality", [](const VideoTensor<float>& v) { return aesthetic_score(v); }},
      {"dynamic_degree", [](const VideoTensor<float>& v) { return metrics::dynamic_degree(v); }},
      {"imaging_quality", [](const VideoTensor<float>& v) { return metrics::imaging_quality(v); }},
  };
}

/// (score_video + 1) / 2 under the toy video-text reward.
template <class T>
double overall_consistency(const VideoTensor<T>& v, const Tensor<T>& text, const RewardModel<T>& reward) {
  return std::clamp((reward.score_video(v, text) + 1.0) / 2.0, 0.0, 1.0);
}

inline SemanticProvider overall_consistency_provider(std::shared_ptr<const RewardModel<float>> reward) {
  return [reward](const VideoTensor<float>& v, const Tensor<float>& text) {
    return overall_consistency(v, text, *reward);
  };
}

/// Scores named by quality_metric_names(), one provider each.
inline std::map<std::string, double> quality_sub_metrics(const VideoTensor<float>& v,
                                                         const std::map<std::string, QualityProvider>& providers) {
  std::map<std::string, double> out;
  for (const auto& name : quality_metric_names()) {
    auto it = providers.find(name);
    if (it == providers.end() || !it->second) throw ConfigError("no provider for quality sub-metric " + name);
    out[name] = it->second(v);
  }
  return out;
}

struct EvalWeights {
  std::map<std::string, double> quality;  // missing names weigh 1
  double quality_group = 4.0;
  double semantic_group = 1.0;

  double quality_weight(const std::string& name) const {
    auto it = quality.find(name);
    return it == quality.end() ? 1.0 : it->second;
  }
  bool operator==(const EvalWeights&) const = default;
};

struct MetricReport {
  std::map<std::string, double> quality_scores;
  std::map<std::string, double> semantic_scores;
  std::map<std::string, double> quality_weights;  // as used
  double quality_group_weight = 4.0;
  double semantic_group_weight = 1.0;
  double quality_score = 0.0;
  double semantic_score = 0.0;
  double total_score = 0.0;
  bool operator==(const MetricReport&) const = default;
};

/// quality = sum w_i q_i / sum w_i; semantic = mean of the supplied scores;
/// total = (w_q quality + w_s semantic) / (w_q + w_s).
inline MetricReport aggregate(const std::map<std::string, double>& quality,
                              const std::map<std::string, double>& semantic, const EvalWeights& w = {}) {
  MetricReport r;
  r.quality_scores = quality;
  r.semantic_scores = semantic;
  r.quality_group_weight = w.quality_group;
  r.semantic_group_weight = w.semantic_group;
  if (w.quality_group < 0 || w.semantic_group < 0 || w.quality_group + w.semantic_group <= 0)
    throw ConfigError("group weights must be non-negative with a positive sum");
  double num = 0, den = 0;
  for (const auto& name : quality_metric_names()) {
    auto it = quality.find(name);
    if (it == quality.end()) throw ConfigError("missing quality sub-score " + name);
    const double wi = w.quality_weight(name);
    if (wi < 0) throw ConfigError("negative weight for " + name);
    r.quality_weights[name] = wi;
    num += wi * it->second;
    den += wi;
  }
  if (den <= 0) throw ConfigError("quality weights must include a positive entry");
  r.quality_score = num / den;
  if (semantic.empty()) {
    if (w.semantic_group > 0) throw ConfigError("no semantic providers but semantic group weight is positive");
    r.semantic_score = 0.0;
  } else {
    double s = 0;
    for (const auto& [name, v] : semantic) s += v;
    r.semantic_score = s / static_cast<double>(semantic.size());
  }
  r.total_score = (w.quality_group * r.quality_score + w.semantic_group * r.semantic_score) /
                  (w.quality_group + w.semantic_group);
  return r;
}

inline nlohmann::json to_json(const MetricReport& r) {
  return {{"quality_scores", r.quality_scores},
          {"semantic_scores", r.semantic_scores},
          {"weights", {{"quality", r.quality_weights}, {"quality_group", r.quality_group_weight},
                       {"semantic_group", r.semantic_group_weight}}},
          {"quality_score", r.quality_score},
          {"semantic_score", r.semantic_score},
          {"total_score", r.total_score}};
}

inline MetricReport metric_report_from_json(const nlohmann::json& j) {
  MetricReport r;
  r.quality_scores = j.at("quality_scores").get<std::map<std::string, double>>();
  r.semantic_scores = j.at("semantic_scores").get<std::map<std::string, double>>();
  r.quality_weights = j.at("weights").at("quality").get<std::map<std::string, double>>();
  r.quality_group_weight = j.at("weights").at("quality_group").get<double>();
  r.semantic_group_weight = j.at("weights").at("semantic_group").get<double>();
  r.quality_score = j.at("quality_score").get<double>();
  r.semantic_score = j.at("semantic_score").get<double>();
  r.total_score = j.at("total_score").get<double>();
  return r;
}

/// Evaluates one clip with the given providers.
inline MetricReport evaluate_clip(const VideoTensor<float>& v, const Tensor<float>& text,
                                  const std::map<std::string, QualityProvider>& quality,
                                  const std::map<std::string, SemanticProvider>& semantic,
                                  const EvalWeights& w = {}) {
  std::map<std::string, double> sem;
  for (const auto& [name, p] : semantic) sem[name] = p(v, text);
  return aggregate(quality_sub_metrics(v, quality), sem, w);
}

}  // namespace hb
