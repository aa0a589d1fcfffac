#include <gtest/gtest.h>

#include "hb/eval.hpp"
#include "hb/synth.hpp"

using namespace hb;

namespace {

std::map<std::string, double> quality_vector(std::vector<double> v) {
  std::map<std::string, double> m;
  for (std::size_t i = 0; i < v.size(); ++i) m[quality_metric_names()[i]] = v[i];
  return m;
}

VideoTensor<float> concat(const VideoTensor<float>& a, const VideoTensor<float>& b) {
  Tensor<float> t({a.frames() + b.frames(), 3, a.height(), a.width()});
  std::copy(a.tensor().data().begin(), a.tensor().data().end(), t.ptr());
  std::copy(b.tensor().data().begin(), b.tensor().data().end(), t.ptr() + a.tensor().size());
  return VideoTensor<float>(t);
}

}  // namespace

TEST(SubMetrics, IdenticalFrames) {
  auto v = synth::translation_clip(6, 32, 4, 0, 0, 6.0);
  auto q = quality_sub_metrics(v, builtin_quality_providers());
  EXPECT_DOUBLE_EQ(q["subject_consistency"], 1.0);
  EXPECT_NEAR(q["background_consistency"], 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(q["temporal_flickering"], 1.0);
  EXPECT_DOUBLE_EQ(q["motion_smoothness"], 1.0);
  EXPECT_DOUBLE_EQ(q["dynamic_degree"], 0.0);
  for (const auto& [name, s] : q) {
    EXPECT_GE(s, 0.0) << name;
    EXPECT_LE(s, 1.0) << name;
  }
}

TEST(SubMetrics, AlternatingBlackWhiteSaturatesFlicker) {
  VideoTensor<float> v(6, 16, 16);
  for (std::size_t n = 0; n < 6; ++n)
    for (std::size_t i = 0; i < 3 * 16 * 16; ++i) v.tensor()[n * 768 + i] = n % 2 ? 1.0f : -1.0f;
  EXPECT_DOUBLE_EQ(metrics::temporal_flickering(v), 0.0);
  EXPECT_DOUBLE_EQ(metrics::motion_smoothness(v), 0.0);
}

TEST(SubMetrics, TranslatingTextureIsDynamic) {
  EXPECT_GT(metrics::dynamic_degree(synth::translation_clip(4, 32, 2, 0, 2)), 0.5);
  EXPECT_EQ(metrics::dynamic_degree(synth::translation_clip(4, 32, 2, 0, 1)), 0.0);  // exactly 1 px is not > 1
}

TEST(SubMetrics, HandComputedFlickerAndSharpness) {
  // Two flat frames at 0.25 and 0.5 in [0, 1] -> mean |diff| 0.25 -> flicker 0.
  VideoTensor<float> v(3, 8, 8);
  for (std::size_t i = 0; i < 192; ++i) {
    v.tensor()[i] = -0.5f;
    v.tensor()[192 + i] = -0.25f;
    v.tensor()[384 + i] = 0.0f;
  }
  // Diffs are 0.125 per step in [0, 1]: flicker 1 - 0.5; second difference 0.
  EXPECT_NEAR(metrics::temporal_flickering(v), 0.5, 1e-12);
  EXPECT_NEAR(metrics::motion_smoothness(v), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(metrics::imaging_quality(v), 0.0);

  // Vertical stripes alternating 0 / 1: every horizontal gradient is 1.
  VideoTensor<float> s(1, 8, 8);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) s.at(0, c, y, x) = x % 2 ? 1.0f : -1.0f;
  EXPECT_DOUBLE_EQ(metrics::imaging_quality(s), 1.0);
}

TEST(SubMetrics, DuplicationInvarianceOnStaticClip) {
  auto v = synth::translation_clip(5, 32, 8, 0, 0, 6.0);
  auto vv = concat(v, v);
  auto a = quality_sub_metrics(v, builtin_quality_providers());
  auto b = quality_sub_metrics(vv, builtin_quality_providers());
  for (const char* name : {"subject_consistency", "temporal_flickering", "dynamic_degree"})
    EXPECT_NEAR(a[name], b[name], 1e-6) << name;
}

TEST(SubMetrics, MissingProvider) {
  auto providers = builtin_quality_providers();
  providers.erase("imaging_quality");
  EXPECT_THROW(quality_sub_metrics(synth::flat_clip(2, 16), providers), ConfigError);
  providers = builtin_quality_providers();
  providers["imaging_quality"] = [](const VideoTensor<float>&) { return 0.42; };
  EXPECT_DOUBLE_EQ(quality_sub_metrics(synth::flat_clip(2, 16), providers)["imaging_quality"], 0.42);
}

TEST(Aggregate, HandComputedVectors) {
  // Equal weights: [1,0,...] -> 1/7.
  auto r = aggregate(quality_vector({1, 0, 0, 0, 0, 0, 0}), {{"overall_consistency", 0.5}});
  EXPECT_NEAR(r.quality_score, 1.0 / 7.0, 1e-12);
  EXPECT_NEAR(r.total_score, (4.0 / 7.0 + 0.5) / 5.0, 1e-12);

  // Weighted: weights 1..7 against scores 0.1..0.7 -> sum(i * i/10) / 28 = 14/28 * ... = 140/280.
  EvalWeights w;
  for (std::size_t i = 0; i < 7; ++i) w.quality[quality_metric_names()[i]] = static_cast<double>(i + 1);
  auto r2 = aggregate(quality_vector({0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7}), {{"a", 0.2}, {"b", 0.4}}, w);
  EXPECT_NEAR(r2.quality_score, 14.0 / 28.0, 1e-12);
  EXPECT_NEAR(r2.semantic_score, 0.3, 1e-12);
  EXPECT_NEAR(r2.total_score, (4 * 0.5 + 0.3) / 5.0, 1e-12);
}

TEST(Aggregate, QualitySemanticTotal) {
  EvalWeights w;
  auto r = aggregate(quality_vector(std::vector<double>(7, 0.8)), {{"x", 0.6}}, w);
  EXPECT_NEAR(r.total_score, 0.76, 1e-12);
}

TEST(Aggregate, ConstantInputAndScaleInvariance) {
  for (double c : {0.0, 0.3, 1.0}) {
    EvalWeights w;
    w.quality["dynamic_degree"] = 3.0;
    w.quality_group = 2.0;
    w.semantic_group = 5.0;
    auto r = aggregate(quality_vector(std::vector<double>(7, c)), {{"a", c}, {"b", c}}, w);
    EXPECT_NEAR(r.quality_score, c, 1e-12);
    EXPECT_NEAR(r.semantic_score, c, 1e-12);
    EXPECT_NEAR(r.total_score, c, 1e-12);
  }
  EvalWeights w;
  w.quality["aesthetic_quality"] = 2.5;
  auto q = quality_vector({0.9, 0.1, 0.4, 0.7, 0.3, 0.2, 0.6});
  auto base = aggregate(q, {{"a", 0.35}}, w);
  EvalWeights scaled = w;
  for (const auto& name : quality_metric_names()) scaled.quality[name] = 7.0 * w.quality_weight(name);
  scaled.quality_group *= 3.0;
  scaled.semantic_group *= 3.0;
  auto other = aggregate(q, {{"a", 0.35}}, scaled);
  EXPECT_NEAR(base.quality_score, other.quality_score, 1e-12);
  EXPECT_NEAR(base.total_score, other.total_score, 1e-12);
}

TEST(Aggregate, Errors) {
  auto q = quality_vector(std::vector<double>(7, 0.5));
  EXPECT_THROW(aggregate(q, {}), ConfigError);
  EvalWeights only_quality;
  only_quality.semantic_group = 0.0;
  EXPECT_DOUBLE_EQ(aggregate(q, {}, only_quality).total_score, 0.5);
  EvalWeights neg;
  neg.quality["motion_smoothness"] = -1;
  EXPECT_THROW(aggregate(q, {{"a", 1}}, neg), ConfigError);
  auto missing = q;
  missing.erase("dynamic_degree");
  EXPECT_THROW(aggregate(missing, {{"a", 1}}), ConfigError);
}

TEST(Report, JsonRoundTrip) {
  auto r = aggregate(quality_vector({0.1, 0.25, 0.3, 0.45, 0.5, 0.625, 0.7}), {{"overall_consistency", 0.33}});
  auto back = metric_report_from_json(nlohmann::json::parse(to_json(r).dump()));
  EXPECT_EQ(back, r);
}

TEST(OverallConsistency, AlignedOrthogonalOpposed) {
  ToyReward<float> reward(3, 8);
  auto clip = synth::colour_noise_clip(1, 16, 4);
  Graph<float> g;
  auto p = g.value(reward.project(g, g.constant(clip.tensor()))).reshaped({8});
  EXPECT_NEAR(overall_consistency(clip, p, reward), 1.0, 1e-6);
  Tensor<float> neg = p;
  for (auto& v : neg.data()) v = -v;
  EXPECT_NEAR(overall_consistency(clip, neg, reward), 0.0, 1e-6);
  Tensor<float> orth({8});
  orth[0] = p[1];
  orth[1] = -p[0];
  EXPECT_NEAR(overall_consistency(clip, orth, reward), 0.5, 1e-6);
}
