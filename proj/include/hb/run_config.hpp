#pragma once

// One JSON document per run. Every section and key is optional; missing
// values take the toy defaults below, unknown keys are rejected. Stage seeds
// are derived from the single global seed.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hb/checkpoint.hpp"
#include "hb/data_pipeline.hpp"
#include "hb/distill.hpp"
#include "hb/eval.hpp"
#include "hb/pruning.hpp"
#include "hb/reward.hpp"

namespace hb {

struct PathsConfig {
  std::string input_manifest;  // raw records for `curate`
  std::string out_dir = "run";
};

struct CodecConfig {
  std::uint64_t seed = 0;
  std::size_t patch = 2;
};

struct ScheduleConfig {
  int steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
};

struct DataConfig {
  std::size_t frames = 8;
  std::size_t downsample = 2;  // average-pool factor applied to stored clips
  std::vector<int> strides{1, 2, 3};
};

struct TeacherStage {
  UNetConfig unet;
  int steps = 1000;
  double lr = 3e-3;
  double final_lr_fraction = 0.05;
  double uncond_prob = 0.1;
};

struct Distill1Stage {
  DistillConfig distill;
  PruneOptions prune;
};

struct Distill2Stage {
  RewardConfig reward;
  std::uint64_t reward_model_seed = 17;
  std::size_t max_prompts = 4;
};

struct SampleConfig {
  std::string model = "stage2";  // teacher | stage1 | stage2
  int steps = 4;
  double guidance = 1.0;
  double fps = 8.0;
  std::vector<std::string> prompts{"a red fox running through snow", "waves rolling onto a beach"};
};

struct EvalClip {
  std::string path;
  std::string prompt;
};

struct EvalConfig {
  EvalWeights weights;
  std::vector<EvalClip> clips;  // empty: evaluate the sampled clips
};

struct BenchConfig {
  std::string student = "stage2";
  int teacher_steps = 50;
  int student_steps = 4;
  int repeats = 3;
  double teacher_guidance = 1.0;
};

struct RunConfig {
  std::uint64_t seed = 0;
  PathsConfig paths;
  CodecConfig codec;
  ScheduleConfig schedule;
  DataConfig data;
  CurationOptions curation;
  TeacherStage teacher;
  Distill1Stage distill1;
  Distill2Stage distill2;
  SampleConfig sample;
  EvalConfig eval;
  BenchConfig bench;

  RunConfig() {
    curation.thresholds = {0.3, 0.5, 0.25};
    auto& u = teacher.unet;
    u.latent_channels = 12;
    u.base_channels = 32;
    u.channel_mults = {1, 2};
    u.blocks_per_level = {2, 2};
    u.up_blocks_per_level = {2, 2};
    u.middle_blocks = 2;
    u.norm_groups = 4;
    distill1.distill.adam.lr = 1e-3;
    distill2.reward.adam.lr = 1e-5;
  }

  std::filesystem::path out() const { return paths.out_dir; }

  void validate() const {
    if (codec.patch == 0) throw ConfigError("codec.patch must be positive");
    if (static_cast<std::size_t>(teacher.unet.latent_channels) != 3 * codec.patch * codec.patch)
      throw ConfigError("teacher.unet.latent_channels must equal 3 * codec.patch^2 (" +
                        std::to_string(3 * codec.patch * codec.patch) + ")");
    teacher.unet.validate();
    (void)NoiseSchedule(schedule.steps, schedule.beta_start, schedule.beta_end);
    if (data.frames < 2) throw ConfigError("data.frames must be >= 2");
    if (data.downsample == 0) throw ConfigError("data.downsample must be positive");
    if (data.strides.empty()) throw ConfigError("data.strides must not be empty");
    for (int s : data.strides)
      if (s < 1) throw ConfigError("data.strides entries must be >= 1");
    if (teacher.steps < 0 || teacher.lr <= 0) throw ConfigError("teacher: steps >= 0 and lr > 0 required");
    if (!(teacher.uncond_prob >= 0 && teacher.uncond_prob <= 1)) throw ConfigError("teacher.uncond_prob must lie in [0, 1]");
    if (!(teacher.final_lr_fraction > 0 && teacher.final_lr_fraction <= 1))
      throw ConfigError("teacher.final_lr_fraction must lie in (0, 1]");
    distill1.distill.validate();
    if (schedule.steps % distill1.distill.grid_size != 0)
      throw ConfigError("distill1.grid_size must divide schedule.steps");
    distill2.reward.validate();
    if (distill2.max_prompts == 0) throw ConfigError("distill2.max_prompts must be >= 1");
    if (sample.steps < 1 || sample.prompts.empty()) throw ConfigError("sample: steps >= 1 and at least one prompt");
    if (sample.fps <= 0) throw ConfigError("sample.fps must be positive");
    for (const auto* m : {&sample.model, &bench.student})
      if (*m != "teacher" && *m != "stage1" && *m != "stage2")
        throw ConfigError("model must be one of teacher, stage1, stage2 (got '" + *m + "')");
    if (bench.repeats < 3) throw ConfigError("bench.repeats must be >= 3");
    if (bench.teacher_steps < 1 || bench.student_steps < 1) throw ConfigError("bench steps must be >= 1");
    if (curation.workers == 0) throw ConfigError("curation.workers must be >= 1");
    if (paths.out_dir.empty()) throw ConfigError("paths.out_dir must not be empty");
  }
};

namespace detail {

// Reads the keys of one JSON object, remembering which were consumed.
class Fields {
 public:
  Fields(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
  }

  template <class V>
  Fields& get(const std::string& key, V& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return *this;
    seen_.insert(key);
    if constexpr (std::is_same_v<V, bool>) {
      if (!it->is_boolean()) throw ConfigError(where_ + "." + key + ": expected true or false");
    } else if constexpr (std::is_unsigned_v<V>) {
      const bool ok = it->is_number_unsigned() || (it->is_number_integer() && it->template get<std::int64_t>() >= 0);
      if (!ok) throw ConfigError(where_ + "." + key + ": expected a non-negative integer");
    } else if constexpr (std::is_integral_v<V>) {
      if (!it->is_number_integer()) throw ConfigError(where_ + "." + key + ": expected an integer");
    }
    try {
      out = it->template get<V>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
    return *this;
  }

  const nlohmann::json* sub(const std::string& key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline void read_adam(Fields& f, AdamConfig& a) {
  f.get("lr", a.lr).get("beta1", a.beta1).get("beta2", a.beta2).get("adam_eps", a.eps).get("grad_clip", a.grad_clip);
}

inline nlohmann::json adam_json(const AdamConfig& a) {
  return {{"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"adam_eps", a.eps}, {"grad_clip", a.grad_clip}};
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
  const auto& d = c.distill1.distill;
  const auto& r = c.distill2.reward;
  nlohmann::json d1 = detail::adam_json(d.adam);
  d1.update({{"skip", d.skip}, {"grid_size", d.grid_size}, {"w_min", d.w_min}, {"w_max", d.w_max},
             {"ema_decay", d.ema_decay}, {"loss", d.loss == DistillLoss::kHuber ? "huber" : "squared"},
             {"huber_delta", d.huber_delta}, {"sigma_data", d.sigma_data},
             {"timestep_scaling", d.timestep_scaling}, {"batch_size", d.batch_size}, {"steps", d.steps},
             {"prune_up_path", c.distill1.prune.prune_up_path}});
  nlohmann::json d2 = detail::adam_json(r.adam);
  d2.update({{"lambda_image", r.lambda_image}, {"lambda_video", r.lambda_video},
             {"image_frames", r.image_frames}, {"rollout_steps", r.rollout_steps},
             {"full_rollout", r.full_rollout}, {"guidance", r.guidance}, {"steps", r.steps},
             {"reward_model_seed", c.distill2.reward_model_seed}, {"max_prompts", c.distill2.max_prompts}});
  nlohmann::json clips = nlohmann::json::array();
  for (const auto& e : c.eval.clips) clips.push_back({{"path", e.path}, {"prompt", e.prompt}});
  const auto& th = c.curation.thresholds;
  const auto& mo = c.curation.motion;
  return {
      {"seed", c.seed},
      {"paths", {{"input_manifest", c.paths.input_manifest}, {"out_dir", c.paths.out_dir}}},
      {"codec", {{"seed", c.codec.seed}, {"patch", c.codec.patch}}},
      {"schedule", {{"steps", c.schedule.steps}, {"beta_start", c.schedule.beta_start}, {"beta_end", c.schedule.beta_end}}},
      {"data", {{"frames", c.data.frames}, {"downsample", c.data.downsample}, {"strides", c.data.strides}}},
      {"curation",
       {{"aesthetic_min", th.aesthetic_min}, {"compression_min", th.compression_min},
        {"magnitude_min", th.magnitude_min}, {"block", mo.block}, {"radius", mo.radius},
        {"score_threshold", mo.score_threshold}, {"magnitude_threshold", mo.magnitude_threshold},
        {"workers", c.curation.workers}}},
      {"teacher",
       {{"unet", to_json(c.teacher.unet)}, {"steps", c.teacher.steps}, {"lr", c.teacher.lr},
        {"final_lr_fraction", c.teacher.final_lr_fraction}, {"uncond_prob", c.teacher.uncond_prob}}},
      {"distill1", d1},
      {"distill2", d2},
      {"sample",
       {{"model", c.sample.model}, {"steps", c.sample.steps}, {"guidance", c.sample.guidance},
        {"fps", c.sample.fps}, {"prompts", c.sample.prompts}}},
      {"eval",
       {{"quality_weights", c.eval.weights.quality}, {"quality_group", c.eval.weights.quality_group},
        {"semantic_group", c.eval.weights.semantic_group}, {"clips", clips}}},
      {"bench",
       {{"student", c.bench.student}, {"teacher_steps", c.bench.teacher_steps},
        {"student_steps", c.bench.student_steps}, {"repeats", c.bench.repeats},
        {"teacher_guidance", c.bench.teacher_guidance}}}};
}

/// Parses and validates a run configuration.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  using detail::Fields;
  RunConfig c;
  Fields top(j, "config");
  top.get("seed", c.seed);
  if (auto* s = top.sub("paths")) {
    Fields f(*s, "paths");
    f.get("input_manifest", c.paths.input_manifest).get("out_dir", c.paths.out_dir);
    f.finish();
  }
  if (auto* s = top.sub("codec")) {
    Fields f(*s, "codec");
    f.get("seed", c.codec.seed).get("patch", c.codec.patch);
    f.finish();
  }
  if (auto* s = top.sub("schedule")) {
    Fields f(*s, "schedule");
    f.get("steps", c.schedule.steps).get("beta_start", c.schedule.beta_start).get("beta_end", c.schedule.beta_end);
    f.finish();
  }
  if (auto* s = top.sub("data")) {
    Fields f(*s, "data");
    f.get("frames", c.data.frames).get("downsample", c.data.downsample).get("strides", c.data.strides);
    f.finish();
  }
  if (auto* s = top.sub("curation")) {
    Fields f(*s, "curation");
    auto& th = c.curation.thresholds;
    auto& mo = c.curation.motion;
    f.get("aesthetic_min", th.aesthetic_min).get("compression_min", th.compression_min)
        .get("magnitude_min", th.magnitude_min).get("block", mo.block).get("radius", mo.radius)
        .get("score_threshold", mo.score_threshold).get("magnitude_threshold", mo.magnitude_threshold)
        .get("workers", c.curation.workers);
    f.finish();
  }
  if (auto* s = top.sub("teacher")) {
    Fields f(*s, "teacher");
    if (auto* u = f.sub("unet")) {
      // Start from the toy defaults so a partial override keeps the rest.
      nlohmann::json merged = to_json(c.teacher.unet);
      if (!u->is_object()) throw ConfigError("teacher.unet must be an object");
      for (const auto& [k, v] : u->items()) {
        if (!merged.contains(k)) throw ConfigError("teacher.unet: unknown key '" + k + "'");
        merged[k] = v;
      }
      if (u->contains("blocks_per_level") && !u->contains("up_blocks_per_level"))
        merged["up_blocks_per_level"] = (*u)["blocks_per_level"];
      c.teacher.unet = unet_config_from_json(merged);
    }
    f.get("steps", c.teacher.steps).get("lr", c.teacher.lr).get("final_lr_fraction", c.teacher.final_lr_fraction)
        .get("uncond_prob", c.teacher.uncond_prob);
    f.finish();
  }
  if (auto* s = top.sub("distill1")) {
    Fields f(*s, "distill1");
    auto& d = c.distill1.distill;
    std::string loss = d.loss == DistillLoss::kHuber ? "huber" : "squared";
    detail::read_adam(f, d.adam);
    f.get("skip", d.skip).get("grid_size", d.grid_size).get("w_min", d.w_min).get("w_max", d.w_max)
        .get("ema_decay", d.ema_decay).get("loss", loss).get("huber_delta", d.huber_delta)
        .get("sigma_data", d.sigma_data).get("timestep_scaling", d.timestep_scaling)
        .get("batch_size", d.batch_size).get("steps", d.steps)
        .get("prune_up_path", c.distill1.prune.prune_up_path);
    if (loss == "huber") d.loss = DistillLoss::kHuber;
    else if (loss == "squared") d.loss = DistillLoss::kSquared;
    else throw ConfigError("distill1.loss must be 'huber' or 'squared'");
    f.finish();
  }
  if (auto* s = top.sub("distill2")) {
    Fields f(*s, "distill2");
    auto& r = c.distill2.reward;
    detail::read_adam(f, r.adam);
    f.get("lambda_image", r.lambda_image).get("lambda_video", r.lambda_video)
        .get("image_frames", r.image_frames).get("rollout_steps", r.rollout_steps)
        .get("full_rollout", r.full_rollout).get("guidance", r.guidance).get("steps", r.steps)
        .get("reward_model_seed", c.distill2.reward_model_seed).get("max_prompts", c.distill2.max_prompts);
    f.finish();
  }
  if (auto* s = top.sub("sample")) {
    Fields f(*s, "sample");
    f.get("model", c.sample.model).get("steps", c.sample.steps).get("guidance", c.sample.guidance)
        .get("fps", c.sample.fps).get("prompts", c.sample.prompts);
    f.finish();
  }
  if (auto* s = top.sub("eval")) {
    Fields f(*s, "eval");
    f.get("quality_weights", c.eval.weights.quality).get("quality_group", c.eval.weights.quality_group)
        .get("semantic_group", c.eval.weights.semantic_group);
    if (auto* clips = f.sub("clips")) {
      if (!clips->is_array()) throw ConfigError("eval.clips must be an array");
      for (const auto& e : *clips) {
        Fields ef(e, "eval.clips[]");
        EvalClip ec;
        ef.get("path", ec.path).get("prompt", ec.prompt);
        ef.finish();
        if (ec.path.empty()) throw ConfigError("eval.clips[]: path is required");
        c.eval.clips.push_back(ec);
      }
    }
    f.finish();
  }
  if (auto* s = top.sub("bench")) {
    Fields f(*s, "bench");
    f.get("student", c.bench.student).get("teacher_steps", c.bench.teacher_steps)
        .get("student_steps", c.bench.student_steps).get("repeats", c.bench.repeats)
        .get("teacher_guidance", c.bench.teacher_guidance);
    f.finish();
  }
  top.finish();
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingArtifact("config not found: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

// Stage seeds. Fixed tags keep the streams independent of each other.
enum class SeedTag : std::uint64_t { kTeacher = 1, kTeacherData, kDistill, kDistillData, kReward, kSample, kInit };

inline std::uint64_t stage_seed(const RunConfig& c, SeedTag tag) {
  return mix_seed(c.seed, static_cast<std::uint64_t>(tag));
}

}  // namespace hb
