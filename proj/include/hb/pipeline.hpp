#pragma once

// Toy end-to-end pipeline: curate -> teacher -> distill1 -> distill2 ->
// sample -> eval, plus the latency benchmark. Every command reads and
// writes fixed file names under the run's output directory.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "hb/checkpoint.hpp"
#include "hb/data_pipeline.hpp"
#include "hb/distill.hpp"
#include "hb/eval.hpp"
#include "hb/latent_codec.hpp"
#include "hb/pruning.hpp"
#include "hb/reward.hpp"
#include "hb/run_config.hpp"
#include "hb/sampler.hpp"
#include "hb/text_encoder.hpp"

namespace hb {

namespace artifacts {
inline const char* const kCurated = "curated.jsonl";
inline const char* const kCurationSummary = "curation_summary.json";
inline const char* const kTeacher = "teacher.ckpt";
inline const char* const kTeacherLog = "teacher_log.jsonl";
inline const char* const kPruneMap = "prune_map.json";
inline const char* const kStage1 = "student_stage1.ckpt";
inline const char* const kStage1Log = "distill1_log.jsonl";
inline const char* const kStage2 = "student_stage2.ckpt";
inline const char* const kStage2Log = "distill2_log.jsonl";
inline const char* const kSamples = "samples";
inline const char* const kSampleIndex = "index.json";
inline const char* const kEvalReport = "eval_report.json";
inline const char* const kBench = "bench.json";
}  // namespace artifacts

// ------------------------------------------------------------ clip prep

/// Average-pools every frame by `k` in both directions.
inline VideoTensor<float> downsample_clip(const VideoTensor<float>& v, std::size_t k) {
  if (k == 1) return v;
  const std::size_t N = v.frames(), H = v.height(), W = v.width();
  if (H % k || W % k)
    throw ShapeError("cannot downsample " + std::to_string(H) + "x" + std::to_string(W) + " by " + std::to_string(k));
  const std::size_t h = H / k, w = W / k;
  Tensor<float> out({N, 3, h, w});
  const double inv = 1.0 / static_cast<double>(k * k);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          double s = 0;
          for (std::size_t dy = 0; dy < k; ++dy)
            for (std::size_t dx = 0; dx < k; ++dx) s += v.at(n, c, y * k + dy, x * k + dx);
          out[((n * 3 + c) * h + y) * w + x] = static_cast<float>(s * inv);
        }
  return VideoTensor<float>(std::move(out));
}

/// `count` frames starting at `start`, `stride` apart.
inline VideoTensor<float> select_frames(const VideoTensor<float>& v, std::size_t start, std::size_t stride,
                                        std::size_t count) {
  if (count == 0 || start + (count - 1) * stride >= v.frames())
    throw ArgumentError("frame window exceeds clip of " + std::to_string(v.frames()) + " frames");
  const std::size_t per = 3 * v.height() * v.width();
  Tensor<float> out({count, 3, v.height(), v.width()});
  const auto& src = v.tensor().data();
  for (std::size_t i = 0; i < count; ++i)
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>((start + i * stride) * per), per,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * per));
  return VideoTensor<float>(std::move(out));
}

/// Strides from `allowed` whose window of `frames` fits in `available` frames.
inline std::vector<int> feasible_strides(std::size_t available, std::size_t frames, const std::vector<int>& allowed) {
  std::vector<int> out;
  for (int s : allowed)
    if (s >= 1 && (frames - 1) * static_cast<std::size_t>(s) < available) out.push_back(s);
  return out;
}

struct TrainClip {
  std::string id;
  std::string caption;
  double fps = 8.0;
  VideoTensor<float> pixels;  // already downsampled
};

inline std::string caption_of(const VideoRecord& r) { return r.recaption ? *r.recaption : r.prompt; }

/// Loads the kept records (a record without a keep flag counts as kept).
inline std::vector<TrainClip> load_training_clips(const std::vector<VideoRecord>& records,
                                                  const std::filesystem::path& base_dir, const DataConfig& data) {
  std::vector<TrainClip> clips;
  for (const auto& r : records) {
    if (r.keep && !*r.keep) continue;
    std::filesystem::path p(r.path);
    if (!p.is_absolute()) p = base_dir / p;
    if (!std::filesystem::exists(p)) throw MissingArtifact("training clip " + r.id + " not found: " + p.string());
    auto v = downsample_clip(read_video(p), data.downsample);
    if (feasible_strides(v.frames(), data.frames, data.strides).empty())
      throw ValidationError("clip " + r.id + " has " + std::to_string(v.frames()) + " frames, fewer than " +
                            std::to_string(data.frames) + " at every allowed stride");
    clips.push_back({r.id, caption_of(r), r.fps, std::move(v)});
  }
  if (clips.empty()) throw ValidationError("no kept records to train on");
  return clips;
}

/// Random clip, random feasible stride, random start. The conditioning fps
/// is the clip's fps divided by the stride.
inline ItemSource<float> training_source(std::shared_ptr<const std::vector<TrainClip>> clips,
                                         const LatentCodec<float>& codec, const UNetConfig& unet,
                                         const DataConfig& data) {
  return [clips, codec, text_dim = static_cast<std::size_t>(unet.text_dim), data](Rng& rng) {
    const auto& c = (*clips)[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(clips->size()) - 1))];
    const auto strides = feasible_strides(c.pixels.frames(), data.frames, data.strides);
    const int stride = strides[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(strides.size()) - 1))];
    const std::size_t span = (data.frames - 1) * static_cast<std::size_t>(stride);
    const auto start = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(c.pixels.frames() - 1 - span)));
    ConditioningBundle<float> cond;
    cond.text_embedding = embed_text<float>(c.caption, text_dim);
    cond.fps = c.fps / stride;
    return TrainItem<float>{codec.encode(select_frames(c.pixels, start, static_cast<std::size_t>(stride), data.frames)),
                            std::move(cond)};
  };
}

inline LatentShape latent_shape_of(const RunConfig& c, std::size_t height, std::size_t width) {
  return {c.data.frames, static_cast<std::size_t>(c.teacher.unet.latent_channels), height / c.codec.patch,
          width / c.codec.patch};
}

// ------------------------------------------------------------ helpers

namespace detail {

inline double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw IoError("cannot write " + p.string());
  os << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const std::filesystem::path& p, const std::string& hint) {
  std::ifstream is(p);
  if (!is) throw MissingArtifact(p.string() + " not found; " + hint);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(p.string() + ": " + e.what());
  }
}

inline DenoiserModel<float> require_checkpoint(const std::filesystem::path& p, const std::string& hint) {
  if (!std::filesystem::exists(p)) throw MissingArtifact(p.string() + " not found; " + hint);
  return load_checkpoint(p);
}

inline std::vector<VideoRecord> require_manifest(const std::filesystem::path& p, const std::string& hint) {
  if (!std::filesystem::exists(p)) throw MissingArtifact(p.string() + " not found; " + hint);
  return read_manifest(p);
}

class JsonlLog {
 public:
  explicit JsonlLog(const std::filesystem::path& p) : os_(p, std::ios::binary) {
    if (!os_) throw IoError("cannot write " + p.string());
  }
  void write(const nlohmann::json& j) { os_ << j.dump() << '\n'; }

 private:
  std::ofstream os_;
};

/// Same dimensions as the stored clips after downsampling; taken from the
/// first training clip.
inline std::pair<std::size_t, std::size_t> train_resolution(const std::vector<TrainClip>& clips) {
  return {clips.front().pixels.height(), clips.front().pixels.width()};
}

}  // namespace detail

inline NoiseSchedule schedule_of(const RunConfig& c) {
  return NoiseSchedule(c.schedule.steps, c.schedule.beta_start, c.schedule.beta_end);
}

inline LatentCodec<float> codec_of(const RunConfig& c) { return LatentCodec<float>(c.codec.seed, c.codec.patch); }

inline std::vector<TrainClip> curated_training_clips(const RunConfig& c) {
  const auto dir = c.out();
  auto records = detail::require_manifest(dir / artifacts::kCurated, "run `curate` first");
  return load_training_clips(records, dir, c.data);
}

// ------------------------------------------------------------ curate

/// Scores, filters and recaptions the input manifest. The output manifest
/// lists every readable record with its reports and keep flag; clip paths
/// are rewritten relative to the output directory.
inline CurationResult run_curate(const RunConfig& c, RecaptionClient& client) {
  if (c.paths.input_manifest.empty()) throw ConfigError("paths.input_manifest is required for curate");
  const std::filesystem::path in(c.paths.input_manifest);
  auto input = detail::require_manifest(in, "set paths.input_manifest to a JSON-lines manifest");
  const auto base = in.has_parent_path() ? in.parent_path() : std::filesystem::path(".");
  const auto out = c.out();
  std::filesystem::create_directories(out);
  auto res = curate(input, base, client, c.curation);
  const auto out_abs = std::filesystem::absolute(out);
  for (auto& r : res.records) {
    std::filesystem::path p(r.path);
    if (!p.is_absolute()) p = base / p;
    r.path = std::filesystem::relative(std::filesystem::absolute(p), out_abs).generic_string();
  }
  write_manifest(out / artifacts::kCurated, res.records);
  nlohmann::json dropped = nlohmann::json::object();
  for (const auto& [k, v] : res.summary.dropped) dropped[k] = v;
  detail::write_json(out / artifacts::kCurationSummary,
                     {{"total", res.summary.total}, {"kept", res.summary.kept}, {"dropped", dropped}});
  return res;
}

// ------------------------------------------------------------ teacher

inline DenoiserModel<float> run_teacher(const RunConfig& c) {
  const auto out = c.out();
  auto clips = std::make_shared<const std::vector<TrainClip>>(curated_training_clips(c));
  const auto schedule = schedule_of(c);
  DenoiserModel<float> teacher{c.teacher.unet, init_params<float>(c.teacher.unet, stage_seed(c, SeedTag::kInit))};
  const auto [h, w] = detail::train_resolution(*clips);
  if (h % c.codec.patch || w % c.codec.patch) throw ConfigError("training resolution not divisible by codec.patch");

  TeacherTrainConfig tc;
  tc.steps = c.teacher.steps;
  tc.adam.lr = c.teacher.lr;
  tc.final_lr_fraction = c.teacher.final_lr_fraction;
  tc.uncond_prob = c.teacher.uncond_prob;
  tc.seed = stage_seed(c, SeedTag::kTeacher);

  auto source = training_source(clips, codec_of(c), c.teacher.unet, c.data);
  detail::JsonlLog log(out / artifacts::kTeacherLog);
  const auto t0 = std::chrono::steady_clock::now();
  teacher.params = teacher_train(teacher, source, schedule, tc, [&](const TeacherStepRecord& r) {
    log.write({{"step", r.step}, {"loss", r.loss}, {"t", r.t}, {"null_cond", r.null_cond},
               {"wall_ms", detail::elapsed_ms(t0)}});
  });
  save_checkpoint(out / artifacts::kTeacher, teacher);
  return teacher;
}

// ------------------------------------------------------------ stage 1

inline DenoiserModel<float> run_distill1(const RunConfig& c) {
  const auto out = c.out();
  auto teacher = detail::require_checkpoint(out / artifacts::kTeacher, "run `teacher` first");
  auto clips = std::make_shared<const std::vector<TrainClip>>(curated_training_clips(c));
  const auto schedule = schedule_of(c);

  auto pruned = prune_config(teacher.config, c.distill1.prune);
  detail::write_json(out / artifacts::kPruneMap, to_json(pruned.map));
  DenoiserModel<float> student{pruned.student, transfer_weights(teacher.params, pruned.map)};

  DistillConfig dc = c.distill1.distill;
  dc.seed = stage_seed(c, SeedTag::kDistill);
  ConsistencyDistiller<float> distiller(teacher, student, schedule, dc);
  auto source = training_source(clips, codec_of(c), teacher.config, c.data);
  Rng data_rng(stage_seed(c, SeedTag::kDistillData));

  detail::JsonlLog log(out / artifacts::kStage1Log);
  const auto t0 = std::chrono::steady_clock::now();
  for (int step = 0; step < dc.steps; ++step) {
    std::vector<TrainItem<float>> batch;
    for (int b = 0; b < dc.batch_size; ++b) batch.push_back(source(data_rng));
    auto r = distiller.step(batch);
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& [hi, lo] : r.t_pairs) pairs.push_back({hi, lo});
    log.write({{"step", step}, {"loss", r.loss}, {"w", r.w}, {"t_pair", pairs}, {"wall_ms", detail::elapsed_ms(t0)}});
  }
  save_checkpoint(out / artifacts::kStage1, distiller.student());
  return distiller.student();
}

// ------------------------------------------------------------ stage 2

using PromptList = std::vector<std::pair<std::string, ConditioningBundle<float>>>;

/// Distinct captions of the training clips in manifest order, at most `limit`.
inline PromptList reward_prompts(const std::vector<TrainClip>& clips, const UNetConfig& unet, std::size_t limit) {
  PromptList prompts;
  for (const auto& c : clips) {
    if (prompts.size() >= limit) break;
    if (std::any_of(prompts.begin(), prompts.end(), [&](const auto& p) { return p.first == c.caption; })) continue;
    ConditioningBundle<float> cond;
    cond.text_embedding = embed_text<float>(c.caption, static_cast<std::size_t>(unet.text_dim));
    cond.fps = c.fps;
    prompts.emplace_back(c.caption, std::move(cond));
  }
  return prompts;
}

inline std::shared_ptr<const RewardModel<float>> toy_reward_of(const RunConfig& c) {
  return std::make_shared<ToyReward<float>>(c.distill2.reward_model_seed,
                                            static_cast<std::size_t>(c.teacher.unet.text_dim));
}

inline DenoiserModel<float> run_distill2(const RunConfig& c) {
  const auto out = c.out();
  auto student = detail::require_checkpoint(out / artifacts::kStage1, "run `distill1` first");
  const auto clips = curated_training_clips(c);
  const auto [h, w] = detail::train_resolution(clips);
  RewardConfig rc = c.distill2.reward;
  rc.seed = stage_seed(c, SeedTag::kReward);
  rc.shape = latent_shape_of(c, h, w);
  RewardTuner<float> tuner(student, toy_reward_of(c), codec_of(c), schedule_of(c), rc);
  const auto prompts = reward_prompts(clips, student.config, c.distill2.max_prompts);

  detail::JsonlLog log(out / artifacts::kStage2Log);
  const auto t0 = std::chrono::steady_clock::now();
  for (int step = 0; step < rc.steps; ++step) {
    auto r = tuner.step(prompts);
    log.write({{"step", step}, {"loss", -r.mean_reward}, {"reward", r.mean_reward}, {"reward_image", r.mean_image},
               {"reward_video", r.mean_video}, {"wall_ms", detail::elapsed_ms(t0)}});
  }
  save_checkpoint(out / artifacts::kStage2, tuner.student());
  return tuner.student();
}

// ------------------------------------------------------------ sample

inline std::filesystem::path model_path(const RunConfig& c, const std::string& which) {
  if (which == "teacher") return c.out() / artifacts::kTeacher;
  if (which == "stage1") return c.out() / artifacts::kStage1;
  return c.out() / artifacts::kStage2;
}

inline std::string producer_hint(const std::string& which) {
  if (which == "teacher") return "run `teacher` first";
  if (which == "stage1") return "run `distill1` first";
  return "run `distill2` first";
}

inline ConditioningBundle<float> prompt_condition(const std::string& prompt, const UNetConfig& unet, double fps) {
  ConditioningBundle<float> cond;
  cond.text_embedding = embed_text<float>(prompt, static_cast<std::size_t>(unet.text_dim));
  cond.fps = fps;
  return cond;
}

/// Decoded [0, 1] clip of prompt i. Noise seed depends only on the run seed
/// and the prompt index.
inline VideoTensor<float> sample_clip(const RunConfig& c, const DenoiserModel<float>& model, std::size_t index,
                                      const LatentShape& shape) {
  const auto cond = prompt_condition(c.sample.prompts.at(index), model.config, c.sample.fps);
  auto z = sample(model, cond, schedule_of(c), c.sample.steps, c.sample.guidance,
                  mix_seed(stage_seed(c, SeedTag::kSample), index), shape);
  auto v = codec_of(c).decode(z);
  v.clamp();
  return v;
}

/// Spatial size of the training clips, read from the curated manifest.
inline LatentShape run_latent_shape(const RunConfig& c) {
  const auto clips = curated_training_clips(c);
  const auto [h, w] = detail::train_resolution(clips);
  return latent_shape_of(c, h, w);
}

inline std::vector<std::filesystem::path> run_sample(const RunConfig& c) {
  const auto model = detail::require_checkpoint(model_path(c, c.sample.model), producer_hint(c.sample.model));
  const auto shape = run_latent_shape(c);
  const auto dir = c.out() / artifacts::kSamples;
  std::filesystem::create_directories(dir);
  nlohmann::json index = nlohmann::json::array();
  std::vector<std::filesystem::path> files;
  for (std::size_t i = 0; i < c.sample.prompts.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "sample_%03zu.hbvid", i);
    write_video(dir / name, sample_clip(c, model, i, shape));
    index.push_back({{"file", name}, {"prompt", c.sample.prompts[i]}, {"model", c.sample.model},
                     {"steps", c.sample.steps}});
    files.push_back(dir / name);
  }
  detail::write_json(dir / artifacts::kSampleIndex, index);
  return files;
}

// ------------------------------------------------------------ eval

struct EvalResult {
  std::vector<std::pair<EvalClip, MetricReport>> clips;
  MetricReport summary;  // aggregate of the per-clip mean sub-scores
};

inline EvalResult evaluate_clips(const std::vector<EvalClip>& clips, const RunConfig& c) {
  if (clips.empty()) throw ValidationError("nothing to evaluate");
  const auto quality = builtin_quality_providers();
  const std::map<std::string, SemanticProvider> semantic{
      {"overall_consistency", overall_consistency_provider(toy_reward_of(c))}};
  EvalResult res;
  std::map<std::string, double> q_mean, s_mean;
  for (const auto& e : clips) {
    if (!std::filesystem::exists(e.path)) throw MissingArtifact("clip not found: " + e.path);
    const auto v = read_video(e.path);
    const auto text = embed_text<float>(e.prompt, static_cast<std::size_t>(c.teacher.unet.text_dim));
    auto report = evaluate_clip(v, text, quality, semantic, c.eval.weights);
    for (const auto& [k, x] : report.quality_scores) q_mean[k] += x / static_cast<double>(clips.size());
    for (const auto& [k, x] : report.semantic_scores) s_mean[k] += x / static_cast<double>(clips.size());
    res.clips.emplace_back(e, std::move(report));
  }
  res.summary = aggregate(q_mean, s_mean, c.eval.weights);
  return res;
}

inline EvalResult run_eval(const RunConfig& c) {
  std::vector<EvalClip> clips = c.eval.clips;
  if (clips.empty()) {
    const auto dir = c.out() / artifacts::kSamples;
    const auto index = detail::read_json(dir / artifacts::kSampleIndex, "run `sample` first or set eval.clips");
    for (const auto& e : index)
      clips.push_back({(dir / e.at("file").get<std::string>()).string(), e.at("prompt").get<std::string>()});
  }
  auto res = evaluate_clips(clips, c);
  nlohmann::json videos = nlohmann::json::array();
  for (const auto& [clip, report] : res.clips)
    videos.push_back({{"path", clip.path}, {"prompt", clip.prompt}, {"report", to_json(report)}});
  std::filesystem::create_directories(c.out());
  detail::write_json(c.out() / artifacts::kEvalReport, {{"videos", videos}, {"summary", to_json(res.summary)}});
  return res;
}

// ------------------------------------------------------------ bench

struct BenchReport {
  double teacher_latency = 0;  // seconds, median
  double student_latency = 0;
  double speedup = 0;  // teacher / student
  int teacher_steps = 0;
  int student_steps = 0;
  double steps_ratio = 0;     // teacher_steps / student_steps
  double per_step_ratio = 0;  // per-step teacher time / per-step student time
  int repeats = 0;
};

inline nlohmann::json to_json(const BenchReport& r) {
  return {{"teacher_latency", r.teacher_latency}, {"student_latency", r.student_latency}, {"speedup", r.speedup},
          {"teacher_steps", r.teacher_steps},     {"student_steps", r.student_steps},     {"steps_ratio", r.steps_ratio},
          {"per_step_ratio", r.per_step_ratio},   {"repeats", r.repeats}};
}

/// Median wall time of one full sample, after one untimed warm-up run.
inline double median_latency(const DenoiserModel<float>& model, const ConditioningBundle<float>& cond,
                             const NoiseSchedule& schedule, int steps, double w, const LatentShape& shape,
                             int repeats) {
  (void)sample(model, cond, schedule, steps, w, 0, shape);
  std::vector<double> times;
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    auto z = sample(model, cond, schedule, steps, w, static_cast<std::uint64_t>(i + 1), shape);
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    if (!std::isfinite(z.tensor()[0])) spdlog::warn("non-finite sample during benchmark");
  }
  std::sort(times.begin(), times.end());
  const auto n = times.size();
  return n % 2 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
}

inline BenchReport bench_latency(const DenoiserModel<float>& teacher, const DenoiserModel<float>& student,
                                 const ConditioningBundle<float>& cond, const NoiseSchedule& schedule,
                                 const LatentShape& shape, int teacher_steps = 50, int student_steps = 4,
                                 int repeats = 3, double teacher_guidance = 1.0, double student_guidance = 1.0) {
  if (repeats < 3) throw ArgumentError("bench_latency needs at least 3 repeats");
  BenchReport r;
  r.teacher_steps = teacher_steps;
  r.student_steps = student_steps;
  r.repeats = repeats;
  r.teacher_latency = median_latency(teacher, cond, schedule, teacher_steps, teacher_guidance, shape, repeats);
  r.student_latency = median_latency(student, cond, schedule, student_steps, student_guidance, shape, repeats);
  r.speedup = r.teacher_latency / r.student_latency;
  r.steps_ratio = static_cast<double>(teacher_steps) / student_steps;
  r.per_step_ratio = (r.teacher_latency / teacher_steps) / (r.student_latency / student_steps);
  return r;
}

struct BenchResult {
  BenchReport comparison;
  BenchReport control;  // teacher against itself at the teacher's step count
};

inline BenchResult run_bench(const RunConfig& c) {
  const auto teacher = detail::require_checkpoint(model_path(c, "teacher"), producer_hint("teacher"));
  const auto student = detail::require_checkpoint(model_path(c, c.bench.student), producer_hint(c.bench.student));
  const auto shape = run_latent_shape(c);
  const auto cond = prompt_condition(c.sample.prompts.front(), teacher.config, c.sample.fps);
  const auto schedule = schedule_of(c);
  const auto& b = c.bench;
  BenchResult res;
  res.comparison = bench_latency(teacher, student, cond, schedule, shape, b.teacher_steps, b.student_steps, b.repeats,
                                 b.teacher_guidance);
  res.control = bench_latency(teacher, teacher, cond, schedule, shape, b.teacher_steps, b.teacher_steps, b.repeats,
                              b.teacher_guidance, b.teacher_guidance);
  std::filesystem::create_directories(c.out());
  detail::write_json(c.out() / artifacts::kBench,
                     {{"comparison", to_json(res.comparison)}, {"control", to_json(res.control)}});
  return res;
}

}  // namespace hb

namespace hb {

/// Stable CLI exit codes: 1 validation, 2 missing prerequisite, 3 internal.
inline int exit_code_of(const std::exception& e) {
  if (dynamic_cast<const MissingArtifact*>(&e)) return 2;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
      dynamic_cast<const ArgumentError*>(&e) || dynamic_cast<const ShapeError*>(&e) ||
      dynamic_cast<const GridError*>(&e))
    return 1;
  return 3;
}

}  // namespace hb
