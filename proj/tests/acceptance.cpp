// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>

#include "hb/gradcheck.hpp"
#include "hb/pipeline.hpp"
#include "hb/synth.hpp"
#include "model_fixtures.hpp"

using namespace hb;
using namespace hb::testing;
namespace fs = std::filesystem;

namespace {

int failures = 0;

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

void report(int id, const char* name, bool ok, double seconds, double budget, const std::string& detail) {
  const bool in_time = seconds < budget;
  if (!(ok && in_time)) ++failures;
  std::printf("%s %2d %s: %s; %.1f s (budget %.0f s)%s\n", ok && in_time ? "PASS" : "FAIL", id, name, detail.c_str(),
              seconds, budget, in_time ? "" : " OVER BUDGET");
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double mse(const LatentVideo<float>& a, const LatentVideo<float>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.tensor().size(); ++i) {
    const double d = static_cast<double>(a.tensor()[i]) - b.tensor()[i];
    s += d * d;
  }
  return s / static_cast<double>(a.tensor().size());
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) return "<missing " + p.string() + ">";
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Shared between the training criteria and the benchmark.
struct Trained {
  RunConfig cfg;
  std::shared_ptr<const std::vector<TrainClip>> clips;
  ItemSource<float> source;
  ConditioningBundle<float> cond;
  LatentShape shape;
  std::optional<DenoiserModel<float>> teacher, pruned, stage1, stage2;
};

// ------------------------------------------------------------------ 1
void pruning_ratio() {
  Timer t;
  auto teacher = toy_teacher_config();
  auto r = prune_config(teacher);
  auto params = transfer_weights(init_params<float>(teacher, 1), r.map);
  const double ratio = static_cast<double>(param_count(r.student)) / static_cast<double>(param_count(teacher));
  const bool ok = ratio >= 0.40 && ratio <= 0.60 && params.total_size() == param_count(r.student) &&
                  r.student.middle_blocks == 0;
  report(1, "pruning ratio", ok, t.seconds(), 5,
         fmt("student/teacher params %zu/%zu = %.4f", param_count(r.student), param_count(teacher), ratio));
}

// ------------------------------------------------------------------ 2
void codec_oracle() {
  Timer t;
  LatentCodec<float> codec(0);
  double worst_err = 0, worst_norm = 0;
  for (int k = 0; k < 100; ++k) {
    Rng rng(mix_seed(2, static_cast<std::uint64_t>(k)));
    Tensor<float> x({4, 3, 16, 16});
    for (auto& v : x.data()) v = static_cast<float>(rng.uniform());
    VideoTensor<float> clip(x);
    auto z = codec.encode(clip);
    auto back = codec.decode(z);
    double nx = 0, nz = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      worst_err = std::max(worst_err, std::abs(static_cast<double>(back.tensor()[i]) - x[i]));
      nx += static_cast<double>(x[i]) * x[i];
      nz += static_cast<double>(z.tensor()[i]) * z.tensor()[i];
    }
    worst_norm = std::max(worst_norm, std::abs(std::sqrt(nz) - std::sqrt(nx)) / std::sqrt(nx));
  }
  report(2, "codec oracle", worst_err <= 1e-5 && worst_norm <= 1e-4, t.seconds(), 10,
         fmt("100 clips, max |decode(encode(x)) - x| %.2e, max relative norm gap %.2e", worst_err, worst_norm));
}

// ------------------------------------------------------------------ 3
void solver_oracle() {
  Timer t;
  const auto schedule = build_schedule();
  Rng rng(3);
  const LatentVideo<double> z0(Tensor<double>::randn({2, 12, 4, 4}, rng));
  const LatentVideo<double> eps(Tensor<double>::randn({2, 12, 4, 4}, rng));
  double recover = 0, chain = 0;
  for (int t_hi : {1, 20, 250, 500, 999, 1000}) {
    auto z_t = add_noise(z0, eps, t_hi, schedule);
    recover = std::max(recover, max_abs_difference(ddim_step(z_t, eps, t_hi, 0, schedule).tensor(), z0.tensor()));
    if (t_hi >= 20) {
      const int mid = t_hi / 2, lo = t_hi / 5;
      auto two = ddim_step(ddim_step(z_t, eps, t_hi, mid, schedule), eps, mid, lo, schedule);
      chain = std::max(chain, max_abs_difference(two.tensor(), ddim_step(z_t, eps, t_hi, lo, schedule).tensor()));
    }
  }
  // add_noise on a constant clean value: mean sqrt(ab) c, variance 1 - ab.
  const int tv = 400;
  const double c = 0.7, ab = schedule.alpha_bar(tv);
  const std::size_t n = 10000;
  Rng noise(4);
  auto draws = add_noise(LatentVideo<double>(Tensor<double>({n, 1, 1, 1}, c)),
                         LatentVideo<double>(Tensor<double>::randn({n, 1, 1, 1}, noise)), tv, schedule);
  double mean = 0, var = 0;
  for (double v : draws.tensor().data()) mean += v;
  mean /= n;
  for (double v : draws.tensor().data()) var += (v - mean) * (v - mean);
  var /= (n - 1);
  const double var_gap = std::abs(var / (1 - ab) - 1);
  report(3, "solver oracle", recover <= 1e-5 && chain <= 1e-5 && var_gap <= 0.05, t.seconds(), 30,
         fmt("true-noise recovery %.2e, chained-step gap %.2e, variance ratio error %.3f (mean %.4f vs %.4f)",
             recover, chain, var_gap, mean, std::sqrt(ab) * c));
}

// ------------------------------------------------------------------ 4
void gradient_checks() {
  Timer t;
  auto c = tiny_config();
  auto schedule = build_schedule(50, 1e-3, 0.05);

  // epsilon-matching loss
  auto params = init_params<double>(c, 41);
  randomize(params, 42, 0.05);
  Rng rng(43);
  TrainItem<double> item{LatentVideo<double>(Tensor<double>::randn({2, 12, 4, 4}, rng)),
                         cond_for<double>(c, "a kite over a hill", 12.0)};
  item.cond.first_frame_latent = Tensor<double>::randn({12, 4, 4}, rng);
  const auto eps = Tensor<double>::randn({2, 12, 4, 4}, rng);
  const int te = 30;
  DenoiserModel<double> model{c, params};
  ParameterStore<double> grads;
  epsilon_loss(model, item, te, eps, schedule, &grads);
  auto eps_loss = [&](const ParameterStore<double>& p) {
    return epsilon_loss(DenoiserModel<double>{c, p}, item, te, eps, schedule, nullptr);
  };
  auto a = check_parameter_gradients(params, grads, eps_loss, 60, 44);

  // negative mixed reward, full rollout (the whole loss is differentiated)
  ToyReward<double> reward(45, static_cast<std::size_t>(c.text_dim));
  LatentCodec<double> codec(0, 2);
  RewardConfig rc;
  rc.rollout_steps = 2;
  rc.image_frames = 2;
  rc.lambda_image = 0.7;
  rc.lambda_video = 1.2;
  rc.shape = {2, 12, 4, 4};
  auto rparams = init_params<double>(c, 46);
  randomize(rparams, 47, 0.05);
  auto cond = cond_for<double>(c, "a lighthouse at dusk", 12.0);
  auto neg_reward_grads = [&](const RewardConfig& cfg, const LatentVideo<double>& prefix) {
    Graph<double> g;
    ParamBinding<double> bind(g, rparams, true);
    g.backward(g.scale(mixed_reward_from(bind, c, prefix, cond, reward, codec, schedule, cfg), -1.0));
    return bind.gradients();
  };
  rc.full_rollout = true;
  const auto noise = reward_rollout_prefix(rparams, c, cond, schedule, rc, 48);
  auto full_loss = [&](const ParameterStore<double>& p) {
    Graph<double> g;
    ParamBinding<double> bind(g, p, false);
    return -g.scalar(mixed_reward(bind, c, cond, reward, codec, schedule, rc, 48));
  };
  auto b_full = check_parameter_gradients(rparams, neg_reward_grads(rc, noise), full_loss, 60, 49);

  // default truncation: gradient through the final step, prefix held fixed
  auto rt = rc;
  rt.full_rollout = false;
  const auto prefix = reward_rollout_prefix(rparams, c, cond, schedule, rt, 48);
  auto trunc_loss = [&](const ParameterStore<double>& p) {
    Graph<double> g;
    ParamBinding<double> bind(g, p, false);
    return -g.scalar(mixed_reward_from(bind, c, prefix, cond, reward, codec, schedule, rt));
  };
  auto b_trunc = check_parameter_gradients(rparams, neg_reward_grads(rt, prefix), trunc_loss, 60, 50);

  const bool ok = a.checked >= 50 && b_full.checked >= 50 && b_trunc.checked >= 50 && a.worst_relative_error < 1e-3 &&
                  b_full.worst_relative_error < 1e-3 && b_trunc.worst_relative_error < 1e-3;
  report(4, "gradient checks", ok, t.seconds(), 120,
         fmt("float64, worst relative error: epsilon loss %.2e (%d params), -R full rollout %.2e (%d), "
             "-R final step %.2e (%d)",
             a.worst_relative_error, a.checked, b_full.worst_relative_error, b_full.checked,
             b_trunc.worst_relative_error, b_trunc.checked));
}

// ------------------------------------------------------------------ 5
// Held-out consistency loss on fixed draws, against the current EMA target.
double consistency_eval(const ConsistencyDistiller<float>& d, const TrainItem<float>& item,
                        const NoiseSchedule& schedule, const DistillConfig& dc) {
  Rng e(77);
  double s = 0;
  const int draws = 20;
  for (int k = 0; k < draws; ++k) {
    const int hi = static_cast<int>(e.uniform_int(dc.skip + 1, dc.grid_size));
    const int t_hi = d.grid().at(hi), t_lo = d.grid().at(hi - dc.skip);
    LatentVideo<float> eps(Tensor<float>::randn(item.z0.shape(), e));
    const double w = e.uniform(dc.w_min, dc.w_max);
    auto z_hi = add_noise(item.z0, eps, t_hi, schedule);
    auto target =
        distill_target(d.teacher(), d.ema(), z_hi, t_hi, t_lo, item.cond, w, schedule, d.parameterization(), d.grid());
    auto pred = consistency_fn(d.student(), z_hi, t_hi, item.cond, d.parameterization(), d.grid(), schedule);
    Graph<float> g;
    auto l = dc.loss == DistillLoss::kHuber
                 ? g.huber(g.constant(pred.tensor()), g.constant(target.tensor()), static_cast<float>(dc.huber_delta))
                 : g.mse(g.constant(pred.tensor()), g.constant(target.tensor()));
    s += g.scalar(l);
  }
  return s / draws;
}

void stage1_convergence(Trained& tr) {
  Timer t;
  auto& cfg = tr.cfg;
  const auto schedule = schedule_of(cfg);
  // 1-clip dataset: an 8-frame clip, so only stride 1 and one window fit.
  auto clips = std::make_shared<std::vector<TrainClip>>();
  clips->push_back({"pan", "a red fox running through snow", 8.0,
                    downsample_clip(synth::translation_clip(8, 32, 3, 0, 1, 6.0), cfg.data.downsample)});
  tr.clips = clips;
  tr.source = training_source(tr.clips, codec_of(cfg), cfg.teacher.unet, cfg.data);
  Rng once(0);
  const TrainItem<float> item = tr.source(once);
  tr.cond = item.cond;
  tr.shape = latent_shape_of(cfg, 16, 16);

  DenoiserModel<float> teacher{cfg.teacher.unet, init_params<float>(cfg.teacher.unet, 11)};
  TeacherTrainConfig tc;
  tc.steps = cfg.teacher.steps;
  tc.adam.lr = cfg.teacher.lr;
  tc.final_lr_fraction = cfg.teacher.final_lr_fraction;
  tc.uncond_prob = cfg.teacher.uncond_prob;
  tc.seed = 1;
  double tail = 0;
  teacher.params = teacher_train(teacher, tr.source, schedule, tc, [&](const TeacherStepRecord& r) {
    if (r.step >= tc.steps - 100) tail += r.loss / 100;
  });
  // Loss over a stratified timestep sweep with fixed noise.
  Rng e(99);
  double teacher_loss = 0;
  for (int k = 0; k < 100; ++k)
    teacher_loss += epsilon_loss(teacher, item, 5 + 10 * k, Tensor<float>::randn(item.z0.shape(), e), schedule, nullptr) / 100;
  const double teacher_seconds = t.seconds();
  tr.teacher = teacher;

  auto pruned = prune_config(teacher.config, cfg.distill1.prune);
  DenoiserModel<float> student{pruned.student, transfer_weights(teacher.params, pruned.map)};
  tr.pruned = student;
  DistillConfig dc = cfg.distill1.distill;
  dc.seed = 2;
  ConsistencyDistiller<float> d(teacher, student, schedule, dc);
  const double before = consistency_eval(d, item, schedule, dc);
  Rng data_rng(3);
  for (int s = 0; s < dc.steps; ++s) d.step({tr.source(data_rng)});
  const double after = consistency_eval(d, item, schedule, dc);
  tr.stage1 = d.student();

  // Boundary f(z, t_min) = z on random parameters.
  auto tiny = tiny_config();
  auto rp = init_params<double>(tiny, 5);
  randomize(rp, 6, 0.3);
  DistillGrid grid(schedule.steps(), dc.grid_size);
  ConsistencyParameterization parm{dc.sigma_data, dc.timestep_scaling, grid.t_min()};
  Rng zr(7);
  LatentVideo<double> z(Tensor<double>::randn({2, 12, 4, 4}, zr));
  const double boundary = max_abs_difference(
      consistency_fn(DenoiserModel<double>{tiny, rp}, z, grid.t_min(), cond_for<double>(tiny, "x"), parm, grid, schedule)
          .tensor(),
      z.tensor());

  const bool ok = teacher_loss <= 0.1 && after <= 0.5 * before && boundary == 0.0;
  report(5, "stage-1 seeded convergence", ok, t.seconds(), 300,
         fmt("teacher %d steps: sweep loss %.4f (last-100 train mean %.4f, %.0f s); consistency loss %.5f -> %.5f "
             "(ratio %.3f) over %d steps; boundary gap %.1e",
             tc.steps, teacher_loss, tail, teacher_seconds, before, after, after / before, dc.steps, boundary));
}

// ------------------------------------------------------------------ 6
double reference_guidance(const RunConfig& c) {
  return 0.5 * (c.distill1.distill.w_min + c.distill1.distill.w_max);
}

void distillation_benefit(Trained& tr) {
  Timer t;
  const auto schedule = schedule_of(tr.cfg);
  const std::uint64_t seed = 5;
  auto ref = sample(*tr.teacher, tr.cond, schedule, 50, reference_guidance(tr.cfg), seed, tr.shape);
  const double distilled = mse(sample(*tr.stage1, tr.cond, schedule, 4, 1.0, seed, tr.shape), ref);
  const double undistilled = mse(sample(*tr.pruned, tr.cond, schedule, 4, 1.0, seed, tr.shape), ref);
  report(6, "distillation benefit", distilled < undistilled, t.seconds(), 60,
         fmt("4-step MSE vs teacher 50-step (w=%.1f): distilled %.3f, undistilled pruned %.3f",
             reference_guidance(tr.cfg), distilled, undistilled));
}

// ------------------------------------------------------------------ 7
void reward_ascent(Trained& tr) {
  Timer t;
  const auto schedule = schedule_of(tr.cfg);
  const std::uint64_t seed = 5;
  auto ref = sample(*tr.teacher, tr.cond, schedule, 50, reference_guidance(tr.cfg), seed, tr.shape);
  RewardConfig rc = tr.cfg.distill2.reward;
  rc.seed = 3;
  rc.shape = tr.shape;
  const auto reward = toy_reward_of(tr.cfg);
  PromptList prompts{{tr.clips->front().caption, tr.cond},
                     {"a blue car driving at night", prompt_condition("a blue car driving at night", tr.stage1->config, 8.0)}};

  RewardTuner<float> tuner(*tr.stage1, reward, codec_of(tr.cfg), schedule, rc);
  const double r0 = tuner.evaluate(prompts).mean_reward;
  for (int s = 0; s < rc.steps; ++s) tuner.step(prompts);
  const double r1 = tuner.evaluate(prompts).mean_reward;
  tr.stage2 = tuner.student();
  const double m0 = mse(sample(*tr.stage1, tr.cond, schedule, 4, 1.0, seed, tr.shape), ref);
  const double m1 = mse(sample(*tr.stage2, tr.cond, schedule, 4, 1.0, seed, tr.shape), ref);

  auto zero = rc;
  zero.lambda_image = 0;
  zero.lambda_video = 0;
  RewardTuner<float> idle(*tr.stage1, reward, codec_of(tr.cfg), schedule, zero);
  for (int s = 0; s < 5; ++s) idle.step(prompts);
  bool unchanged = true;
  for (const auto& [name, p] : tr.stage1->params) {
    const auto& q = idle.student().params.get(name);
    unchanged = unchanged && std::memcmp(p.data().data(), q.data().data(), p.size() * sizeof(float)) == 0;
  }
  const bool ok = r1 > r0 && m1 <= 1.25 * m0 && unchanged;
  report(7, "stage-2 reward ascent", ok, t.seconds(), 180,
         fmt("%d steps: mean reward %.4f -> %.4f; 4-step MSE vs teacher %.3f -> %.3f (x%.3f); zero weights leave "
             "parameters %s",
             rc.steps, r0, r1, m0, m1, m1 / m0, unchanged ? "bitwise unchanged" : "CHANGED"));
}

// ------------------------------------------------------------------ 8
void curation_oracle() {
  Timer t;
  const auto dir = fs::temp_directory_path() / "hb_acceptance_curation";
  fs::remove_all(dir);
  auto records = synth::write_fixture(synth::curation_fixture(), dir);
  RunConfig c;
  StubRecaptionClient stub;
  auto res = curate(records, dir, stub, c.curation);
  const auto& th = c.curation.thresholds;
  // The rule written out by hand, independent of filter_manifest.
  std::vector<std::string> expected, got;
  const VideoRecord *zoom = nullptr, *pan = nullptr;
  for (const auto& r : res.records) {
    const bool keep = r.quality->aesthetic >= th.aesthetic_min && r.quality->compression >= th.compression_min &&
                      r.motion->mean_flow_magnitude >= th.magnitude_min && !r.motion->dolly_zoom;
    if (keep) expected.push_back(r.id);
    if (r.keep.value()) got.push_back(r.id);
    if (r.id == "zoom_in") zoom = &r;
    if (r.id == "pan_right") pan = &r;
  }
  const std::vector<std::string> frozen{"pan_right", "tilt_down", "diagonal", "sparkle", "pan_left"};
  bool ok = zoom && pan && got == expected && got == frozen && res.records.size() == 10;
  ok = ok && zoom->motion->dolly_zoom && zoom->motion->dolly_zoom_score > 0.7;
  ok = ok && !pan->motion->dolly_zoom && std::abs(pan->motion->dolly_zoom_score) < 0.2;
  std::string kept;
  for (const auto& id : got) kept += (kept.empty() ? "" : ",") + id;
  report(8, "curation oracle", ok, t.seconds(), 30,
         fmt("kept {%s}; zoom score %.3f flagged %d; pan score %.3f flagged %d", kept.c_str(),
             zoom ? zoom->motion->dolly_zoom_score : NAN, zoom ? int(zoom->motion->dolly_zoom) : -1,
             pan ? pan->motion->dolly_zoom_score : NAN, pan ? int(pan->motion->dolly_zoom) : -1));
}

// ------------------------------------------------------------------ 9
void metric_aggregation() {
  Timer t;
  const auto& names = quality_metric_names();
  auto fill = [&](std::vector<double> v) {
    std::map<std::string, double> m;
    for (std::size_t i = 0; i < names.size(); ++i) m[names[i]] = v[i];
    return m;
  };
  double worst = 0;
  auto gap = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };

  // (a) constant 0.8 quality, semantic 0.6, default 4:1
  auto r = aggregate(fill(std::vector<double>(7, 0.8)), {{"overall_consistency", 0.6}});
  gap(r.quality_score, 0.8);
  gap(r.semantic_score, 0.6);
  gap(r.total_score, (4 * 0.8 + 1 * 0.6) / 5.0);
  // (b) one-hot quality, equal weights
  r = aggregate(fill({1, 0, 0, 0, 0, 0, 0}), {{"overall_consistency", 0.3}, {"extra", 0.5}});
  gap(r.quality_score, 1.0 / 7.0);
  gap(r.semantic_score, 0.4);
  gap(r.total_score, (4.0 / 7.0 + 0.4) / 5.0);
  // (c) weighted quality group, 2:3 groups
  EvalWeights w;
  w.quality = {{names[0], 2.0}, {names[1], 0.5}, {names[4], 3.0}};
  w.quality_group = 2;
  w.semantic_group = 3;
  const std::vector<double> q{0.9, 0.2, 0.4, 0.6, 0.7, 0.1, 0.5};
  r = aggregate(fill(q), {{"overall_consistency", 0.25}}, w);
  const double qs = (2 * 0.9 + 0.5 * 0.2 + 0.4 + 0.6 + 3 * 0.7 + 0.1 + 0.5) / (2 + 0.5 + 1 + 1 + 3 + 1 + 1);
  gap(r.quality_score, qs);
  gap(r.total_score, (2 * qs + 3 * 0.25) / 5.0);

  // constant inputs map to the constant under any positive weights
  for (double c : {0.0, 0.37, 1.0}) {
    auto rc = aggregate(fill(std::vector<double>(7, c)), {{"a", c}, {"b", c}}, w);
    gap(rc.quality_score, c);
    gap(rc.semantic_score, c);
    gap(rc.total_score, c);
  }
  report(9, "metric aggregation", worst <= 1e-12, t.seconds(), 5, fmt("max deviation from hand values %.1e", worst));
}

// ------------------------------------------------------------------ 10
void speedup_structure(Trained& tr) {
  Timer t;
  const auto schedule = schedule_of(tr.cfg);
  auto main = bench_latency(*tr.teacher, *tr.stage2, tr.cond, schedule, tr.shape, 50, 4, 5);
  auto control = bench_latency(*tr.teacher, *tr.teacher, tr.cond, schedule, tr.shape, 50, 50, 5);
  const bool ok = main.speedup >= 10 && control.speedup >= 0.8 && control.speedup <= 1.25 &&
                  std::abs(main.speedup - main.teacher_latency / main.student_latency) <= 1e-9;
  report(10, "speedup structure", ok, t.seconds(), 120,
         fmt("teacher 50 steps %.3f s, pruned student 4 steps %.4f s: speedup %.1fx = steps %.1fx * per-step %.2fx; "
             "self-comparison %.3f",
             main.teacher_latency, main.student_latency, main.speedup, main.steps_ratio, main.per_step_ratio,
             control.speedup));
}

// ------------------------------------------------------------------ 11
void end_to_end_determinism() {
  Timer t;
  const auto root = fs::temp_directory_path() / "hb_acceptance_e2e";
  fs::remove_all(root);
  auto records = synth::write_fixture(synth::curation_fixture(), root / "fixture");
  write_manifest(root / "fixture" / "manifest.jsonl", records);
  auto run = [&](const std::string& name) {
    RunConfig c;
    c.seed = 2024;
    c.paths.input_manifest = (root / "fixture" / "manifest.jsonl").string();
    c.paths.out_dir = (root / name).string();
    StubRecaptionClient stub;
    run_curate(c, stub);
    run_teacher(c);
    run_distill1(c);
    run_distill2(c);
    run_sample(c);
    return to_json(run_eval(c).summary).dump();
  };
  const auto eval_a = run("a");
  const auto eval_b = run("b");
  std::vector<fs::path> files{artifacts::kCurated, artifacts::kCurationSummary, artifacts::kTeacher,
                              artifacts::kPruneMap, artifacts::kStage1,         artifacts::kStage2,
                              fs::path(artifacts::kSamples) / artifacts::kSampleIndex};
  for (const auto& e : fs::directory_iterator(root / "a" / artifacts::kSamples))
    if (e.path().extension() == ".hbvid") files.push_back(fs::path(artifacts::kSamples) / e.path().filename());
  std::size_t same = 0;
  std::string differing;
  for (const auto& f : files) {
    if (slurp(root / "a" / f) == slurp(root / "b" / f)) ++same;
    else differing += " " + f.string();
  }
  const bool ok = same == files.size() && eval_a == eval_b && files.size() > 7;
  report(11, "end-to-end determinism", ok, t.seconds(), 900,
         fmt("%zu/%zu artifacts bitwise identical across two runs%s; eval summaries %s", same, files.size(),
             differing.c_str(), eval_a == eval_b ? "identical" : "DIFFER"));
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::err);
  Timer total;
  pruning_ratio();
  codec_oracle();
  solver_oracle();
  gradient_checks();
  curation_oracle();
  metric_aggregation();
  Trained tr;
  stage1_convergence(tr);
  distillation_benefit(tr);
  reward_ascent(tr);
  speedup_structure(tr);
  end_to_end_determinism();
  std::printf("%d criteria failed; total %.0f s\n", failures, total.seconds());
  return failures == 0 ? 0 : 1;
}
