#include <cstdlib>
#include <iostream>
#include <memory>
#include <utility>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "hb/pipeline.hpp"
#include "hb/recaption_http.hpp"
#include "hb/synth.hpp"

namespace {

std::unique_ptr<hb::RecaptionClient> recaption_client() {
  if (const char* url = std::getenv("HB_RECAPTION_ENDPOINT"); url && *url) {
    spdlog::info("recaptioning via {}", url);
    return std::make_unique<hb::HttpRecaptionClient>(url);
  }
  return std::make_unique<hb::StubRecaptionClient>();
}

int run(const std::string& cmd, const hb::RunConfig& cfg) {
  using nlohmann::json;
  if (cmd == "synth") {
    const auto dir = cfg.out() / "fixture";
    auto records = hb::synth::write_fixture(hb::synth::curation_fixture(), dir);
    hb::write_manifest(dir / "manifest.jsonl", records);
    std::cout << (dir / "manifest.jsonl").string() << '\n';
  } else if (cmd == "curate") {
    auto client = recaption_client();
    auto res = hb::run_curate(cfg, *client);
    json dropped = res.summary.dropped;
    std::cout << json{{"total", res.summary.total}, {"kept", res.summary.kept}, {"dropped", dropped}}.dump() << '\n';
  } else if (cmd == "teacher") {
    hb::run_teacher(cfg);
  } else if (cmd == "distill1") {
    hb::run_distill1(cfg);
  } else if (cmd == "distill2") {
    hb::run_distill2(cfg);
  } else if (cmd == "sample") {
    for (const auto& f : hb::run_sample(cfg)) std::cout << f.string() << '\n';
  } else if (cmd == "eval") {
    auto res = hb::run_eval(cfg);
    std::cout << hb::to_json(res.summary).dump(2) << '\n';
  } else if (cmd == "bench") {
    auto res = hb::run_bench(cfg);
    std::cout << json{{"comparison", hb::to_json(res.comparison)}, {"control", hb::to_json(res.control)}}.dump(2)
              << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hbvid: toy text-to-video distillation pipeline"};
  app.fallthrough();
  app.require_subcommand(0, 1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool print_config = false;
  app.add_option("--config", config_path, "run configuration (JSON)");
  app.add_option("--seed", seed, "global seed, overrides the config");
  app.add_option("--out", out_dir, "output directory, overrides paths.out_dir");
  app.add_flag("--print-effective-config", print_config, "print the fully defaulted config and exit");
  const std::pair<const char*, const char*> commands[] = {
      {"synth", "write the synthetic fixture clips and their manifest"},
      {"curate", "filter and recaption the input manifest"},
      {"teacher", "train the full-size denoiser"},
      {"distill1", "prune the teacher and run consistency distillation"},
      {"distill2", "fine-tune the student against the reward"},
      {"sample", "render the configured prompts to clips"},
      {"eval", "score clips and write the metric report"},
      {"bench", "time teacher against student sampling"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    hb::RunConfig cfg = config_path.empty() ? hb::RunConfig{} : hb::load_run_config(config_path);
    if (seed) cfg.seed = *seed;
    if (!out_dir.empty()) cfg.paths.out_dir = out_dir;
    cfg.validate();
    if (print_config) {
      std::cout << hb::to_json(cfg).dump(2) << '\n';
      return 0;
    }
    const auto subs = app.get_subcommands();
    if (subs.empty()) {
      std::cerr << app.help();
      return 1;
    }
    return run(subs.front()->get_name(), cfg);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return hb::exit_code_of(e);
  }
}
