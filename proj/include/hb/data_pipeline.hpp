#pragma once

// Curation: analytic quality proxies, block-matching motion estimation with
// dolly-zoom detection, prompt recaptioning and manifest filtering.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <future>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "hb/errors.hpp"
#include "hb/video.hpp"

namespace hb {

struct QualityReport {
  double aesthetic = 0.0;
  double compression = 1.0;  // 1 = artifact-free
  bool operator==(const QualityReport&) const = default;
};

struct MotionReport {
  double mean_flow_magnitude = 0.0;
  double dolly_zoom_score = 0.0;
  bool dolly_zoom = false;
  bool operator==(const MotionReport&) const = default;
};

struct VideoRecord {
  std::string id;
  std::string path;
  std::string prompt;
  double fps = 8.0;
  std::optional<QualityReport> quality;
  std::optional<MotionReport> motion;
  std::optional<std::string> recaption;
  std::optional<bool> keep;
  bool operator==(const VideoRecord&) const = default;
};

// ------------------------------------------------------------ pixel views

/// Single-channel frames in [0, 1], row-major [N][H][W].
struct GrayClip {
  std::size_t frames = 0, height = 0, width = 0;
  std::vector<double> data;

  double at(std::size_t n, std::size_t y, std::size_t x) const { return data[(n * height + y) * width + x]; }
};

/// Maps a model-space value in [-1, 1] to [0, 1].
inline double unit_pixel(double v) { return 0.5 * (v + 1.0); }

template <class T>
GrayClip luma(const VideoTensor<T>& v) {
  GrayClip g{v.frames(), v.height(), v.width(), {}};
  g.data.resize(g.frames * g.height * g.width);
  for (std::size_t n = 0; n < g.frames; ++n)
    for (std::size_t y = 0; y < g.height; ++y)
      for (std::size_t x = 0; x < g.width; ++x)
        g.data[(n * g.height + y) * g.width + x] = 0.299 * unit_pixel(v.at(n, 0, y, x)) +
                                                   0.587 * unit_pixel(v.at(n, 1, y, x)) +
                                                   0.114 * unit_pixel(v.at(n, 2, y, x));
  return g;
}

// ---------------------------------------------------------------- quality

struct FrameStatistics {
  double colorfulness = 0.0;
  double contrast = 0.0;
};

template <class T>
FrameStatistics frame_statistics(const VideoTensor<T>& v, std::size_t n) {
  const std::size_t count = v.height() * v.width();
  std::vector<double> rg(count), yb(count), l(count);
  for (std::size_t y = 0, i = 0; y < v.height(); ++y)
    for (std::size_t x = 0; x < v.width(); ++x, ++i) {
      const double r = unit_pixel(v.at(n, 0, y, x)), g = unit_pixel(v.at(n, 1, y, x)),
                   b = unit_pixel(v.at(n, 2, y, x));
      rg[i] = r - g;
      yb[i] = 0.5 * (r + g) - b;
      l[i] = 0.299 * r + 0.587 * g + 0.114 * b;
    }
  auto mean = [&](const std::vector<double>& a) {
    double s = 0;
    for (double x : a) s += x;
    return s / static_cast<double>(count);
  };
  auto variance = [&](const std::vector<double>& a, double mu) {
    double s = 0;
    for (double x : a) s += (x - mu) * (x - mu);
    return s / static_cast<double>(count);
  };
  const double mu_rg = mean(rg), mu_yb = mean(yb), mu_l = mean(l);
  return {std::sqrt(variance(rg, mu_rg) + variance(yb, mu_yb)) + 0.3 * std::sqrt(mu_rg * mu_rg + mu_yb * mu_yb),
          std::sqrt(variance(l, mu_l))};
}

/// Mean over frames of clamp(0.5 colorfulness / 0.3 + 0.5 contrast / 0.25, 0, 1).
template <class T>
double aesthetic_score(const VideoTensor<T>& v) {
  double total = 0.0;
  for (std::size_t n = 0; n < v.frames(); ++n) {
    const auto s = frame_statistics(v, n);
    total += std::clamp(0.5 * s.colorfulness / 0.3 + 0.5 * s.contrast / 0.25, 0.0, 1.0);
  }
  return total / static_cast<double>(v.frames());
}

struct BlockinessStatistics {
  double edge = 0.0;   // mean |gradient| across 8-pixel grid lines
  double inner = 0.0;  // mean |gradient| elsewhere
};

inline BlockinessStatistics blockiness(const GrayClip& g, std::size_t grid = 8) {
  double se = 0, si = 0;
  std::size_t ne = 0, ni = 0;
  auto add = [&](double d, bool edge) {
    if (edge) se += d, ++ne;
    else si += d, ++ni;
  };
  for (std::size_t n = 0; n < g.frames; ++n)
    for (std::size_t y = 0; y < g.height; ++y)
      for (std::size_t x = 0; x < g.width; ++x) {
        if (x + 1 < g.width) add(std::abs(g.at(n, y, x + 1) - g.at(n, y, x)), (x + 1) % grid == 0);
        if (y + 1 < g.height) add(std::abs(g.at(n, y + 1, x) - g.at(n, y, x)), (y + 1) % grid == 0);
      }
  return {ne ? se / static_cast<double>(ne) : 0.0, ni ? si / static_cast<double>(ni) : 0.0};
}

template <class T>
QualityReport score_quality(const VideoTensor<T>& v) {
  const auto b = blockiness(luma(v));
  return {aesthetic_score(v), 1.0 - std::clamp((b.edge - b.inner) / 0.1, 0.0, 1.0)};
}

// ----------------------------------------------------------------- motion

struct BlockFlow {
  std::size_t pair;  // frame index of the earlier frame
  std::size_t y, x;  // top-left corner of the block
  int dy, dx;
};

/// Exhaustive block matching between consecutive frames. For each block of
/// frame n, every displacement d within the radius is scored by the sum of
/// absolute differences against frame n+1 at position + d, divided by the
/// number of compared pixels: near the border the displaced window is
/// clipped to the frame, so blocks whose content leaves the frame still
/// match. Ties go to the smaller |d|, then to the lexicographically smaller
/// (dy, dx).
inline std::vector<BlockFlow> block_matching(const GrayClip& g, int block = 8, int radius = 4) {
  if (g.frames < 2) throw ArgumentError("motion estimation needs at least two frames");
  if (block < 1 || radius < 0 || radius >= block) throw ArgumentError("motion estimation: need 0 <= radius < block");
  const auto B = static_cast<std::size_t>(block);
  if (g.height < B || g.width < B) throw ArgumentError("motion estimation: frame smaller than block");
  std::vector<BlockFlow> flows;
  const long H = static_cast<long>(g.height), W = static_cast<long>(g.width);
  for (std::size_t n = 0; n + 1 < g.frames; ++n)
    for (std::size_t by = 0; by + B <= g.height; by += B)
      for (std::size_t bx = 0; bx + B <= g.width; bx += B) {
        double best = std::numeric_limits<double>::infinity();
        int best_dy = 0, best_dx = 0, best_r2 = 0;
        for (int dy = -radius; dy <= radius; ++dy)
          for (int dx = -radius; dx <= radius; ++dx) {
            double sad = 0.0;
            std::size_t count = 0;
            for (std::size_t yy = 0; yy < B; ++yy) {
              const long ty = static_cast<long>(by + yy) + dy;
              if (ty < 0 || ty >= H) continue;
              for (std::size_t xx = 0; xx < B; ++xx) {
                const long tx = static_cast<long>(bx + xx) + dx;
                if (tx < 0 || tx >= W) continue;
                sad += std::abs(g.at(n, by + yy, bx + xx) -
                                g.at(n + 1, static_cast<std::size_t>(ty), static_cast<std::size_t>(tx)));
                ++count;
              }
            }
            const double cost = sad / static_cast<double>(count);
            const int r2 = dy * dy + dx * dx;
            // Candidates arrive in lexicographic order, so a tie at equal
            // radius keeps the incumbent.
            if (cost < best || (cost == best && r2 < best_r2)) {
              best = cost, best_dy = dy, best_dx = dx, best_r2 = r2;
            }
          }
        flows.push_back({n, by, bx, best_dy, best_dx});
      }
  return flows;
}

struct MotionOptions {
  int block = 8;
  int radius = 4;
  double score_threshold = 0.7;
  double magnitude_threshold = 0.5;
};

inline MotionReport motion_from_flows(const std::vector<BlockFlow>& flows, std::size_t height,
                                      std::size_t width, int block, const MotionOptions& opt = {}) {
  MotionReport r;
  if (flows.empty()) return r;
  const double cy = 0.5 * static_cast<double>(height), cx = 0.5 * static_cast<double>(width);
  double radial = 0.0, total = 0.0;
  for (const auto& f : flows) {
    const double py = static_cast<double>(f.y) + 0.5 * block - cy;
    const double px = static_cast<double>(f.x) + 0.5 * block - cx;
    const double pn = std::hypot(py, px);
    const double mag = std::hypot(static_cast<double>(f.dy), static_cast<double>(f.dx));
    total += mag;
    if (pn > 0.0) radial += (f.dy * py + f.dx * px) / pn;
  }
  r.mean_flow_magnitude = total / static_cast<double>(flows.size());
  r.dolly_zoom_score = radial / (total + 1e-8);
  r.dolly_zoom = std::abs(r.dolly_zoom_score) > opt.score_threshold && r.mean_flow_magnitude > opt.magnitude_threshold;
  return r;
}

template <class T>
MotionReport estimate_motion(const VideoTensor<T>& v, const MotionOptions& opt = {}) {
  if (v.frames() < 2) throw ArgumentError("motion estimation needs at least two frames");
  const auto g = luma(v);
  return motion_from_flows(block_matching(g, opt.block, opt.radius), g.height, g.width, opt.block, opt);
}

// ------------------------------------------------------------ recaptioning

inline constexpr const char* kRecaptionTemplate =
    "Rewrite this video caption with richer visual detail, one sentence: ";

/// Text-generation backend. `generate` may throw on failure or timeout and
/// is called from several curation workers at once.
class RecaptionClient {
 public:
  virtual ~RecaptionClient() = default;
  virtual std::string generate(const std::string& instruction) = 0;
};

/// Deterministic in-process stand-in.
class StubRecaptionClient final : public RecaptionClient {
 public:
  std::string generate(const std::string& instruction) override {
    std::string prompt = instruction;
    const std::string head = kRecaptionTemplate;
    if (prompt.rfind(head, 0) == 0) prompt = prompt.substr(head.size());
    return prompt + ", highly detailed, cinematic lighting, smooth motion";
  }
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Single line, runs of whitespace collapsed, at most `limit` characters.
inline std::string sanitize_caption(const std::string& text, std::size_t limit = 200) {
  std::string out;
  bool space = false;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      space = !out.empty();
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    out.push_back(ch);
  }
  if (out.size() > limit) out.resize(limit);
  return out;
}

/// Never throws on client failure: the original prompt is returned and a
/// warning logged.
inline std::string recaption(const std::string& prompt, RecaptionClient& client) {
  const std::string p = trim(prompt);
  if (p.empty()) throw ArgumentError("recaption: empty prompt");
  try {
    auto reply = sanitize_caption(client.generate(kRecaptionTemplate + p));
    if (reply.empty()) throw std::runtime_error("empty reply");
    return reply;
  } catch (const std::exception& e) {
    spdlog::warn("recaption failed for \"{}\": {}; keeping the original prompt", p, e.what());
    return p;
  }
}

// --------------------------------------------------------------- manifest

struct CurationThresholds {
  double aesthetic_min = 0.0;
  double compression_min = 0.0;
  double magnitude_min = 0.0;
  bool operator==(const CurationThresholds&) const = default;
};

enum class DropReason { kNone, kAesthetic, kCompression, kStatic, kDollyZoom };

inline const char* to_string(DropReason r) {
  switch (r) {
    case DropReason::kNone: return "kept";
    case DropReason::kAesthetic: return "aesthetic";
    case DropReason::kCompression: return "compression";
    case DropReason::kStatic: return "static";
    case DropReason::kDollyZoom: return "dolly_zoom";
  }
  return "unknown";
}

/// Quality gates first, then the dolly-zoom filter.
inline DropReason drop_reason(const VideoRecord& r, const CurationThresholds& th) {
  if (!r.quality || !r.motion) throw ValidationError("record " + r.id + " has not been scored");
  if (r.quality->aesthetic < th.aesthetic_min) return DropReason::kAesthetic;
  if (r.quality->compression < th.compression_min) return DropReason::kCompression;
  if (r.motion->mean_flow_magnitude < th.magnitude_min) return DropReason::kStatic;
  if (r.motion->dolly_zoom) return DropReason::kDollyZoom;
  return DropReason::kNone;
}

inline std::vector<VideoRecord> filter_manifest(std::vector<VideoRecord> records, const CurationThresholds& th) {
  for (auto& r : records) r.keep = drop_reason(r, th) == DropReason::kNone;
  return records;
}

inline nlohmann::json to_json(const VideoRecord& r) {
  nlohmann::json j{{"id", r.id}, {"path", r.path}, {"prompt", r.prompt}, {"fps", r.fps}};
  if (r.quality) j["quality"] = {{"aesthetic", r.quality->aesthetic}, {"compression", r.quality->compression}};
  if (r.motion)
    j["motion"] = {{"mean_flow_magnitude", r.motion->mean_flow_magnitude},
                   {"dolly_zoom_score", r.motion->dolly_zoom_score},
                   {"dolly_zoom", r.motion->dolly_zoom}};
  if (r.recaption) j["recaption"] = *r.recaption;
  if (r.keep) j["keep"] = *r.keep;
  return j;
}

inline VideoRecord record_from_json(const nlohmann::json& j) {
  try {
    VideoRecord r;
    r.id = j.at("id").get<std::string>();
    r.path = j.at("path").get<std::string>();
    r.prompt = j.at("prompt").get<std::string>();
    r.fps = j.value("fps", 8.0);
    if (!(r.fps > 0.0)) throw ValidationError("record " + r.id + ": fps must be positive");
    if (j.contains("quality"))
      r.quality = QualityReport{j["quality"].at("aesthetic").get<double>(), j["quality"].at("compression").get<double>()};
    if (j.contains("motion"))
      r.motion = MotionReport{j["motion"].at("mean_flow_magnitude").get<double>(),
                              j["motion"].at("dolly_zoom_score").get<double>(),
                              j["motion"].at("dolly_zoom").get<bool>()};
    if (j.contains("recaption")) r.recaption = j["recaption"].get<std::string>();
    if (j.contains("keep")) r.keep = j["keep"].get<bool>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed manifest record: ") + e.what());
  }
}

inline void write_manifest(const std::filesystem::path& path, const std::vector<VideoRecord>& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write manifest " + path.string());
  for (const auto& r : records) os << to_json(r).dump() << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

inline std::vector<VideoRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingArtifact("manifest not found: " + path.string());
  std::vector<VideoRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(record_from_json(j));
  }
  std::vector<std::string> ids;
  for (const auto& r : out) ids.push_back(r.id);
  std::sort(ids.begin(), ids.end());
  if (auto it = std::adjacent_find(ids.begin(), ids.end()); it != ids.end())
    throw ValidationError("duplicate record id " + *it + " in " + path.string());
  return out;
}

// ---------------------------------------------------------------- curation

struct CurationOptions {
  CurationThresholds thresholds;
  MotionOptions motion;
  std::size_t workers = 4;
};

struct CurationSummary {
  std::size_t total = 0;
  std::size_t kept = 0;
  std::map<std::string, std::size_t> dropped;  // reason -> count
};

struct CurationResult {
  std::vector<VideoRecord> records;  // scored and filtered, input order; io failures excluded
  CurationSummary summary;
};

/// Scores, motion-analyzes and recaptions every record (in parallel over
/// `workers` threads), then filters. Clip paths are resolved against
/// `base_dir`. Unreadable clips are dropped with reason "io".
inline CurationResult curate(const std::vector<VideoRecord>& input, const std::filesystem::path& base_dir,
                             RecaptionClient& client, const CurationOptions& opt) {
  struct Slot {
    std::optional<VideoRecord> record;
  };
  std::vector<Slot> slots(input.size());
  auto process = [&](std::size_t i) {
    VideoRecord r = input[i];
    VideoTensor<float> clip;
    try {
      std::filesystem::path p(r.path);
      clip = read_video(p.is_absolute() ? p : base_dir / p);
    } catch (const IoError& e) {
      spdlog::warn("dropping {}: {}", r.id, e.what());
      return;
    } catch (const ShapeError& e) {
      spdlog::warn("dropping {}: {}", r.id, e.what());
      return;
    }
    r.quality = score_quality(clip);
    r.motion = estimate_motion(clip, opt.motion);
    r.recaption = recaption(r.prompt, client);
    slots[i].record = std::move(r);
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(opt.workers, input.size()));
  std::atomic<std::size_t> next{0};
  std::vector<std::future<void>> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.push_back(std::async(std::launch::async, [&] {
      for (std::size_t i = next++; i < input.size(); i = next++) process(i);
    }));
  for (auto& f : pool) f.get();

  CurationResult res;
  res.summary.total = input.size();
  std::vector<VideoRecord> scored;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i].record) {
      ++res.summary.dropped["io"];
      continue;
    }
    scored.push_back(*slots[i].record);
  }
  res.records = filter_manifest(std::move(scored), opt.thresholds);
  for (const auto& r : res.records) {
    const auto reason = drop_reason(r, opt.thresholds);
    if (reason == DropReason::kNone) ++res.summary.kept;
    else ++res.summary.dropped[to_string(reason)];
  }
  return res;
}

}  // namespace hb
