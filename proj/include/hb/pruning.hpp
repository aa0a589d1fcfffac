#pragma once

// Structural pruning of the U-Net: every level keeps half of its residual
// blocks (floor, minimum one; the even-indexed ones 0, 2, 4, ...) and all
// middle blocks are dropped. Channel widths are untouched, so each retained
// student block has exactly the shapes of its teacher block.

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hb/errors.hpp"
#include "hb/unet.hpp"

namespace hb {

struct PruneOptions {
  bool prune_up_path = true;
};

struct PruneMap {
  struct Entry {
    std::string student;
    std::string teacher;
    Shape shape;
  };
  std::vector<Entry> entries;
  std::vector<std::vector<int>> retained_down;  // teacher block indices per level
  std::vector<std::vector<int>> retained_up;
};

struct PruneResult {
  UNetConfig student;
  PruneMap map;
};

inline std::vector<int> retained_blocks(int count) {
  const int keep = std::max(1, count / 2);
  std::vector<int> idx;
  for (int j = 0; j < keep; ++j) idx.push_back(2 * j);
  return idx;
}

namespace detail {

// Rewrites "<path>.<level>.block.<j>.rest" through the retained index table.
inline std::string map_block_name(const std::string& name, const char* path,
                                  const std::vector<std::vector<int>>& retained) {
  const std::string head = std::string(path) + ".";
  if (name.rfind(head, 0) != 0) return {};
  const auto level_end = name.find('.', head.size());
  const int level = std::stoi(name.substr(head.size(), level_end - head.size()));
  const std::string block_tag = ".block.";
  const auto j_begin = level_end + block_tag.size();
  const auto j_end = name.find('.', j_begin);
  const int j = std::stoi(name.substr(j_begin, j_end - j_begin));
  const int teacher_j = retained.at(static_cast<std::size_t>(level)).at(static_cast<std::size_t>(j));
  return head + std::to_string(level) + block_tag + std::to_string(teacher_j) + name.substr(j_end);
}

}  // namespace detail

inline PruneResult prune_config(const UNetConfig& teacher, PruneOptions options = {}) {
  teacher.validate();
  PruneResult r{teacher, {}};
  for (std::size_t i = 0; i < teacher.channel_mults.size(); ++i) {
    auto down = retained_blocks(teacher.blocks_per_level[i]);
    r.student.blocks_per_level[i] = static_cast<int>(down.size());
    r.map.retained_down.push_back(std::move(down));
    std::vector<int> up;
    if (options.prune_up_path) {
      up = retained_blocks(teacher.up_blocks_per_level[i]);
    } else {
      for (int j = 0; j < teacher.up_blocks_per_level[i]; ++j) up.push_back(j);
    }
    r.student.up_blocks_per_level[i] = static_cast<int>(up.size());
    r.map.retained_up.push_back(std::move(up));
  }
  r.student.middle_blocks = 0;
  for (const auto& spec : parameter_specs(r.student)) {
    std::string teacher_name = detail::map_block_name(spec.name, "down", r.map.retained_down);
    if (teacher_name.empty()) teacher_name = detail::map_block_name(spec.name, "up", r.map.retained_up);
    if (teacher_name.empty()) teacher_name = spec.name;
    r.map.entries.push_back({spec.name, teacher_name, spec.shape});
  }
  return r;
}

/// Copies every mapped teacher tensor into a new student store, in student order.
template <class T>
ParameterStore<T> transfer_weights(const ParameterStore<T>& teacher, const PruneMap& map) {
  ParameterStore<T> student;
  for (const auto& e : map.entries) {
    if (!teacher.contains(e.teacher))
      throw TransferError("teacher has no parameter " + e.teacher + " (for " + e.student + ")");
    const auto& t = teacher.get(e.teacher);
    if (t.shape() != e.shape)
      throw TransferError("shape mismatch for " + e.student + ": teacher " + e.teacher + " is " +
                          shape_str(t.shape()) + ", student expects " + shape_str(e.shape));
    student.add(e.student, t);
  }
  return student;
}

inline nlohmann::json to_json(const PruneMap& map) {
  nlohmann::json pairs = nlohmann::json::object();
  nlohmann::json shapes = nlohmann::json::object();
  for (const auto& e : map.entries) {
    pairs[e.student] = e.teacher;
    shapes[e.student] = e.shape;
  }
  return {{"map", pairs},
          {"shapes", shapes},
          {"retained_down", map.retained_down},
          {"retained_up", map.retained_up}};
}

}  // namespace hb
