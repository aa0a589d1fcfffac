#pragma once

#include <stdexcept>
#include <string>

namespace hb {

// Error taxonomy shared by every module. The CLI maps these onto exit codes.

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

/// Solver was asked to step forward in time (s >= t).
struct OrderingError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Timestep is not on (or is below) the distillation grid.
struct GridError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct TransferError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A prerequisite artifact (checkpoint, manifest) is not on disk.
struct MissingArtifact : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RewardError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace hb
