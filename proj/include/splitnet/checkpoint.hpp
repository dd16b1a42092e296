#pragma once

#include <span>
#include <string>

#include "splitnet/config_io.hpp"
#include "splitnet/controls.hpp"
#include "splitnet/solver_config.hpp"

namespace splitnet {

inline constexpr int kCheckpointVersion = 1;

/// A trained (or initial) solver: configuration, control variables and the
/// free-form [meta] section (creation time, seed, epochs completed, ...).
struct Checkpoint {
  SolverConfig config;
  ControlVariables theta;
  Ini meta;
};

std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_file(const std::string& path);

/// Writes `dir`/manifest.ini plus one field blob per tensor. The manifest is
/// written last, so a directory without one is never a valid checkpoint.
void save_checkpoint(const std::string& dir, const Checkpoint& ckpt);

/// Throws UnsupportedVersion for an unknown format_version, HashMismatch
/// when a blob differs from its recorded hash, ValidationError when shapes
/// disagree with the stored config, IoError for missing files.
Checkpoint load_checkpoint(const std::string& dir);

}  // namespace splitnet
