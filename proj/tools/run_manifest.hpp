#pragma once

#include <string>
#include <vector>

#include "splitnet/config_io.hpp"

namespace splitnet::cli {

/// run.ini next to a command's outputs: what ran, with which settings, and
/// the hash of every artifact it produced.
struct RunManifest {
  std::string command;
  Ini config;
  std::uint64_t seed = 0;
  std::vector<std::string> artifacts;  // relative to the output directory
  double wall_time = 0.0;
};

inline constexpr const char* kRunManifestName = "run.ini";

/// Hashes the artifacts and writes run.ini atomically.
void write_run_manifest(const std::string& dir, const RunManifest& run);

/// No-op when the directory has no run.ini. Otherwise every listed artifact
/// must still match its hash (HashMismatch) and exist (IoError).
void check_run_manifest(const std::string& dir);

}  // namespace splitnet::cli
