#include "run_manifest.hpp"

#include <filesystem>

#include "splitnet/checkpoint.hpp"
#include "splitnet/error.hpp"

namespace splitnet::cli {

namespace fs = std::filesystem;

void write_run_manifest(const std::string& dir, const RunManifest& run) {
  Ini ini;
  ini_set(ini, "run", "command", run.command);
  ini_set(ini, "run", "seed", std::to_string(run.seed));
  ini_set(ini, "run", "wall_time", format_double(run.wall_time));
  for (const auto& [section, body] : run.config) {
    for (const auto& [key, value] : body) ini_set(ini, "config." + section, key, value.data());
  }
  for (std::size_t i = 0; i < run.artifacts.size(); ++i) {
    const std::string sec = "artifact." + std::to_string(i);
    ini_set(ini, sec, "path", run.artifacts[i]);
    ini_set(ini, sec, "sha256", sha256_file((fs::path(dir) / run.artifacts[i]).string()));
  }
  write_ini((fs::path(dir) / kRunManifestName).string(), ini);
}

void check_run_manifest(const std::string& dir) {
  const fs::path path = fs::path(dir) / kRunManifestName;
  if (!fs::exists(path)) return;
  const Ini ini = read_ini(path.string());
  for (const auto& [section, body] : ini) {
    if (section.rfind("artifact.", 0) != 0) continue;
    const auto rel = body.get_optional<std::string>("path");
    const auto hash = body.get_optional<std::string>("sha256");
    if (!rel || !hash) throw IoError(path.string() + ": [" + section + "] is incomplete");
    const fs::path file = fs::path(dir) / *rel;
    if (!fs::exists(file)) throw IoError("artifact " + file.string() + " listed in " + path.string() + " is missing");
    if (sha256_file(file.string()) != *hash)
      throw HashMismatch("artifact " + file.string() + " no longer matches the hash in " + path.string());
  }
}

}  // namespace splitnet::cli
