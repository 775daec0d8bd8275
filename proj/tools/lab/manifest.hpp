#pragma once

// One manifest per artifact directory: the command, its resolved options and
// inputs, and a content key that makes identical re-runs a no-op.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace mosaic::lab {

inline constexpr const char* kManifestName = "manifest.json";

struct RunManifest {
  std::string command;
  nlohmann::json options = nlohmann::json::object();  // resolved, enough to replay the command
  nlohmann::json inputs = nlohmann::json::object();   // name -> path
  std::vector<std::string> outputs;                   // relative to the artifact directory
  std::vector<std::uint64_t> seeds;
  std::string input_hash;  // command + options + input contents
  std::string status = "running";
  std::string created;
  std::string finished;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  static RunManifest load(const std::filesystem::path& dir);
  void save(const std::filesystem::path& dir) const;
};

/// Hash of every regular file under `path` (or the file itself), in sorted path order.
std::string hash_path(const std::filesystem::path& path);

std::string utc_timestamp();

enum class Claim { Run, UpToDate };

/// Prepares `dir` for `m`: fills the input hash and creation time, then
/// - returns UpToDate when a complete manifest with the same hash exists and !force;
/// - throws ConfigError when the directory holds a different run and !force;
/// - otherwise writes a "running" manifest and returns Run.
Claim claim(const std::filesystem::path& dir, RunManifest& m, bool force);

/// Marks the manifest complete with the produced outputs.
void complete(const std::filesystem::path& dir, RunManifest& m, std::vector<std::string> outputs);

}  // namespace mosaic::lab
