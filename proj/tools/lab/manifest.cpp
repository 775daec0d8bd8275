#include "manifest.hpp"

#include <algorithm>
#include <ctime>
#include <fstream>
#include <sstream>

#include "mosaic/common.hpp"

namespace mosaic::lab {
namespace fs = std::filesystem;

nlohmann::json RunManifest::to_json() const {
  return {{"format", "mosaic-manifest"},
          {"version", 1},
          {"command", command},
          {"options", options},
          {"inputs", inputs},
          {"outputs", outputs},
          {"seeds", seeds},
          {"input_hash", input_hash},
          {"status", status},
          {"created", created},
          {"finished", finished}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "mosaic-manifest") throw DataError("not a run manifest");
  RunManifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.options = j.value("options", nlohmann::json::object());
    m.inputs = j.value("inputs", nlohmann::json::object());
    m.outputs = j.value("outputs", std::vector<std::string>{});
    m.seeds = j.value("seeds", std::vector<std::uint64_t>{});
    m.input_hash = j.value("input_hash", std::string());
    m.status = j.value("status", std::string("running"));
    m.created = j.value("created", std::string());
    m.finished = j.value("finished", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

RunManifest RunManifest::load(const fs::path& dir) {
  const auto path = fs::is_directory(dir) ? dir / kManifestName : dir;
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("manifest " + path.string() + " is not JSON: " + e.what());
  }
}

void RunManifest::save(const fs::path& dir) const {
  fs::create_directories(dir);
  const auto tmp = dir / (std::string(kManifestName) + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw RuntimeFailure("cannot write " + tmp.string());
    out << to_json().dump(2) << '\n';
  }
  fs::rename(tmp, dir / kManifestName);
}

std::string hash_path(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("input not found: " + path.string());
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::recursive_directory_iterator(path))
      if (e.is_regular_file() && e.path().filename() != kManifestName) files.push_back(e.path());
  } else {
    files.push_back(path);
  }
  std::sort(files.begin(), files.end());
  std::string acc;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::ostringstream bytes;
    bytes << in.rdbuf();
    acc += fs::relative(f, fs::is_directory(path) ? path : path.parent_path()).generic_string();
    acc.push_back('\0');
    acc += content_hash(bytes.str());
  }
  return content_hash(acc);
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Claim claim(const fs::path& dir, RunManifest& m, bool force) {
  std::string key = m.command + '\n' + m.options.dump() + '\n';
  for (const auto& [name, path] : m.inputs.items())
    if (path.is_string()) key += name + '=' + hash_path(path.get<std::string>()) + '\n';
  m.input_hash = content_hash(key);
  m.created = utc_timestamp();
  m.status = "running";

  if (fs::exists(dir / kManifestName) && !force) {
    const auto old = RunManifest::load(dir);
    if (old.input_hash == m.input_hash && old.status == "complete") {
      m = old;
      return Claim::UpToDate;
    }
    if (old.input_hash != m.input_hash)
      throw ConfigError(dir.string() + " already holds a different " + old.command + " run; pass --force to replace it");
  }
  m.save(dir);
  return Claim::Run;
}

void complete(const fs::path& dir, RunManifest& m, std::vector<std::string> outputs) {
  std::sort(outputs.begin(), outputs.end());
  m.outputs = std::move(outputs);
  m.status = "complete";
  m.finished = utc_timestamp();
  m.save(dir);
}

}  // namespace mosaic::lab
