#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace sdcd::cli {

std::string sha256_file(const std::filesystem::path& path);

// Everything needed to rerun a command: argv, resolved settings, seeds and
// input digests. No timestamps, so reruns produce identical manifests.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json resolved = nlohmann::json::object();
  nlohmann::json seeds = nlohmann::json::object();
  std::map<std::string, std::string> inputs;  // path -> sha256
  std::vector<std::string> outputs;

  void add_input(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;
};

RunManifest read_manifest(const std::filesystem::path& path);

}  // namespace sdcd::cli
