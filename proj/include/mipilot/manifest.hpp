#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace mipilot::manifest {

inline constexpr const char* kToolVersion = "mipilot 0.1.0";

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_file(const std::string& path);

// Record written next to every output: what ran, with which settings, on which inputs.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json seeds = nlohmann::json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;

  // Digests every input and output file. An input with its own manifest is linked by that
  // manifest's digest, so manifests form a chain.
  nlohmann::json to_json() const;
  // Writes `<primary output>.manifest.json` and returns its path.
  std::string write() const;
};

std::string manifest_path_for(const std::string& output);

}  // namespace mipilot::manifest
