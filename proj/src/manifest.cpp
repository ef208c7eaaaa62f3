#include "mipilot/manifest.hpp"

#include <openssl/evp.h>

#include <filesystem>

#include "mipilot/binary_io.hpp"

namespace mipilot::manifest {

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw StateError("SHA-256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string sha256_file(const std::string& path) { return sha256_hex(io::read_file(path)); }

std::string manifest_path_for(const std::string& output) { return output + ".manifest.json"; }

nlohmann::json RunManifest::to_json() const {
  nlohmann::json in = nlohmann::json::array();
  for (const auto& p : inputs) {
    nlohmann::json e{{"path", p}, {"sha256", sha256_file(p)}};
    const auto upstream = manifest_path_for(p);
    if (std::filesystem::exists(upstream)) e["manifest_sha256"] = sha256_file(upstream);
    in.push_back(std::move(e));
  }
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : outputs) out.push_back({{"path", p}, {"sha256", sha256_file(p)}});
  return {{"format", "mipilot-manifest/1"},
          {"tool_version", kToolVersion},
          {"command", command},
          {"config", config},
          {"seeds", seeds},
          {"inputs", std::move(in)},
          {"outputs", std::move(out)}};
}

std::string RunManifest::write() const {
  if (outputs.empty()) throw StateError("manifest without outputs");
  const auto path = manifest_path_for(outputs.front());
  const auto text = to_json().dump(2) + "\n";
  io::write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
  return path;
}

}  // namespace mipilot::manifest
