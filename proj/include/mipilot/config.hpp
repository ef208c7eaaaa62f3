#pragma once

#include <map>
#include <optional>
#include <string>

#include "json.hpp"
#include "mipilot/atcnet.hpp"
#include "mipilot/dsp.hpp"
#include "mipilot/robot.hpp"
#include "mipilot/training.hpp"

namespace mipilot::config {

// "key = value" text with [section] headers. Keys are addressed as "section.key".
class ConfigFile {
 public:
  ConfigFile() = default;
  static ConfigFile load(const std::string& path);
  static ConfigFile parse(const std::string& text);

  std::optional<std::string> get(const std::string& key) const;
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& values() const { return values_; }
  nlohmann::json to_json() const;

 private:
  std::map<std::string, std::string> values_;
};

// Section readers; missing keys keep their defaults, malformed values throw ArgumentError.
dsp::FilterSpec filter_spec(const ConfigFile& cfg);
// [model] preset = paper | desk, then any AtcNetConfig key as an override.
atcnet::AtcNetConfig model_config(const ConfigFile& cfg);
// Section `section` ("pretrain" or "finetune") on top of `base`.
training::TrainConfig train_config(const ConfigFile& cfg, const std::string& section,
                                   training::TrainConfig base);
robot::MotionConfig motion_config(const ConfigFile& cfg);

}  // namespace mipilot::config
