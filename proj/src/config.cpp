#include "mipilot/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <sstream>

namespace mipilot::config {

namespace pt = boost::property_tree;

namespace {

ConfigFile from_tree(const pt::ptree& tree) {
  ConfigFile cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      cfg.set(section, body.data());
      continue;
    }
    for (const auto& [key, value] : body) cfg.set(section + "." + key, value.data());
  }
  return cfg;
}

template <class T>
void read(const ConfigFile& cfg, const std::string& key, T& dst) {
  const auto v = cfg.get(key);
  if (!v) return;
  std::istringstream is(*v);
  T parsed{};
  if (!(is >> parsed) || !(is >> std::ws).eof())
    throw ArgumentError("config key '" + key + "': cannot parse '" + *v + "'");
  dst = parsed;
}

void read_bool(const ConfigFile& cfg, const std::string& key, bool& dst) {
  const auto v = cfg.get(key);
  if (!v) return;
  if (*v == "1" || *v == "true" || *v == "yes") dst = true;
  else if (*v == "0" || *v == "false" || *v == "no") dst = false;
  else throw ArgumentError("config key '" + key + "': expected a boolean, got '" + *v + "'");
}

}  // namespace

ConfigFile ConfigFile::load(const std::string& path) {
  pt::ptree tree;
  try {
    pt::read_ini(path, tree);
  } catch (const pt::ini_parser_error& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  return from_tree(tree);
}

ConfigFile ConfigFile::parse(const std::string& text) {
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  return from_tree(tree);
}

std::optional<std::string> ConfigFile::get(const std::string& key) const {
  if (auto it = values_.find(key); it != values_.end()) return it->second;
  return std::nullopt;
}

nlohmann::json ConfigFile::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : values_) j[k] = v;
  return j;
}

dsp::FilterSpec filter_spec(const ConfigFile& cfg) {
  dsp::FilterSpec s;
  read(cfg, "filter.order", s.order);
  read(cfg, "filter.cutoff_hz", s.cutoff_hz);
  read(cfg, "filter.sample_rate_hz", s.sample_rate_hz);
  read(cfg, "filter.grid_points", s.grid_points);
  read(cfg, "filter.transition_fraction", s.transition_fraction);
  s.validate();
  return s;
}

atcnet::AtcNetConfig model_config(const ConfigFile& cfg) {
  const auto preset = cfg.get("model.preset").value_or("paper");
  atcnet::AtcNetConfig m;
  if (preset == "desk") m = atcnet::AtcNetConfig::desk();
  else if (preset != "paper") throw ArgumentError("unknown model preset '" + preset + "'");
  read(cfg, "model.samples", m.samples);
  read(cfg, "model.F1", m.cv.F1);
  read(cfg, "model.K_C", m.cv.K_C);
  read(cfg, "model.D", m.cv.D);
  read(cfg, "model.P1", m.cv.P1);
  read(cfg, "model.P2", m.cv.P2);
  read(cfg, "model.separable_kernel", m.cv.separable_kernel);
  read(cfg, "model.cv_dropout", m.cv.dropout);
  read(cfg, "model.heads", m.at.heads);
  read(cfg, "model.key_dim", m.at.key_dim);
  read(cfg, "model.at_dropout", m.at.dropout);
  read_bool(cfg, "model.layer_norm", m.at.use_layer_norm);
  read(cfg, "model.L", m.tc.L);
  read(cfg, "model.K_T", m.tc.K_T);
  read(cfg, "model.filters", m.tc.filters);
  read(cfg, "model.tc_dropout", m.tc.dropout);
  read(cfg, "model.n_windows", m.n_windows);
  if (auto f = cfg.get("model.fusion")) m.fusion = atcnet::fusion_from_string(*f);
  read(cfg, "model.bn_momentum", m.bn_momentum);
  read(cfg, "model.bn_eps", m.bn_eps);
  read(cfg, "model.init_seed", m.init_seed);
  m.validate();
  return m;
}

training::TrainConfig train_config(const ConfigFile& cfg, const std::string& section,
                                   training::TrainConfig base) {
  read(cfg, section + ".epochs", base.epochs);
  read(cfg, section + ".batch_size", base.batch_size);
  read(cfg, section + ".lr", base.lr);
  read(cfg, section + ".weight_decay", base.weight_decay);
  read(cfg, section + ".seed", base.seed);
  read_bool(cfg, section + ".shuffle", base.shuffle);
  base.validate();
  return base;
}

robot::MotionConfig motion_config(const ConfigFile& cfg) {
  robot::MotionConfig m;
  read(cfg, "robot.yaw_rate", m.yaw_rate);
  read(cfg, "robot.forward_speed", m.forward_speed);
  return m;
}

}  // namespace mipilot::config
