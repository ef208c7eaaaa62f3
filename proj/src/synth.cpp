#include "mipilot/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <regex>

namespace mipilot::session {

namespace {
std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  return h;
}
}  // namespace

void SynthConfig::validate() const {
  for (const auto& m : signature) {
    if (m.channel < 0 || m.channel >= kChannels)
      throw ArgumentError("signature channel " + std::to_string(m.channel) + " out of range");
    if (!std::isfinite(m.gain) || m.gain < 0) throw ArgumentError("signature gains must be finite");
    if (!(m.center_hz > 0) || !(m.bandwidth_hz > 0)) throw ArgumentError("invalid signature band");
  }
  if (!channel_map.empty()) {
    auto sorted = channel_map;
    std::sort(sorted.begin(), sorted.end());
    for (int c = 0; c < kChannels; ++c)
      if (static_cast<int>(sorted.size()) != kChannels || sorted[c] != c)
        throw ArgumentError("channel map must be a permutation of the 16 channels");
  }
  if (signature.empty()) return;  // pure background is allowed
  auto gain_of = [&](MiClass cls, int ch, double center) {
    double g = 1.0;
    for (const auto& m : signature)
      if (m.cls == cls && m.channel == ch && m.center_hz == center) g *= m.gain;
    return g;
  };
  for (int a = 0; a < kNumClasses; ++a)
    for (int b = a + 1; b < kNumClasses; ++b) {
      bool distinct = false;
      for (const auto& m : signature)
        distinct = distinct || gain_of(static_cast<MiClass>(a), m.channel, m.center_hz) !=
                                   gain_of(static_cast<MiClass>(b), m.channel, m.center_hz);
      if (!distinct)
        throw ArgumentError(std::string("signature does not separate classes ") +
                            class_letter(static_cast<MiClass>(a)) + " and " +
                            class_letter(static_cast<MiClass>(b)));
    }
}

SynthConfig profile(const std::string& name) {
  static const std::regex kPattern(R"(user([A-Za-z0-9]+)_day(\d+))");
  std::smatch m;
  if (!std::regex_match(name, m, kPattern))
    throw ArgumentError("profile '" + name + "' does not match user<ID>_day<N>");
  SynthConfig cfg;
  cfg.user_id = m[1];
  cfg.day = std::stoi(m[2]);
  const auto user_hash = fnv1a(cfg.user_id);
  cfg.seed = user_hash * 1000003u + static_cast<std::uint64_t>(cfg.day);

  // Users differ in their mu/beta peak frequencies and in desynchronization depth.
  double mu = 10.0, beta = 20.0, erd = 0.3;
  if (cfg.user_id == "B") {
    mu = 11.0;
    beta = 22.0;
    erd = 0.35;
  } else if (cfg.user_id != "A") {
    std::mt19937_64 u(user_hash);
    mu = std::uniform_real_distribution<double>(9.0, 12.0)(u);
    beta = 2.0 * mu;
    erd = std::uniform_real_distribution<double>(0.25, 0.4)(u);
  }
  const int left[] = {0, 8, 9, 10};    // C3 C5 FC3 CP3
  const int right[] = {2, 13, 14, 15};  // C4 FC4 CP4 C6
  const int central[] = {1, 11, 12};    // Cz C1 C2
  // Right-hand imagery desynchronizes the left hemisphere and vice versa; kicking acts on the
  // midline with a beta increase.
  for (int c : left) {
    cfg.signature.push_back({MiClass::R, c, mu, 2.0, erd});
    cfg.signature.push_back({MiClass::R, c, beta, 4.0, 0.6});
  }
  for (int c : right) {
    cfg.signature.push_back({MiClass::L, c, mu, 2.0, erd});
    cfg.signature.push_back({MiClass::L, c, beta, 4.0, 0.6});
  }
  for (int c : central) {
    cfg.signature.push_back({MiClass::K, c, mu, 2.0, erd});
    cfg.signature.push_back({MiClass::K, c, beta, 4.0, 2.0});
  }

  if (cfg.day > 0) {
    std::mt19937_64 d(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    cfg.channel_map.resize(kChannels);
    for (int c = 0; c < kChannels; ++c) cfg.channel_map[c] = c;
    std::shuffle(cfg.channel_map.begin(), cfg.channel_map.end(), d);
    cfg.day_depth = std::uniform_real_distribution<double>(0.8, 1.0)(d);
  }
  cfg.validate();
  return cfg;
}

namespace {

// Unit-variance narrowband noise from a two-pole resonator driven by white noise.
struct Resonator {
  double a1 = 0, a2 = 0, gain = 1, y1 = 0, y2 = 0;

  Resonator(double center_hz, double bandwidth_hz, double fs) {
    const double r = std::exp(-std::numbers::pi * bandwidth_hz / fs);
    a1 = 2.0 * r * std::cos(2.0 * std::numbers::pi * center_hz / fs);
    a2 = -r * r;
    const double var = (1.0 - a2) / ((1.0 + a2) * ((1.0 - a2) * (1.0 - a2) - a1 * a1));
    gain = 1.0 / std::sqrt(var);
  }
  double step(double e) {
    const double y = a1 * y1 + a2 * y2 + e;
    y2 = y1;
    y1 = y;
    return gain * y;
  }
};

// Sum of three first-order lowpass processes approximating a 1/f spectrum, unit variance.
struct PinkNoise {
  static constexpr double kPoles[3] = {0.995, 0.95, 0.6};
  double state[3] = {0, 0, 0};

  double step(std::mt19937_64& rng, std::normal_distribution<double>& n) {
    double sum = 0;
    for (int k = 0; k < 3; ++k) {
      const double p = kPoles[k];
      state[k] = p * state[k] + std::sqrt(1.0 - p * p) * n(rng);
      sum += state[k];
    }
    return sum / std::sqrt(3.0);
  }
};

}  // namespace

Recording synth_eeg(const SessionPlan& plan, const SynthConfig& cfg) {
  cfg.validate();
  const double fs = plan.rate_hz;
  const std::int64_t total = plan.total_samples();

  // Distinct bands of the signature; every channel carries each band at baseline amplitude.
  std::vector<std::pair<double, double>> bands;
  for (const auto& m : cfg.signature) {
    std::pair<double, double> b{m.center_hz, m.bandwidth_hz};
    if (std::find(bands.begin(), bands.end(), b) == bands.end()) bands.push_back(b);
  }
  const std::size_t nb = bands.size();
  // gains[class][channel][band]
  std::vector<double> gains(static_cast<std::size_t>(kNumClasses) * kChannels * nb, 1.0);
  auto gain_at = [&](int cls, int ch, std::size_t b) -> double& {
    return gains[(static_cast<std::size_t>(cls) * kChannels + static_cast<std::size_t>(ch)) * nb + b];
  };
  for (const auto& m : cfg.signature) {
    const auto b = static_cast<std::size_t>(
        std::find(bands.begin(), bands.end(), std::pair{m.center_hz, m.bandwidth_hz}) - bands.begin());
    const int ch = cfg.channel_map.empty() ? m.channel : cfg.channel_map[m.channel];
    const double g = 1.0 - (1.0 - m.gain) * cfg.day_depth;
    gain_at(class_index(m.cls), ch, b) *= g;
  }

  std::mt19937_64 rng(plan.seed * 0x2545F4914F6CDD1DULL ^ cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<double> offset(kChannels), slope(kChannels);
  for (int c = 0; c < kChannels; ++c) {
    offset[c] = cfg.dc_offset_uv * unit(rng);
    slope[c] = cfg.drift_uv_per_s * (unit(rng) < 0 ? -1.0 : 1.0);
  }
  std::vector<Resonator> osc;
  for (int c = 0; c < kChannels; ++c)
    for (const auto& [center, bw] : bands) osc.emplace_back(center, bw, fs);
  std::vector<PinkNoise> pink(kChannels);

  // Class active at each sample: cued tasks, otherwise rest (baseline).
  std::vector<std::uint8_t> active(static_cast<std::size_t>(total), class_index(MiClass::N));
  for (const auto& seg : plan.segments())
    std::fill_n(active.begin() + seg.start_index, seg.duration_samples, class_index(seg.label));

  Recording rec;
  rec.rate_hz = plan.rate_hz;
  rec.samples.resize(static_cast<std::size_t>(total) * kChannels);
  rec.cues = plan.cues();
  for (std::int64_t n = 0; n < total; ++n) {
    const int cls = active[static_cast<std::size_t>(n)];
    const double t = static_cast<double>(n) / fs;
    for (int c = 0; c < kChannels; ++c) {
      double v = offset[c] + slope[c] * t;
      v += cfg.background_uv * pink[c].step(rng, normal);
      for (std::size_t b = 0; b < nb; ++b)
        v += cfg.band_amplitude_uv * gain_at(cls, c, b) * osc[c * nb + b].step(normal(rng));
      v += cfg.noise_sigma_uv * normal(rng);
      rec.samples[static_cast<std::size_t>(n) * kChannels + c] = static_cast<float>(v);
    }
  }
  return rec;
}

}  // namespace mipilot::session
