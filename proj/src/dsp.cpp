#include "mipilot/dsp.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace mipilot::dsp {

void FilterSpec::validate() const {
  if (order < 2 || order % 2 != 0)
    throw DesignError("filter order must be even and >= 2, got " + std::to_string(order));
  if (!(sample_rate_hz > 0)) throw DesignError("sample rate must be positive");
  const double nyquist = sample_rate_hz / 2;
  if (!(cutoff_hz > 0) || cutoff_hz >= nyquist)
    throw DesignError("cutoff " + std::to_string(cutoff_hz) + " Hz outside (0, " +
                      std::to_string(nyquist) + ")");
  if (grid_points < 8 * (order + 1))
    throw DesignError("design grid needs at least " + std::to_string(8 * (order + 1)) + " points");
  if (!(transition_fraction >= 0)) throw DesignError("transition fraction must be >= 0");
}

FirFilter::FirFilter(std::vector<double> taps, FilterSpec spec)
    : taps_(std::move(taps)), spec_(spec) {
  if (taps_.empty()) throw DesignError("filter needs at least one tap");
  for (double t : taps_)
    if (!std::isfinite(t)) throw DesignError("non-finite filter tap");
}

double FirFilter::dc_gain() const { return std::accumulate(taps_.begin(), taps_.end(), 0.0); }

ChannelFilterState::ChannelFilterState(int order, int channel)
    : delay_line(static_cast<std::size_t>(order), 0.0), channel_index(channel) {}

FirFilter design_highpass_ls(const FilterSpec& spec) {
  spec.validate();
  // Amplitude response of a symmetric filter of even order M:
  //   A(w) = a0 + sum_{k=1}^{M/2} a_k cos(k w),  h[M/2] = a0,  h[M/2 +- k] = a_k / 2.
  const int half = spec.order / 2;
  const double nyquist = spec.sample_rate_hz / 2;
  const double pass_edge = spec.cutoff_hz * (1.0 + spec.transition_fraction);

  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(half + 1, half + 1);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(half + 1);
  Eigen::VectorXd basis(half + 1);
  for (int g = 0; g < spec.grid_points; ++g) {
    const double f = nyquist * g / (spec.grid_points - 1);
    double desired;
    if (f <= spec.cutoff_hz) {
      desired = 0.0;
    } else if (f >= pass_edge) {
      desired = 1.0;
    } else {
      continue;  // transition band carries no weight
    }
    const double w = 2.0 * std::numbers::pi * f / spec.sample_rate_hz;
    for (int k = 0; k <= half; ++k) basis[k] = std::cos(k * w);
    gram.noalias() += basis * basis.transpose();
    rhs += desired * basis;
  }

  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() <= 1e-12 * ldlt.vectorD().maxCoeff()) {
    throw DesignError("least-squares normal equations are singular");
  }
  const Eigen::VectorXd a = ldlt.solve(rhs);
  if (!a.allFinite()) throw DesignError("least-squares solve produced non-finite coefficients");

  std::vector<double> taps(static_cast<std::size_t>(spec.order) + 1, 0.0);
  taps[half] = a[0];
  for (int k = 1; k <= half; ++k) {
    taps[half - k] = a[k] / 2;
    taps[half + k] = a[k] / 2;
  }
  return FirFilter(std::move(taps), spec);
}

std::vector<std::complex<double>> frequency_response(const FirFilter& filter,
                                                     std::span<const double> freqs_hz) {
  const double fs = filter.spec().sample_rate_hz;
  std::vector<std::complex<double>> out;
  out.reserve(freqs_hz.size());
  for (double f : freqs_hz) {
    if (!(f >= 0.0 && f <= fs / 2))
      throw ArgumentError("frequency " + std::to_string(f) + " Hz outside [0, Nyquist]");
    std::complex<double> h{0.0, 0.0};
    const auto& taps = filter.taps();
    for (std::size_t k = 0; k < taps.size(); ++k) {
      h += taps[k] * std::polar(1.0, -2.0 * std::numbers::pi * f * static_cast<double>(k) / fs);
    }
    out.push_back(h);
  }
  return out;
}

std::vector<double> apply_streaming(const FirFilter& filter, ChannelFilterState& state,
                                    std::span<const double> block) {
  const auto& taps = filter.taps();
  const std::size_t order = taps.size() - 1;
  if (state.delay_line.size() != order)
    throw StateError("filter state holds " + std::to_string(state.delay_line.size()) +
                     " samples, filter order is " + std::to_string(order));
  if (block.empty()) return {};

  // history = [x(n-M) ... x(n-1)] followed by the block, so x(n - m) = history[order + n - m].
  std::vector<double> history(order + block.size());
  std::copy(state.delay_line.begin(), state.delay_line.end(), history.begin());
  std::copy(block.begin(), block.end(), history.begin() + static_cast<std::ptrdiff_t>(order));

  std::vector<double> out(block.size());
  for (std::size_t n = 0; n < block.size(); ++n) {
    const double* x = history.data() + order + n;
    double acc = 0.0;
    for (std::size_t m = 0; m <= order; ++m) acc += taps[m] * *(x - m);
    out[n] = acc;
  }
  std::copy(history.end() - static_cast<std::ptrdiff_t>(order), history.end(),
            state.delay_line.begin());
  return out;
}

double filter_sample(const FirFilter& filter, ChannelFilterState& state, double x) {
  const auto& taps = filter.taps();
  const std::size_t order = taps.size() - 1;
  auto& line = state.delay_line;
  if (line.size() != order) throw StateError("filter state does not match filter order");
  double acc = 0.0;
  acc += taps[0] * x;
  for (std::size_t m = 1; m <= order; ++m) acc += taps[m] * line[order - m];
  if (order > 0) {
    std::move(line.begin() + 1, line.end(), line.begin());
    line.back() = x;
  }
  return acc;
}

StreamFilter::StreamFilter(FirFilter filter, int channels) : filter_(std::move(filter)) {
  states_.reserve(static_cast<std::size_t>(channels));
  for (int c = 0; c < channels; ++c) states_.emplace_back(filter_.order(), c);
}

void StreamFilter::process_frame(std::span<double> frame) {
  if (frame.size() != states_.size())
    throw ShapeError("frame has " + std::to_string(frame.size()) + " channels, filter expects " +
                     std::to_string(states_.size()));
  for (std::size_t c = 0; c < frame.size(); ++c) frame[c] = filter_sample(filter_, states_[c], frame[c]);
}

}  // namespace mipilot::dsp
