#pragma once

#include <complex>
#include <span>
#include <vector>

#include "mipilot/common.hpp"

namespace mipilot::dsp {

struct FilterSpec {
  int order = 64;
  double cutoff_hz = 1.64;
  double sample_rate_hz = kSampleRateHz;
  int grid_points = 4096;
  // Transition band is [cutoff, cutoff * (1 + transition_fraction)], left unweighted.
  double transition_fraction = 1.0;

  // Throws DesignError if any invariant is violated.
  void validate() const;
};

// Linear-phase FIR filter. Immutable after design; safe to share between streams.
class FirFilter {
 public:
  FirFilter(std::vector<double> taps, FilterSpec spec);

  const std::vector<double>& taps() const { return taps_; }
  const FilterSpec& spec() const { return spec_; }
  int order() const { return static_cast<int>(taps_.size()) - 1; }
  double dc_gain() const;

 private:
  std::vector<double> taps_;
  FilterSpec spec_;
};

// Zero-initialized history of the last `order` inputs of one channel.
struct ChannelFilterState {
  std::vector<double> delay_line;  // oldest first
  int channel_index = 0;

  ChannelFilterState(int order, int channel);
};

// Type-I least-squares high-pass: zero on [0, cutoff], one above the transition band.
FirFilter design_highpass_ls(const FilterSpec& spec);

// H(f) = sum_k taps[k] * exp(-j 2 pi f k / fs). Frequencies must lie in [0, fs/2].
std::vector<std::complex<double>> frequency_response(const FirFilter& filter,
                                                     std::span<const double> freqs_hz);

// Causal convolution continued across calls. The output for a sample never depends on how the
// stream was split into blocks.
std::vector<double> apply_streaming(const FirFilter& filter, ChannelFilterState& state,
                                    std::span<const double> block);

// Single-sample form of apply_streaming with identical arithmetic (bit-equal outputs).
double filter_sample(const FirFilter& filter, ChannelFilterState& state, double x);

// Multichannel convenience wrapper: one state per channel, frames pushed one at a time.
class StreamFilter {
 public:
  StreamFilter(FirFilter filter, int channels);

  // Filters one multichannel frame in place.
  void process_frame(std::span<double> frame);
  const FirFilter& filter() const { return filter_; }

 private:
  FirFilter filter_;
  std::vector<ChannelFilterState> states_;
};

}  // namespace mipilot::dsp
