#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "doctest.h"
#include "mipilot/dsp.hpp"

using namespace mipilot;
using namespace mipilot::dsp;

namespace {

// Direct evaluation of the causal convolution sum, used as an independent reference.
std::vector<double> naive_convolve(const std::vector<double>& h, const std::vector<double>& x) {
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t n = 0; n < x.size(); ++n)
    for (std::size_t m = 0; m < h.size() && m <= n; ++m) y[n] += h[m] * x[n - m];
  return y;
}

double magnitude_at(const FirFilter& f, double hz) {
  const double taps_sum_re = [&] {
    double re = 0, im = 0;
    for (std::size_t k = 0; k < f.taps().size(); ++k) {
      const double w = 2 * std::numbers::pi * hz * static_cast<double>(k) / f.spec().sample_rate_hz;
      re += f.taps()[k] * std::cos(w);
      im -= f.taps()[k] * std::sin(w);
    }
    return std::hypot(re, im);
  }();
  return taps_sum_re;
}

const FirFilter& designed() {
  static const FirFilter f = design_highpass_ls(FilterSpec{});
  return f;
}

}  // namespace

TEST_CASE("design: 65 symmetric taps with small DC gain") {
  const auto& f = designed();
  REQUIRE(f.taps().size() == 65);
  double sum = 0;
  for (double t : f.taps()) sum += t;
  CHECK(std::abs(sum) <= 0.05);
  for (int k = 0; k <= 64; ++k) CHECK(std::abs(f.taps()[k] - f.taps()[64 - k]) <= 1e-9);
  // Value from an independent dense least-squares solve of the same grid.
  CHECK(sum == doctest::Approx(-0.011096774164644).epsilon(1e-9));
}

TEST_CASE("design: passband gain") {
  const auto& f = designed();
  const double m25 = magnitude_at(f, 25.0);
  CHECK(m25 >= 0.9);
  CHECK(m25 <= 1.1);
  for (double hz = 12.0; hz <= 125.0; hz += 0.5) {
    const double m = magnitude_at(f, hz);
    CHECK(m >= 0.85);
    CHECK(m <= 1.15);
  }
}

TEST_CASE("design: near-zero cutoff gives an impulse") {
  FilterSpec s;
  s.cutoff_hz = 1e-9;
  s.transition_fraction = 0.0;
  const auto f = design_highpass_ls(s);
  for (int k = 0; k <= s.order; ++k) CHECK(std::abs(f.taps()[k] - (k == 32 ? 1.0 : 0.0)) <= 2e-2);
}

TEST_CASE("design: invalid specs are rejected") {
  FilterSpec s;
  s.cutoff_hz = 125.0;
  CHECK_THROWS_AS(design_highpass_ls(s), DesignError);
  s = {};
  s.order = 63;
  CHECK_THROWS_AS(design_highpass_ls(s), DesignError);
  s = {};
  s.grid_points = 100;
  CHECK_THROWS_AS(design_highpass_ls(s), DesignError);
}

TEST_CASE("frequency response") {
  FilterSpec s;
  s.order = 2;
  s.grid_points = 64;
  FirFilter impulse({1.0, 0.0, 0.0}, s);
  std::vector<double> freqs{0.0, 10.0, 60.0, 125.0};
  for (auto h : frequency_response(impulse, freqs)) CHECK(std::abs(h) == doctest::Approx(1.0));

  FirFilter avg({0.5, 0.5, 0.0}, s);
  std::vector<double> dc{0.0};
  CHECK(frequency_response(avg, dc)[0].real() == doctest::Approx(1.0));
  CHECK(frequency_response(avg, dc)[0].imag() == doctest::Approx(0.0));

  CHECK(std::abs(frequency_response(designed(), dc)[0]) <= 0.05);
  std::vector<double> bad{-1.0};
  CHECK_THROWS_AS(frequency_response(designed(), bad), ArgumentError);
  std::vector<double> above{125.5};
  CHECK_THROWS_AS(frequency_response(designed(), above), ArgumentError);

  // Agrees with direct evaluation.
  std::vector<double> f25{25.0};
  CHECK(std::abs(frequency_response(designed(), f25)[0]) == doctest::Approx(magnitude_at(designed(), 25.0)));
}

TEST_CASE("streaming: impulse, constant input and the naive sum") {
  const auto& f = designed();
  ChannelFilterState st(f.order(), 0);
  std::vector<double> impulse(100, 0.0);
  impulse[0] = 1.0;
  const auto y = apply_streaming(f, st, impulse);
  for (int k = 0; k <= 64; ++k) CHECK(y[k] == f.taps()[k]);
  for (int k = 65; k < 100; ++k) CHECK(y[k] == 0.0);

  ChannelFilterState st2(f.order(), 0);
  std::vector<double> constant(300, 40.0);
  const auto yc = apply_streaming(f, st2, constant);
  for (std::size_t n = 65; n < yc.size(); ++n) CHECK(std::abs(yc[n]) <= 0.05 * 40.0);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  std::vector<double> x(500);
  for (auto& v : x) v = nd(rng);
  ChannelFilterState st3(f.order(), 0);
  const auto ys = apply_streaming(f, st3, x);
  const auto yn = naive_convolve(f.taps(), x);
  for (std::size_t n = 0; n < x.size(); ++n) CHECK(ys[n] == doctest::Approx(yn[n]).epsilon(1e-12));

  ChannelFilterState st4(f.order(), 0);
  CHECK(apply_streaming(f, st4, std::span<const double>{}).empty());
}

TEST_CASE("streaming: any block split is bit-exact") {
  const auto& f = designed();
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd(0.0, 30.0);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<double> x(400 + trial * 7);
    for (auto& v : x) v = nd(rng);
    ChannelFilterState whole(f.order(), 0);
    const auto ref = apply_streaming(f, whole, x);

    ChannelFilterState parts(f.order(), 0);
    std::vector<double> got;
    std::size_t pos = 0;
    std::uniform_int_distribution<std::size_t> cut(0, 90);
    while (pos < x.size()) {
      const std::size_t n = std::min(cut(rng), x.size() - pos);
      const auto y = apply_streaming(f, parts, std::span<const double>(x).subspan(pos, n));
      got.insert(got.end(), y.begin(), y.end());
      pos += n;
    }
    REQUIRE(got.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) REQUIRE(got[i] == ref[i]);

    ChannelFilterState single(f.order(), 0);
    for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(filter_sample(f, single, x[i]) == ref[i]);
  }
}

TEST_CASE("streaming: linearity") {
  const auto& f = designed();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  std::vector<double> x(300), z(300), mix(300);
  const double a = 1.7, b = -0.4;
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = nd(rng);
    z[i] = nd(rng);
    mix[i] = a * x[i] + b * z[i];
  }
  ChannelFilterState s1(64, 0), s2(64, 0), s3(64, 0);
  const auto fx = apply_streaming(f, s1, x);
  const auto fz = apply_streaming(f, s2, z);
  const auto fm = apply_streaming(f, s3, mix);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(fm[i] == doctest::Approx(a * fx[i] + b * fz[i]).epsilon(1e-10));
}

TEST_CASE("streaming: group delay of M/2 samples on a passband sine") {
  const auto& f = designed();
  const double hz = 20.0, fs = 250.0;
  std::vector<double> x(2000);
  for (std::size_t n = 0; n < x.size(); ++n) x[n] = std::sin(2 * std::numbers::pi * hz * n / fs);
  ChannelFilterState st(64, 0);
  const auto y = apply_streaming(f, st, x);
  // Linear phase: the response is a pure delay of 32 samples times the passband gain.
  std::vector<double> fq{hz, 7.0, 40.0};
  const auto h = frequency_response(f, fq);
  for (std::size_t i = 0; i < fq.size(); ++i) {
    const double expect = -2 * std::numbers::pi * fq[i] * 32.0 / fs;
    CHECK(std::abs(std::remainder(std::arg(h[i]) - expect, 2 * std::numbers::pi)) <= 1e-9);
  }
  const auto gain = magnitude_at(f, hz);
  for (std::size_t n = 200; n < 1900; ++n)
    REQUIRE(std::abs(y[n] - gain * x[n - 32]) <= 1e-9);
}

TEST_CASE("multichannel stream filter keeps channels separate") {
  StreamFilter sf(designed(), 3);
  std::vector<ChannelFilterState> ref;
  for (int c = 0; c < 3; ++c) ref.emplace_back(64, c);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  for (int n = 0; n < 200; ++n) {
    std::array<double, 3> frame{nd(rng), nd(rng), nd(rng)};
    std::array<double, 3> expect;
    for (int c = 0; c < 3; ++c) expect[c] = filter_sample(designed(), ref[c], frame[c]);
    sf.process_frame(frame);
    for (int c = 0; c < 3; ++c) REQUIRE(frame[c] == expect[c]);
  }
}
