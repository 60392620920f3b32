#include <doctest.h>

#include <algorithm>
#include <complex>
#include <random>

#include "cogload/filters.hpp"
#include "cogload/preprocess.hpp"
#include "cogload/rng.hpp"
#include "testutil.hpp"

using namespace cogload;
using testutil::error_code_of;

namespace {

constexpr double kPi = std::numbers::pi;

// Direct evaluation of prod_s B_s(z) / A_s(z) on the unit circle.
double gain_db(const std::vector<Biquad>& sections, double f, double fs) {
  const std::complex<double> z1 = std::exp(std::complex<double>(0.0, -2.0 * kPi * f / fs));
  std::complex<double> h = 1.0;
  for (const auto& s : sections) h *= (s.b0 + s.b1 * z1 + s.b2 * z1 * z1) / (1.0 + s.a1 * z1 + s.a2 * z1 * z1);
  return 20.0 * std::log10(std::abs(h));
}

// Closed-form magnitude of an order-n Butterworth band-pass obtained through a
// prewarped bilinear transform.
double butterworth_bp_mag(double f, double fs, double lo, double hi, int n) {
  auto warp = [fs](double x) { return std::tan(kPi * x / fs); };
  const double w = warp(f), wl = warp(lo), wh = warp(hi);
  const double q = (w * w - wl * wh) / (w * (wh - wl));
  return 1.0 / std::sqrt(1.0 + std::pow(q, 2 * n));
}

// Cascade of direct-form I difference equations.
std::vector<double> df1(const std::vector<Biquad>& sections, std::vector<double> x) {
  for (const auto& s : sections) {
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double x1 = i >= 1 ? x[i - 1] : 0.0, x2 = i >= 2 ? x[i - 2] : 0.0;
      const double y1 = i >= 1 ? y[i - 1] : 0.0, y2 = i >= 2 ? y[i - 2] : 0.0;
      y[i] = s.b0 * x[i] + s.b1 * x1 + s.b2 * x2 - s.a1 * y1 - s.a2 * y2;
    }
    x = std::move(y);
  }
  return x;
}

Trial trial_from(const std::vector<std::vector<double>>& channels, double fs) {
  Trial t = testutil::make_trial(channels.size(), channels[0].size(), fs);
  for (std::size_t c = 0; c < channels.size(); ++c)
    for (std::size_t i = 0; i < channels[c].size(); ++i) t.channel(c)[i] = static_cast<float>(channels[c][i]);
  return t;
}

std::vector<double> channel_of(const Trial& t, std::size_t c) {
  const auto s = t.channel(c);
  return {s.begin(), s.end()};
}

}  // namespace

TEST_CASE("filter bank transfer function at 500 Hz") {
  const FilterBank bank = design_filters(500.0);
  CHECK(gain_db({bank.notch}, 60.0, 500.0) <= -30.0);
  const double g10 = gain_db(bank.sections(), 10.0, 500.0);
  CHECK(g10 >= -1.0);
  CHECK(g10 <= 1.0);
  CHECK(gain_db(bank.sections(), 0.01, 500.0) <= -20.0);
  // library response agrees with direct evaluation
  for (double f : {0.05, 1.0, 10.0, 59.0, 60.0, 61.0, 100.0}) {
    const double direct = std::pow(10.0, gain_db(bank.sections(), f, 500.0) / 20.0);
    CHECK(std::abs(bank.response(f)) == doctest::Approx(direct).epsilon(1e-9).scale(1e-12));
  }
}

TEST_CASE("band-pass magnitude matches the Butterworth closed form") {
  for (double fs : {200.0, 250.0, 500.0}) {
    const FilterBank bank = design_filters(fs);
    CHECK(bank.bandpass.size() == 4);  // order-4 prototype -> 4 band-pass sections
    for (double f : {0.02, 0.1, 0.5, 5.0, 20.0, 60.0, 75.0, 90.0}) {
      if (f >= fs / 2) continue;
      CAPTURE(fs);
      CAPTURE(f);
      const double expect = butterworth_bp_mag(f, fs, 0.1, 75.0, 4);
      CHECK(std::abs(bank.bandpass_response(f)) == doctest::Approx(expect).epsilon(1e-6));
    }
  }
}

TEST_CASE("notch is a Q=30 biquad at 60 Hz") {
  const FilterBank bank = design_filters(500.0);
  CHECK(std::abs(bank.notch_response(60.0)) < 1e-9);
  // -3 dB bandwidth is f0 / Q = 2 Hz
  const double fl = 60.0 - 1.0, fh = 60.0 + 1.0;
  CHECK(std::abs(bank.notch_response(fl)) == doctest::Approx(std::sqrt(0.5)).epsilon(0.02));
  CHECK(std::abs(bank.notch_response(fh)) == doctest::Approx(std::sqrt(0.5)).epsilon(0.02));
  CHECK(std::abs(bank.notch_response(0.0)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("designed sections are stable") {
  for (double fs : {151.0, 200.0, 250.0, 500.0, 1000.0}) {
    for (const auto& s : design_filters(fs).sections()) {
      CHECK(s.max_pole_radius() < 1.0);
      CHECK(std::isfinite(s.b0 + s.b1 + s.b2 + s.a1 + s.a2));
    }
  }
  CHECK(error_code_of([] { design_filters(100.0); }) == Errc::InvalidRate);
  CHECK(error_code_of([] { design_filters(150.0); }) == Errc::InvalidRate);
}

TEST_CASE("filter_trial removes 60 Hz and keeps 10 Hz in phase") {
  const double fs = 500.0;
  const std::size_t n = 5000;
  const auto line = testutil::sine(n, fs, 60.0);
  const auto alpha = testutil::sine(n, fs, 10.0, 1.0, 0.3);
  const Trial out = filter_trial(trial_from({line, alpha}, fs), design_filters(fs));
  CHECK(out.n_samples == n);
  const auto y60 = channel_of(out, 0);
  const auto y10 = channel_of(out, 1);
  const std::size_t edge = 250;
  CHECK(testutil::rms(y60, edge, n - edge) <= 0.03 * testutil::rms(line, edge, n - edge));
  CHECK(testutil::rms(y10, edge, n - edge) == doctest::Approx(testutil::rms(alpha, edge, n - edge)).epsilon(0.02));

  // cross-correlation peak at lag 0
  int best_lag = 0;
  double best = -1e300;
  for (int lag = -5; lag <= 5; ++lag) {
    double s = 0.0;
    for (std::size_t i = edge; i < n - edge; ++i) s += alpha[i] * y10[static_cast<std::size_t>(static_cast<int>(i) + lag)];
    if (s > best) {
      best = s;
      best_lag = lag;
    }
  }
  CHECK(std::abs(best_lag) <= 1);
}

TEST_CASE("zero-phase filtering scales a passband sine by |H|^2") {
  const double fs = 250.0;
  const std::size_t n = 25000;
  const FilterBank bank = design_filters(fs);
  for (double f : {2.0, 30.0, 70.0}) {
    const auto x = testutil::sine(n, fs, f, 1.0, 0.7);
    const auto y = filtfilt(bank.sections(), x);
    const double h2 = std::pow(10.0, gain_db(bank.sections(), f, fs) / 10.0);
    double max_err = 0.0;
    for (std::size_t i = 10000; i < n - 10000; ++i) max_err = std::max(max_err, std::abs(y[i] - h2 * x[i]));
    CAPTURE(f);
    CHECK(max_err < 2e-3);
  }
}

TEST_CASE("filter_trial of zeros is zeros; rate mismatch is rejected") {
  const Trial z = testutil::make_trial(2, 1000, 250.0);
  const Trial out = filter_trial(z, design_filters(250.0));
  CHECK(std::all_of(out.samples.begin(), out.samples.end(), [](float v) { return v == 0.0f; }));
  CHECK(error_code_of([&] { filter_trial(z, design_filters(500.0)); }) == Errc::RateMismatch);
}

TEST_CASE("zero-phase symmetry on a symmetric pulse") {
  const FilterBank bank = design_filters(200.0);
  const std::size_t c = 20000;  // 100 s either side: the 0.1 Hz tail has to die out
  std::vector<double> x(2 * c + 1);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = (static_cast<double>(i) - static_cast<double>(c)) / 15.0;
    x[i] = std::exp(-d * d);
  }
  const auto y = filtfilt(bank.sections(), x);
  double ss = 0.0;
  for (std::size_t k = 0; k <= c; ++k) ss += std::pow(y[c + k] - y[c - k], 2);
  CHECK(std::sqrt(ss / static_cast<double>(c + 1)) <= 1e-9);

  const Trial out = filter_trial(trial_from({x}, 200.0), bank);
  double ss_f = 0.0;
  for (std::size_t k = 0; k <= c; ++k) ss_f += std::pow(out.channel(0)[c + k] - out.channel(0)[c - k], 2);
  CHECK(std::sqrt(ss_f / static_cast<double>(c + 1)) <= 1e-9);
}

TEST_CASE("white noise keeps most of its energy through the band-pass") {
  const FilterBank bank = design_filters(200.0);
  Rng rng(5);
  std::vector<double> x(200000);
  for (auto& v : x) v = rng.normal();
  CausalFilter f(bank.bandpass);
  std::vector<double> y = x;
  f.process(y);
  CHECK(testutil::rms(y, 2000) >= 0.85 * testutil::rms(x, 2000));
}

TEST_CASE("causal filter equals the difference equations and resets") {
  const FilterBank bank = design_filters(200.0);
  Rng rng(9);
  std::vector<double> x(3000);
  for (auto& v : x) v = rng.normal();
  const auto expect = df1(bank.sections(), x);
  CausalFilter f(bank.sections());
  std::vector<double> y;
  for (double v : x) y.push_back(f.step(v));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(expect[i]).epsilon(1e-9).scale(1.0));
  f.reset();
  std::vector<double> again = x;
  f.process(again);
  CHECK(again == y);
}

TEST_CASE("resampling 500 -> 200 Hz follows the analytic sine") {
  const auto x = testutil::sine(500, 500.0, 10.0);
  Trial t = trial_from({x}, 500.0);
  const Trial r = resample_trial(t);
  CHECK(r.fs == 200.0);
  REQUIRE(r.n_samples == 200);
  double max_dev = 0.0;
  for (std::size_t i = 16; i < 200 - 16; ++i) {
    const double expect = std::sin(2.0 * kPi * 10.0 * static_cast<double>(i) / 200.0);
    max_dev = std::max(max_dev, std::abs(r.channel(0)[i] - expect));
  }
  CHECK(max_dev <= 0.01);
}

TEST_CASE("resampler plans, lengths and DC gain") {
  const auto p5 = make_resample_plan(500.0, 200.0);
  CHECK(p5.up == 2);
  CHECK(p5.down == 5);
  CHECK(p5.taps.size() == 64 * 2 + 1);
  const auto p4 = make_resample_plan(250.0, 200.0);
  CHECK(p4.up == 4);
  CHECK(p4.down == 5);
  CHECK(error_code_of([] { resample_trial(testutil::make_trial(1, 10, 300.0)); }) == Errc::UnsupportedRate);
  CHECK(error_code_of([] { make_resample_plan(200.5, 200.0); }) == Errc::UnsupportedRate);
  CHECK(error_code_of([] { resample_trial(testutil::make_trial(1, 10, 1000.0)); }) == Errc::UnsupportedRate);

  for (std::size_t n : {999u, 1000u, 1001u}) {
    const std::vector<double> ones(n, 1.0);
    const auto y = resample(p4, ones);
    CHECK(y.size() == (n * 4 + 4) / 5);  // ceil(n * 4 / 5)
    for (double v : y) CHECK(v == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("resampling at 200 Hz is a bit-exact pass-through") {
  Trial t = testutil::make_trial(2, 333, 200.0);
  Rng rng(1);
  for (auto& v : t.samples) v = static_cast<float>(rng.normal());
  CHECK(resample_trial(t) == t);
}

TEST_CASE("resampler is linear") {
  const auto plan = make_resample_plan(500.0, 200.0);
  Rng rng(3);
  std::vector<double> x(1234), y(1234), mix(1234);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = rng.normal();
    y[i] = rng.normal();
    mix[i] = 2.5 * x[i] - 0.75 * y[i];
  }
  const auto rx = resample(plan, x), ry = resample(plan, y), rm = resample(plan, mix);
  std::vector<double> diff(rm.size());
  for (std::size_t i = 0; i < rm.size(); ++i) diff[i] = rm[i] - (2.5 * rx[i] - 0.75 * ry[i]);
  CHECK(testutil::rms(diff) <= 1e-6);
}

TEST_CASE("center_fix crops and pads around the centre") {
  SUBCASE("100 s") {
    Trial t = testutil::make_trial(1, 20000, 200.0);
    for (std::size_t i = 0; i < 20000; ++i) t.samples[i] = static_cast<float>(i);
    const Segment s = center_fix(t);
    CHECK(s.samples.size() == kSegmentSamples);
    CHECK(s.samples.front() == 1000.0f);
    CHECK(s.samples.back() == 18999.0f);
    CHECK(s.provenance.cropped);
    CHECK_FALSE(s.provenance.padded);
  }
  SUBCASE("80 s") {
    Trial t = testutil::make_trial(1, 16000, 200.0);
    std::fill(t.samples.begin(), t.samples.end(), 1.0f);
    const Segment s = center_fix(t);
    CHECK(std::count(s.samples.begin(), s.samples.begin() + 1000, 0.0f) == 1000);
    CHECK(s.samples[1000] == 1.0f);
    CHECK(s.samples[16999] == 1.0f);
    CHECK(std::count(s.samples.begin() + 17000, s.samples.end(), 0.0f) == 1000);
    CHECK(s.provenance.padded);
  }
  SUBCASE("odd remainders") {
    Trial shorter = testutil::make_trial(1, 17999, 200.0);
    std::fill(shorter.samples.begin(), shorter.samples.end(), 1.0f);
    const Segment s = center_fix(shorter);
    CHECK(s.samples.front() == 1.0f);
    CHECK(s.samples.back() == 0.0f);  // the extra zero goes right
    Trial longer = testutil::make_trial(1, 18003, 200.0);
    for (std::size_t i = 0; i < 18003; ++i) longer.samples[i] = static_cast<float>(i);
    CHECK(center_fix(longer).samples.front() == 1.0f);  // floor(3 / 2)
  }
  SUBCASE("exactly 90 s") {
    Trial t = testutil::make_trial(2, kSegmentSamples, 200.0);
    for (std::size_t i = 0; i < t.samples.size(); ++i) t.samples[i] = static_cast<float>(i % 977);
    const Segment s = center_fix(t);
    CHECK(s.samples == t.samples);
    CHECK_FALSE(s.provenance.cropped);
    CHECK_FALSE(s.provenance.padded);
  }
  CHECK(error_code_of([] { center_fix(testutil::make_trial(1, 100, 250.0)); }) == Errc::RateMismatch);
}

TEST_CASE("windows: shape, overlap, indexing and reconstruction") {
  Trial t = testutil::make_trial(3, kSegmentSamples, 200.0);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < kSegmentSamples; ++i) t.channel(c)[i] = static_cast<float>(i + c * 100000);
  const Segment seg = center_fix(t);
  const WindowTensor w = make_windows(seg);
  CHECK(w.data.size() == kNumWindows * 3 * kWindowSamples);
  for (std::size_t tt = 0; tt < kNumWindows; ++tt) CHECK(w.window(tt, 0)[0] == static_cast<float>(tt * 1600));
  for (std::size_t i = 0; i < 1600; ++i) CHECK(w.window(0, 2)[1600 + i] == w.window(1, 2)[i]);

  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<float> rebuilt;
    for (std::size_t tt = 0; tt < kNumWindows; ++tt) {
      const auto win = w.window(tt, c);
      rebuilt.insert(rebuilt.end(), win.begin(), win.begin() + 1600);
    }
    const auto last = w.window(kNumWindows - 1, c);
    rebuilt.insert(rebuilt.end(), last.begin() + 1600, last.end());
    // ten 16 s windows at an 8 s hop reach 88 s; the last 2 s of the segment are never windowed
    REQUIRE(rebuilt.size() == 17600);
    const auto orig = seg.channel(c);
    CHECK(std::equal(rebuilt.begin(), rebuilt.end(), orig.begin()));
  }
}

TEST_CASE("preprocess_trial produces the 10 x N_E x 3200 tensor from any supported rate") {
  for (double fs : {200.0, 250.0, 500.0}) {
    Trial t = testutil::make_trial(4, static_cast<std::size_t>(95 * fs), fs);
    Rng rng(2);
    for (auto& v : t.samples) v = static_cast<float>(rng.normal());
    const WindowTensor w = preprocess_trial(t);
    CHECK(w.n_channels == 4);
    CHECK(w.data.size() == kNumWindows * 4 * kWindowSamples);
    CHECK(w.fs == 200.0);
  }
}
