#include "cogload/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>

#include "cogload/error.hpp"

namespace cogload {

namespace {

double bessel_i0(double x) {
  // power series; converges quickly for the arguments used here (<= 8.6)
  double sum = 1.0, term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

constexpr double kKaiserBeta = 8.6;
constexpr int kTapsPerPhase = 64;

bool rate_is(double fs, double value) { return std::abs(fs - value) < 1e-9; }

const FilterBank& bank_for(double fs) {
  static std::mutex m;
  static std::map<double, FilterBank> cache;
  std::lock_guard lock(m);
  auto it = cache.find(fs);
  if (it == cache.end()) it = cache.emplace(fs, design_filters(fs)).first;
  return it->second;
}

}  // namespace

Trial filter_trial(const Trial& trial, const FilterBank& bank) {
  if (!rate_is(trial.fs, bank.design_fs)) {
    throw Error(Errc::RateMismatch, "trial " + trial.key.str() + " at " +
                                        std::to_string(trial.fs) + " Hz, filters designed for " +
                                        std::to_string(bank.design_fs) + " Hz");
  }
  const auto sections = bank.sections();
  Trial out = trial;
  std::vector<double> x(trial.n_samples);
  for (std::size_t c = 0; c < trial.n_channels; ++c) {
    const auto in = trial.channel(c);
    std::copy(in.begin(), in.end(), x.begin());
    const auto y = filtfilt(sections, x);
    auto dst = out.channel(c);
    for (std::size_t i = 0; i < y.size(); ++i) dst[i] = static_cast<float>(y[i]);
  }
  return out;
}

ResamplePlan make_resample_plan(double from_fs, double to_fs) {
  if (!(from_fs > 0.0) || !(to_fs > 0.0)) throw Error(Errc::UnsupportedRate, "rates must be > 0");
  const auto a = std::llround(from_fs);
  const auto b = std::llround(to_fs);
  if (!rate_is(from_fs, static_cast<double>(a)) || !rate_is(to_fs, static_cast<double>(b))) {
    throw Error(Errc::UnsupportedRate, "non-integer sampling rate");
  }
  const auto g = std::gcd(a, b);
  ResamplePlan plan;
  plan.up = static_cast<int>(b / g);
  plan.down = static_cast<int>(a / g);
  if (plan.up == 1 && plan.down == 1) return plan;

  const int len = kTapsPerPhase * plan.up + 1;
  const double half = (len - 1) / 2.0;
  const double cutoff = 0.5 / std::max(plan.up, plan.down);  // cycles per upsampled sample
  const double i0b = bessel_i0(kKaiserBeta);
  plan.taps.resize(static_cast<std::size_t>(len));
  for (int k = 0; k < len; ++k) {
    const double m = k - half;
    const double arg = 2.0 * cutoff * m;
    const double sinc = m == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
    const double r = m / half;
    const double win = bessel_i0(kKaiserBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0b;
    plan.taps[static_cast<std::size_t>(k)] = 2.0 * cutoff * sinc * win;
  }
  const double sum = std::accumulate(plan.taps.begin(), plan.taps.end(), 0.0);
  for (auto& t : plan.taps) t *= plan.up / sum;
  return plan;
}

std::vector<double> resample(const ResamplePlan& plan, std::span<const double> x) {
  if (plan.up == 1 && plan.down == 1) return {x.begin(), x.end()};
  const auto n = static_cast<std::int64_t>(x.size());
  if (n == 0) return {};
  const std::int64_t L = plan.up, M = plan.down;
  const auto len = static_cast<std::int64_t>(plan.taps.size());
  const std::int64_t delay = (len - 1) / 2;
  const std::int64_t n_out = (n * L + M - 1) / M;

  auto at = [&](std::int64_t i) -> double {
    // odd reflection about the end samples
    if (i < 0) {
      const std::int64_t j = std::min<std::int64_t>(-i, n - 1);
      return 2.0 * x[0] - x[static_cast<std::size_t>(j)];
    }
    if (i >= n) {
      const std::int64_t j = std::max<std::int64_t>(2 * (n - 1) - i, 0);
      return 2.0 * x[static_cast<std::size_t>(n - 1)] - x[static_cast<std::size_t>(j)];
    }
    return x[static_cast<std::size_t>(i)];
  };

  std::vector<double> y(static_cast<std::size_t>(n_out));
  for (std::int64_t m = 0; m < n_out; ++m) {
    const std::int64_t centre = m * M + delay;  // position in the upsampled stream
    // taps k with (centre - k) divisible by L
    std::int64_t k = ((centre % L) + L) % L;
    double acc = 0.0;
    for (; k < len; k += L) acc += plan.taps[static_cast<std::size_t>(k)] * at((centre - k) / L);
    y[static_cast<std::size_t>(m)] = acc;
  }
  return y;
}

Trial resample_trial(const Trial& trial, double target_fs) {
  const bool supported = rate_is(trial.fs, 200.0) || rate_is(trial.fs, 250.0) || rate_is(trial.fs, 500.0);
  if (!supported || !rate_is(target_fs, kTargetFs)) {
    throw Error(Errc::UnsupportedRate, "cannot resample " + std::to_string(trial.fs) + " Hz to " +
                                           std::to_string(target_fs) + " Hz");
  }
  if (rate_is(trial.fs, target_fs)) return trial;
  const auto plan = make_resample_plan(trial.fs, target_fs);
  Trial out;
  out.key = trial.key;
  out.cohort = trial.cohort;
  out.fs = target_fs;
  out.n_channels = trial.n_channels;
  std::vector<double> x(trial.n_samples);
  for (std::size_t c = 0; c < trial.n_channels; ++c) {
    const auto in = trial.channel(c);
    std::copy(in.begin(), in.end(), x.begin());
    const auto y = resample(plan, x);
    if (c == 0) {
      out.n_samples = y.size();
      out.samples.resize(out.n_channels * out.n_samples);
    }
    auto dst = out.channel(c);
    for (std::size_t i = 0; i < y.size(); ++i) dst[i] = static_cast<float>(y[i]);
  }
  return out;
}

Segment center_fix(const Trial& trial) {
  if (!rate_is(trial.fs, kTargetFs)) {
    throw Error(Errc::RateMismatch, "centre fix expects 200 Hz, got " + std::to_string(trial.fs));
  }
  Segment seg;
  seg.n_channels = trial.n_channels;
  seg.samples.assign(trial.n_channels * kSegmentSamples, 0.0f);
  seg.provenance = {trial.key, trial.cohort, false, false};
  const std::size_t n = trial.n_samples;
  for (std::size_t c = 0; c < trial.n_channels; ++c) {
    const auto src = trial.channel(c);
    auto* dst = seg.samples.data() + c * kSegmentSamples;
    if (n >= kSegmentSamples) {
      const std::size_t start = (n - kSegmentSamples) / 2;
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(start), kSegmentSamples, dst);
    } else {
      const std::size_t left = (kSegmentSamples - n) / 2;
      std::copy(src.begin(), src.end(), dst + left);
    }
  }
  seg.provenance.cropped = n > kSegmentSamples;
  seg.provenance.padded = n < kSegmentSamples;
  return seg;
}

WindowTensor make_windows(const Segment& seg) {
  if (seg.samples.size() != seg.n_channels * kSegmentSamples || !rate_is(seg.fs, kTargetFs)) {
    throw Error(Errc::DimensionMismatch, "segment must be 18000 samples at 200 Hz");
  }
  WindowTensor w;
  w.n_channels = seg.n_channels;
  w.provenance = seg.provenance;
  w.data.resize(kNumWindows * seg.n_channels * kWindowSamples);
  for (std::size_t t = 0; t < kNumWindows; ++t) {
    for (std::size_t c = 0; c < seg.n_channels; ++c) {
      const auto src = seg.channel(c).subspan(t * kHopSamples, kWindowSamples);
      std::copy(src.begin(), src.end(), w.window(t, c).begin());
    }
  }
  return w;
}

WindowTensor preprocess_trial(const Trial& trial) {
  const Trial filtered = filter_trial(trial, bank_for(trial.fs));
  const Trial at200 = resample_trial(filtered, kTargetFs);
  return make_windows(center_fix(at200));
}

Trial segment_as_trial(const Segment& seg) {
  Trial t;
  t.key = seg.provenance.key;
  t.cohort = seg.provenance.cohort;
  t.fs = seg.fs;
  t.n_channels = seg.n_channels;
  t.n_samples = kSegmentSamples;
  t.samples = seg.samples;
  return t;
}

}  // namespace cogload
