#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cogload/dataset.hpp"
#include "cogload/filters.hpp"

namespace cogload {

inline constexpr double kTargetFs = 200.0;
inline constexpr std::size_t kSegmentSamples = 18000;  // 90 s at 200 Hz
inline constexpr std::size_t kWindowSamples = 3200;    // 16 s
inline constexpr std::size_t kHopSamples = 1600;       // 50% overlap
inline constexpr std::size_t kNumWindows = 10;         // (90 - 16) / 8 + 1
inline constexpr std::size_t kSecondSamples = 200;
inline constexpr std::size_t kSecondsPerWindow = 16;

struct Provenance {
  TrialKey key;
  char cohort{'A'};
  bool cropped{false};
  bool padded{false};
  bool operator==(const Provenance&) const = default;
};

struct Segment {
  std::size_t n_channels{0};
  std::vector<float> samples;  // channel-major, n_channels * kSegmentSamples
  double fs{kTargetFs};
  Provenance provenance;

  std::span<const float> channel(std::size_t c) const {
    return {samples.data() + c * kSegmentSamples, kSegmentSamples};
  }
};

// x in R^{N_T x N_E x N_S}, stored [window][channel][sample].
struct WindowTensor {
  std::size_t n_channels{0};
  std::vector<float> data;
  double fs{kTargetFs};
  Provenance provenance;

  std::span<const float> window(std::size_t t, std::size_t c) const {
    return {data.data() + (t * n_channels + c) * kWindowSamples, kWindowSamples};
  }
  std::span<float> window(std::size_t t, std::size_t c) {
    return {data.data() + (t * n_channels + c) * kWindowSamples, kWindowSamples};
  }
  bool operator==(const WindowTensor&) const = default;
};

// Zero-phase band-pass + notch, per channel. Throws RateMismatch when the
// bank was designed for another rate.
Trial filter_trial(const Trial& trial, const FilterBank& bank);

// Polyphase rational resampler (up L, down M) with a Kaiser-windowed sinc
// prototype (beta 8.6, 64 taps per phase, plus one centre tap). Output has
// ceil(n * L / M) samples; edges use odd reflection.
struct ResamplePlan {
  int up{1};
  int down{1};
  std::vector<double> taps;  // prototype at the upsampled rate, gain `up`
};
ResamplePlan make_resample_plan(double from_fs, double to_fs);
std::vector<double> resample(const ResamplePlan& plan, std::span<const double> x);

// Supports fs in {200, 250, 500}; throws UnsupportedRate otherwise.
Trial resample_trial(const Trial& trial, double target_fs = kTargetFs);

// Centre crop / zero pad to 90 s. Requires fs == 200 (throws RateMismatch).
Segment center_fix(const Trial& trial);

WindowTensor make_windows(const Segment& seg);

// filter at native rate -> resample -> centre fix -> windows
WindowTensor preprocess_trial(const Trial& trial);

// Segment cached as a CLT1 trial at 200 Hz.
Trial segment_as_trial(const Segment& seg);

}  // namespace cogload
