#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "cogload/dataset.hpp"
#include "cogload/region.hpp"

namespace cogload {

struct SynthConfig {
  int n_participants{10};
  int n_days{5};
  int trials_per_day{3};
  int n_channels{32};
  double fs{200.0};
  double duration_s{95.0};
  RegionId planted_region{RegionId::Prefrontal};
  double planted_lo{4.0};
  double planted_hi{8.0};
  double noise_sigma{0.05};
  std::uint64_t seed{11};

  void validate() const;  // throws InvalidConfig naming the field
};

struct SynthResult {
  TrialSet trials;
  std::string manifest_path;
  std::map<TrialKey, double> planted_amplitude;  // the per-trial draw a
};

// Participant roles: the last min(5, n/2) participants form cohort E (the
// evaluation cohort); the rest are spread over cohorts A..D in order.
//
// Every channel carries unit-RMS 1/f-power noise scaled to 10 uV plus 5 uV
// of 60 Hz line interference. Channels of the planted region additionally
// carry a tone at the planted band's centre frequency with amplitude
// a * 10 uV, a ~ U[0, 1]. The label is
//   score = 1 - a * (1 - 0.05 * day) + N(0, noise_sigma).
SynthResult generate_synthetic(const SynthConfig& cfg, const std::string& out_dir);

// Same data without touching the filesystem.
SynthResult generate_synthetic_in_memory(const SynthConfig& cfg);

}  // namespace cogload
