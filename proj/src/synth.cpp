#include "cogload/synth.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>

#include "cogload/error.hpp"
#include "cogload/fft.hpp"
#include "cogload/rng.hpp"

namespace cogload {

namespace {

constexpr double kNoiseUv = 10.0;
constexpr double kPlantedUv = 10.0;
constexpr double kLineUv = 5.0;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

void pink_noise(const RealFft& fft, double fs, Rng& rng, std::span<double> out) {
  const std::size_t n = out.size();
  for (auto& v : out) v = rng.normal();
  std::vector<std::complex<double>> spec(fft.bins());
  fft.forward(out, spec);
  spec[0] = 0.0;
  for (std::size_t k = 1; k < spec.size(); ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(n);
    spec[k] /= std::sqrt(std::max(f, 1.0));
  }
  fft.inverse(spec, out);
  double ss = 0.0;
  for (double v : out) ss += v * v;
  const double rms = std::sqrt(ss / static_cast<double>(n));
  if (rms > 0.0) {
    for (auto& v : out) v /= rms;
  }
}

std::string participant_id(int i, int n) {
  const int width = n >= 100 ? 3 : 2;
  char buf[16];
  std::snprintf(buf, sizeof(buf), "P%0*d", width, i + 1);
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(Errc::InvalidConfig, what); };
  if (n_participants < 1) bad("n_participants must be >= 1");
  if (n_days < 1 || n_days > 5) bad("n_days must be in 1..5");
  if (trials_per_day < 1) bad("trials_per_day must be >= 1");
  if (n_channels < 9 || n_channels > 32) bad("n_channels must be in 9..32");
  if (!(fs > 0.0) || !std::isfinite(fs)) bad("fs must be > 0");
  if (!(duration_s > 0.0) || !std::isfinite(duration_s)) bad("duration_s must be > 0");
  if (!(planted_lo > 0.0) || !(planted_lo < planted_hi) || !(planted_hi < fs / 2.0)) {
    bad("planted band must satisfy 0 < lo < hi < fs/2");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) bad("noise_sigma must be >= 0");
}

SynthResult generate_synthetic_in_memory(const SynthConfig& cfg) {
  cfg.validate();
  SynthResult res;
  TrialSet& ts = res.trials;
  ts.montage = builtin_montage(static_cast<std::size_t>(cfg.n_channels));

  const auto n_samples = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.fs));
  if (n_samples < 1) throw Error(Errc::InvalidConfig, "duration_s * fs yields no samples");
  const RealFft fft(n_samples);

  const int n_eval = std::min(5, cfg.n_participants / 2);
  const int n_train = cfg.n_participants - n_eval;
  const auto& planted = ts.montage.regions()[index(cfg.planted_region)];
  std::vector<bool> is_planted(ts.montage.size(), false);
  for (auto c : planted) is_planted[c] = true;

  std::vector<double> buf(n_samples);
  std::uint64_t ordinal = 0;
  for (int p = 0; p < cfg.n_participants; ++p) {
    const std::string pid = participant_id(p, cfg.n_participants);
    const char cohort = p >= n_train ? 'E' : static_cast<char>('A' + (p * 4) / n_train);
    Rng meta_rng(splitmix64(cfg.seed ^ (0xB0B0ULL + static_cast<std::uint64_t>(p))));
    for (int day = 1; day <= cfg.n_days; ++day) {
      for (int k = 0; k < cfg.trials_per_day; ++k, ++ordinal) {
        Rng rng(splitmix64(cfg.seed + 0x632BE59BD9B4E019ULL * (ordinal + 1)));
        Trial t;
        t.key = {pid, day, (day - 1) * cfg.trials_per_day + k};
        t.cohort = cohort;
        t.fs = cfg.fs;
        t.n_channels = ts.montage.size();
        t.n_samples = n_samples;
        t.samples.resize(t.n_channels * n_samples);

        const double a = rng.uniform();
        // Band centre for every trial: a per-trial frequency lands on varying
        // 1 s FFT bins and the leakage pattern swamps the amplitude effect.
        const double f0 = 0.5 * (cfg.planted_lo + cfg.planted_hi);
        const double line_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (std::size_t c = 0; c < t.n_channels; ++c) {
          pink_noise(fft, cfg.fs, rng, buf);
          const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
          auto out = t.channel(c);
          for (std::size_t i = 0; i < n_samples; ++i) {
            const double time = static_cast<double>(i) / cfg.fs;
            double v = kNoiseUv * buf[i] +
                       kLineUv * std::sin(2.0 * std::numbers::pi * 60.0 * time + line_phase);
            if (is_planted[c]) {
              v += a * kPlantedUv * std::sin(2.0 * std::numbers::pi * f0 * time + phase);
            }
            out[i] = static_cast<float>(v);
          }
        }
        const double score =
            1.0 - a * (1.0 - 0.05 * day) + (cfg.noise_sigma > 0.0 ? cfg.noise_sigma * rng.normal() : 0.0);
        ts.labels.push_back({t.key, cohort, score});
        res.planted_amplitude[t.key] = a;
        ts.trials.push_back(std::move(t));
      }
      // behavioural side channel: blink duration rises, focus stability falls
      auto& m = ts.behavioral[{pid, day}];
      m["blink_duration"] = 0.19 + 0.01 * (day - 1) + 0.005 * meta_rng.normal();
      m["focus_stability"] = 0.80 - 0.03 * (day - 1) + 0.01 * meta_rng.normal();
    }
  }
  ts.validate();
  return res;
}

SynthResult generate_synthetic(const SynthConfig& cfg, const std::string& out_dir) {
  SynthResult res = generate_synthetic_in_memory(cfg);
  res.manifest_path = write_trialset(res.trials, out_dir);
  return res;
}

}  // namespace cogload
