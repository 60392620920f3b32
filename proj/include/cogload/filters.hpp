#pragma once

#include <array>
#include <complex>
#include <span>
#include <vector>

namespace cogload {

// One second-order section, a0 normalised to 1:
//   H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)
struct Biquad {
  double b0{1.0}, b1{0.0}, b2{0.0};
  double a1{0.0}, a2{0.0};

  std::complex<double> response(double f_hz, double fs) const;
  double max_pole_radius() const;
};

struct FilterBank {
  std::vector<Biquad> bandpass;  // 0.1-75 Hz Butterworth, order 4 prototype
  Biquad notch;                  // 60 Hz, Q = 30
  double design_fs{0.0};

  static constexpr double kLowHz = 0.1;
  static constexpr double kHighHz = 75.0;
  static constexpr double kNotchHz = 60.0;
  static constexpr double kNotchQ = 30.0;
  static constexpr int kOrder = 4;

  // Cascade order: band-pass sections, then the notch.
  std::vector<Biquad> sections() const;

  std::complex<double> bandpass_response(double f_hz) const;
  std::complex<double> notch_response(double f_hz) const;
  // Single-pass response of the whole bank.
  std::complex<double> response(double f_hz) const;
};

// Throws InvalidRate unless fs > 150 Hz.
FilterBank design_filters(double fs);

// Single-pass causal filtering with persistent state (direct form II
// transposed), used by the streaming scorer.
class CausalFilter {
 public:
  explicit CausalFilter(std::vector<Biquad> sections);
  double step(double x);
  void process(std::span<double> samples);
  void reset();

 private:
  std::vector<Biquad> sections_;
  std::vector<std::array<double, 2>> state_;
};

// Forward-backward filtering through the cascade. Edges are extended by odd
// reflection of 3 * (2 * n_sections + 1) samples and each pass starts from
// the steady state for a constant input equal to the mean of its first
// 1 / (1 - max pole radius) samples.
std::vector<double> filtfilt(std::span<const Biquad> sections, std::span<const double> x);

}  // namespace cogload
