#include "cogload/filters.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cogload/error.hpp"

namespace cogload {

namespace {

using cplx = std::complex<double>;

// Samples the slowest pole needs to fall by 1/e (roughly).
std::size_t slowest_time_constant(std::span<const Biquad> sections) {
  double r = 0.0;
  for (const auto& q : sections) r = std::max(r, q.max_pole_radius());
  return r < 1.0 ? static_cast<std::size_t>(std::ceil(1.0 / (1.0 - r))) : 1;
}

void single_pass(std::span<const Biquad> sections, std::span<double> x) {
  // Steady-state initial conditions for a constant input. The level is the
  // mean over the slowest time constant rather than x[0]: with a 0.1 Hz edge,
  // starting from an arbitrary sample of an oscillation leaves a transient of
  // the order of the signal amplitude that takes tens of seconds to decay.
  std::vector<std::array<double, 2>> state(sections.size());
  const std::size_t w = std::min(x.size(), slowest_time_constant(sections));
  double level = 0.0;
  for (std::size_t i = 0; i < w; ++i) level += x[i];
  if (w > 0) level /= static_cast<double>(w);
  for (std::size_t s = 0; s < sections.size(); ++s) {
    const auto& q = sections[s];
    const double gain = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
    const double y = gain * level;
    state[s][1] = q.b2 * level - q.a2 * y;
    state[s][0] = q.b1 * level - q.a1 * y + state[s][1];
    level = y;
  }
  for (auto& v : x) {
    double in = v;
    for (std::size_t s = 0; s < sections.size(); ++s) {
      const auto& q = sections[s];
      auto& z = state[s];
      const double y = q.b0 * in + z[0];
      z[0] = q.b1 * in - q.a1 * y + z[1];
      z[1] = q.b2 * in - q.a2 * y;
      in = y;
    }
    v = in;
  }
}

}  // namespace

cplx Biquad::response(double f_hz, double fs) const {
  const cplx zi = std::polar(1.0, -2.0 * std::numbers::pi * f_hz / fs);  // z^-1
  return (b0 + b1 * zi + b2 * zi * zi) / (1.0 + a1 * zi + a2 * zi * zi);
}

double Biquad::max_pole_radius() const {
  // roots of z^2 + a1 z + a2
  const cplx disc = std::sqrt(cplx(a1 * a1 - 4.0 * a2, 0.0));
  const cplx r1 = (-a1 + disc) / 2.0;
  const cplx r2 = (-a1 - disc) / 2.0;
  return std::max(std::abs(r1), std::abs(r2));
}

std::vector<Biquad> FilterBank::sections() const {
  std::vector<Biquad> all = bandpass;
  all.push_back(notch);
  return all;
}

cplx FilterBank::bandpass_response(double f_hz) const {
  cplx h = 1.0;
  for (const auto& s : bandpass) h *= s.response(f_hz, design_fs);
  return h;
}

cplx FilterBank::notch_response(double f_hz) const { return notch.response(f_hz, design_fs); }

cplx FilterBank::response(double f_hz) const { return bandpass_response(f_hz) * notch_response(f_hz); }

FilterBank design_filters(double fs) {
  if (!(fs > 150.0) || !std::isfinite(fs)) {
    throw Error(Errc::InvalidRate, "filter design needs fs > 150 Hz, got " + std::to_string(fs));
  }
  FilterBank bank;
  bank.design_fs = fs;

  // Analog Butterworth prototype -> band-pass -> bilinear transform, with
  // both band edges prewarped.
  const int n = FilterBank::kOrder;
  const double k2 = 2.0 * fs;
  const double w_lo = k2 * std::tan(std::numbers::pi * FilterBank::kLowHz / fs);
  const double w_hi = k2 * std::tan(std::numbers::pi * FilterBank::kHighHz / fs);
  const double w0sq = w_lo * w_hi;
  const double bw = w_hi - w_lo;

  std::vector<cplx> zpoles;
  for (int k = 0; k < n; ++k) {
    const cplx p = std::polar(1.0, std::numbers::pi * (2.0 * k + n + 1) / (2.0 * n));
    const cplx pb = p * bw;
    const cplx disc = std::sqrt(pb * pb - 4.0 * w0sq);
    for (const cplx s : {(pb + disc) / 2.0, (pb - disc) / 2.0}) {
      const cplx z = (k2 + s) / (k2 - s);
      if (z.imag() > 0.0) zpoles.push_back(z);  // one of each conjugate pair
    }
  }
  std::sort(zpoles.begin(), zpoles.end(),
            [](const cplx& a, const cplx& b) { return std::abs(a) < std::abs(b); });
  for (const auto& z : zpoles) {
    // zeros at z = +1 (analog s = 0) and z = -1 (analog infinity)
    bank.bandpass.push_back({1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
  }
  // unit gain at the geometric band centre
  const double fc = std::atan(std::sqrt(w0sq) / k2) * fs / std::numbers::pi;
  const double g = std::abs(bank.bandpass_response(fc));
  bank.bandpass.front().b0 /= g;
  bank.bandpass.front().b1 /= g;
  bank.bandpass.front().b2 /= g;

  // Notch (same construction as a standard second-order IIR notch).
  const double w0 = 2.0 * std::numbers::pi * FilterBank::kNotchHz / fs;
  const double beta = 1.0 / (1.0 + std::tan(w0 / FilterBank::kNotchQ / 2.0));
  const double c = std::cos(w0);
  bank.notch = {beta, -2.0 * beta * c, beta, -2.0 * beta * c, 2.0 * beta - 1.0};

  for (const auto& s : bank.sections()) {
    if (!(s.max_pole_radius() < 1.0)) {
      throw Error(Errc::InvalidRate, "designed filter is unstable at fs=" + std::to_string(fs));
    }
  }
  return bank;
}

CausalFilter::CausalFilter(std::vector<Biquad> sections)
    : sections_(std::move(sections)), state_(sections_.size(), {0.0, 0.0}) {}

double CausalFilter::step(double x) {
  for (std::size_t s = 0; s < sections_.size(); ++s) {
    const auto& q = sections_[s];
    auto& z = state_[s];
    const double y = q.b0 * x + z[0];
    z[0] = q.b1 * x - q.a1 * y + z[1];
    z[1] = q.b2 * x - q.a2 * y;
    x = y;
  }
  return x;
}

void CausalFilter::process(std::span<double> samples) {
  for (auto& v : samples) v = step(v);
}

void CausalFilter::reset() {
  for (auto& z : state_) z = {0.0, 0.0};
}

std::vector<double> filtfilt(std::span<const Biquad> sections, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  const std::size_t pad = std::min<std::size_t>(3 * (2 * sections.size() + 1), n - 1);
  std::vector<double> ext(n + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) ext[i] = 2.0 * x[0] - x[pad - i];
  std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(pad));
  for (std::size_t i = 0; i < pad; ++i) ext[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];

  single_pass(sections, ext);
  std::reverse(ext.begin(), ext.end());
  single_pass(sections, ext);
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
          ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

}  // namespace cogload
