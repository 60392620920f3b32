#include "cogload/fft.hpp"

#include <mutex>

#include <fftw3.h>

#include "cogload/error.hpp"

namespace cogload {

namespace {
// FFTW's planner is not thread-safe.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

struct RealFft::Plans {
  fftw_plan fwd{nullptr};
  fftw_plan inv{nullptr};
};

RealFft::RealFft(std::size_t n) : n_(n), plans_(std::make_unique<Plans>()) {
  if (n == 0) throw Error(Errc::InvalidArgument, "FFT length must be positive");
  std::lock_guard lock(planner_mutex());
  std::vector<double> re(n);
  std::vector<fftw_complex> cx(n / 2 + 1);
  const int len = static_cast<int>(n);
  plans_->fwd = fftw_plan_dft_r2c_1d(len, re.data(), cx.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  plans_->inv = fftw_plan_dft_c2r_1d(len, cx.data(), re.data(),
                                     FFTW_ESTIMATE | FFTW_UNALIGNED | FFTW_DESTROY_INPUT);
  if (plans_->fwd == nullptr || plans_->inv == nullptr) {
    throw Error(Errc::InvalidArgument, "FFTW planning failed");
  }
}

RealFft::~RealFft() {
  std::lock_guard lock(planner_mutex());
  if (plans_->fwd != nullptr) fftw_destroy_plan(plans_->fwd);
  if (plans_->inv != nullptr) fftw_destroy_plan(plans_->inv);
}

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) const {
  if (in.size() != n_ || out.size() != bins()) {
    throw Error(Errc::DimensionMismatch, "RealFft::forward buffer size");
  }
  // r2c does not modify its input
  fftw_execute_dft_r2c(plans_->fwd, const_cast<double*>(in.data()),
                       reinterpret_cast<fftw_complex*>(out.data()));
}

void RealFft::inverse(std::span<const std::complex<double>> in, std::span<double> out) const {
  if (in.size() != bins() || out.size() != n_) {
    throw Error(Errc::DimensionMismatch, "RealFft::inverse buffer size");
  }
  std::vector<std::complex<double>> scratch(in.begin(), in.end());
  fftw_execute_dft_c2r(plans_->inv, reinterpret_cast<fftw_complex*>(scratch.data()), out.data());
}

}  // namespace cogload
