#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace cogload {

// Real-to-complex / complex-to-real transforms of a fixed length, backed by
// FFTW. Plans are created once; execute() is safe to call concurrently.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }
  std::size_t bins() const { return n_ / 2 + 1; }

  // Unnormalised forward transform; out.size() == bins().
  void forward(std::span<const double> in, std::span<std::complex<double>> out) const;
  // Unnormalised inverse (result scaled by n relative to a true inverse).
  void inverse(std::span<const std::complex<double>> in, std::span<double> out) const;

 private:
  struct Plans;
  std::size_t n_;
  std::unique_ptr<Plans> plans_;
};

}  // namespace cogload
