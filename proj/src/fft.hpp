#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace sce::detail {

// Real-input FFT of arbitrary length backed by FFTW. Plans are created once
// per size under a global lock and then executed through the thread-safe
// new-array interface, so one instance is usable from many threads.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }
  // in.size() == n, out.size() == n/2 + 1
  void forward(std::span<const double> in,
               std::span<std::complex<double>> out) const;
  // Unnormalized inverse; caller divides by n.
  void inverse(std::span<const std::complex<double>> in,
               std::span<double> out) const;

 private:
  std::size_t n_;
  void* fwd_ = nullptr;
  void* inv_ = nullptr;
};

// Shared plan cache keyed by size.
const RealFft& real_fft(std::size_t n);

}  // namespace sce::detail
