#pragma once

#include <complex>
#include <span>

namespace lavse {

// Real-input FFT of fixed length backed by FFTW. Not copyable; plans are
// created once per instance.
class RealFft {
 public:
  explicit RealFft(int n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  int size() const { return n_; }
  int bins() const { return n_ / 2 + 1; }

  // in: n samples, out: n/2+1 bins. Unnormalized.
  void forward(std::span<const double> in, std::span<std::complex<double>> out);
  // in: n/2+1 bins, out: n samples, scaled by 1/n so inverse(forward(x)) == x.
  // The imaginary parts of the DC and Nyquist bins are ignored.
  void inverse(std::span<const std::complex<double>> in, std::span<double> out);

 private:
  int n_;
  double* real_ = nullptr;
  void* spec_ = nullptr;
  void* plan_fwd_ = nullptr;
  void* plan_inv_ = nullptr;
};

}  // namespace lavse
