#include "lavse/fft.hpp"

#include <algorithm>
#include <fftw3.h>

#include "lavse/error.hpp"

namespace lavse {

RealFft::RealFft(int n) : n_(n) {
  if (n < 2) throw ShapeError("RealFft: size must be >= 2");
  real_ = fftw_alloc_real(static_cast<std::size_t>(n));
  auto* spec = fftw_alloc_complex(static_cast<std::size_t>(bins()));
  spec_ = spec;
  plan_fwd_ = fftw_plan_dft_r2c_1d(n, real_, spec, FFTW_ESTIMATE);
  plan_inv_ = fftw_plan_dft_c2r_1d(n, spec, real_, FFTW_ESTIMATE);
}

RealFft::~RealFft() {
  fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
  fftw_destroy_plan(static_cast<fftw_plan>(plan_inv_));
  fftw_free(static_cast<fftw_complex*>(spec_));
  fftw_free(real_);
}

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) {
  if (in.size() != static_cast<std::size_t>(n_) || out.size() != static_cast<std::size_t>(bins())) {
    throw ShapeError("RealFft::forward: size mismatch");
  }
  std::copy(in.begin(), in.end(), real_);
  fftw_execute(static_cast<fftw_plan>(plan_fwd_));
  auto* spec = static_cast<fftw_complex*>(spec_);
  for (int k = 0; k < bins(); ++k) out[k] = {spec[k][0], spec[k][1]};
}

void RealFft::inverse(std::span<const std::complex<double>> in, std::span<double> out) {
  if (in.size() != static_cast<std::size_t>(bins()) || out.size() != static_cast<std::size_t>(n_)) {
    throw ShapeError("RealFft::inverse: size mismatch");
  }
  auto* spec = static_cast<fftw_complex*>(spec_);
  for (int k = 0; k < bins(); ++k) {
    spec[k][0] = in[k].real();
    spec[k][1] = in[k].imag();
  }
  spec[0][1] = 0.0;
  if (n_ % 2 == 0) spec[n_ / 2][1] = 0.0;
  // c2r destroys its input; the buffer is refilled on every call.
  fftw_execute(static_cast<fftw_plan>(plan_inv_));
  const double scale = 1.0 / n_;
  for (int i = 0; i < n_; ++i) out[i] = real_[i] * scale;
}

}  // namespace lavse
