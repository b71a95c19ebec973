#include "hgit/fft.hpp"

#include <fftw3.h>

#include <mutex>

#include "hgit/errors.hpp"

namespace hgit {

namespace {

// FFTW planning is not thread-safe; execution of a plan on its own arrays is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class Plan {
 public:
  Plan(int h, int w, fftw_complex* in, fftw_complex* out, int sign) {
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_2d(h, w, in, out, sign, FFTW_ESTIMATE);
    if (!plan_) throw Error("fftw could not create a plan");
  }
  ~Plan() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;
  void run() { fftw_execute(plan_); }

 private:
  fftw_plan plan_ = nullptr;
};

fftw_complex* as_fftw(std::complex<double>* p) { return reinterpret_cast<fftw_complex*>(p); }

}  // namespace

Spectrum fft2(std::span<const double> field, int h, int w) {
  if (h <= 0 || w <= 0 || field.size() != static_cast<std::size_t>(h) * w) {
    throw ArgumentError("fft2: field size does not match dimensions");
  }
  Spectrum in(field.begin(), field.end());
  Spectrum out(in.size());
  Plan plan(h, w, as_fftw(in.data()), as_fftw(out.data()), FFTW_FORWARD);
  plan.run();
  return out;
}

std::vector<double> ifft2_real(const Spectrum& spectrum, int h, int w) {
  if (spectrum.size() != static_cast<std::size_t>(h) * w) throw ArgumentError("ifft2: spectrum size mismatch");
  Spectrum in = spectrum;
  Spectrum out(in.size());
  Plan plan(h, w, as_fftw(in.data()), as_fftw(out.data()), FFTW_BACKWARD);
  plan.run();
  std::vector<double> real(out.size());
  const double scale = 1.0 / (static_cast<double>(h) * w);
  for (std::size_t i = 0; i < out.size(); ++i) real[i] = out[i].real() * scale;
  return real;
}

}  // namespace hgit
