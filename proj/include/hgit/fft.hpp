#pragma once

#include <complex>
#include <span>
#include <vector>

namespace hgit {

using Spectrum = std::vector<std::complex<double>>;

/// Unnormalized forward 2-D DFT of a real row-major h x w field.
Spectrum fft2(std::span<const double> field, int h, int w);

/// Inverse 2-D DFT scaled by 1/(h w); returns the real part.
std::vector<double> ifft2_real(const Spectrum& spectrum, int h, int w);

}  // namespace hgit
