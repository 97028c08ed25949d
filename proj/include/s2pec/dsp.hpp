#pragma once

#include <complex>
#include <span>
#include <vector>

namespace s2pec::dsp {

// Real FFT of length n (n even); forward returns n/2 + 1 bins, inverse
// expects the same and returns n samples scaled by 1/n.
std::vector<std::complex<double>> rfft(std::span<const double> x, int n);
std::vector<double> irfft(std::span<const std::complex<double>> spectrum, int n);

std::vector<double> hamming(int n);
std::vector<double> hann(int n);  // periodic

}  // namespace s2pec::dsp
