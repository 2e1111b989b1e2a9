#pragma once

#include <complex>
#include <vector>

#include "provoc/common.hpp"

namespace provoc {

using cplx = std::complex<double>;

inline bool is_power_of_two(size_t n) { return n && (n & (n - 1)) == 0; }

// In-place iterative radix-2 Cooley-Tukey. n must be a power of two.
inline void fft_inplace(std::vector<cplx>& a, bool inverse) {
  const size_t n = a.size();
  check(is_power_of_two(n), "fft size must be a power of two, got ", n);
  // bit reversal
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const double pi = 3.14159265358979323846;
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    cplx wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        cplx u = a[i + k];
        cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

// Real-input FFT: returns n/2 + 1 bins.
inline std::vector<cplx> rfft(const std::vector<double>& x, size_t n) {
  check(x.size() <= n, "rfft input longer than transform size");
  std::vector<cplx> a(n, cplx(0.0, 0.0));
  for (size_t i = 0; i < x.size(); ++i) a[i] = cplx(x[i], 0.0);
  fft_inplace(a, false);
  a.resize(n / 2 + 1);
  return a;
}

// Inverse of rfft: reconstructs n real samples from n/2 + 1 bins.
inline std::vector<double> irfft(const std::vector<cplx>& spec, size_t n) {
  check(spec.size() == n / 2 + 1, "irfft expects ", n / 2 + 1, " bins, got ", spec.size());
  std::vector<cplx> a(n);
  for (size_t i = 0; i <= n / 2; ++i) a[i] = spec[i];
  for (size_t i = n / 2 + 1; i < n; ++i) a[i] = std::conj(spec[n - i]);
  fft_inplace(a, true);
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = a[i].real();
  return out;
}

}  // namespace provoc
