#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace urpca {

inline constexpr double kPi = 3.14159265358979323846;

using Complex = std::complex<double>;
using ComplexSignal = std::vector<Complex>;
using ComplexSpectrum = std::vector<Complex>;

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

namespace detail {

// Median with the even-length convention of averaging the two middle values.
// Permutes its argument.
inline double median_inplace(std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("median of empty range");
  auto mid = v.begin() + v.size() / 2;
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

inline const std::vector<Complex>& twiddle_table(std::size_t n) {
  thread_local std::vector<std::vector<Complex>> cache;  // indexed by log2(n)
  std::size_t lg = 0;
  while ((std::size_t{1} << lg) < n) ++lg;
  if (cache.size() <= lg) cache.resize(lg + 1);
  auto& tab = cache[lg];
  if (tab.size() != n / 2) {
    tab.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k)
      tab[k] = std::polar(1.0, -2.0 * kPi * static_cast<double>(k) / static_cast<double>(n));
  }
  return tab;
}

}  // namespace detail

// In-place radix-2 transform. Forward is unnormalized; inverse carries 1/N.
inline void fft_in_place(ComplexSignal& a, bool inverse) {
  const std::size_t n = a.size();
  if (!is_power_of_two(n)) throw std::invalid_argument("fft: length must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const auto& tw = detail::twiddle_table(n);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        Complex w = tw[k * step];
        if (inverse) w = std::conj(w);
        const Complex u = a[i + k];
        const Complex v = a[i + k + half] * w;
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= inv;
  }
}

inline ComplexSpectrum dft(const ComplexSignal& x) {
  ComplexSignal a = x;
  fft_in_place(a, false);
  return a;
}

inline ComplexSignal idft(const ComplexSpectrum& x) {
  ComplexSignal a = x;
  fft_in_place(a, true);
  return a;
}

enum class Window { kRect, kHann };

inline void apply_window(ComplexSignal& x, Window w) {
  if (w == Window::kRect) return;
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i)
    x[i] *= 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n)));
}

/// N_FFT x 2 real view of a spectrum: column 0 real, column 1 imaginary.
/// Storage is row-major, so row i lives at data[2i], data[2i+1].
struct RangeMatrix {
  std::vector<double> data;
  double scale = 1.0;  // normalization factor already applied to the entries

  RangeMatrix() = default;
  explicit RangeMatrix(std::size_t rows) : data(2 * rows, 0.0) {}

  std::size_t rows() const { return data.size() / 2; }
  double& re(std::size_t i) { return data[2 * i]; }
  double& im(std::size_t i) { return data[2 * i + 1]; }
  double re(std::size_t i) const { return data[2 * i]; }
  double im(std::size_t i) const { return data[2 * i + 1]; }
  double magnitude(std::size_t i) const { return std::hypot(re(i), im(i)); }
};

inline RangeMatrix to_matrix(const ComplexSpectrum& x) {
  RangeMatrix m(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    m.re(i) = x[i].real();
    m.im(i) = x[i].imag();
  }
  return m;
}

inline ComplexSpectrum from_matrix(const RangeMatrix& m) {
  if (m.data.size() % 2 != 0) throw std::invalid_argument("from_matrix: malformed matrix");
  ComplexSpectrum x(m.rows());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = Complex(m.re(i), m.im(i));
  return x;
}

inline void check_bin(const RangeMatrix& m, std::size_t bin) {
  if (bin >= m.rows()) throw std::out_of_range("bin out of range");
}

// -inf is the defined sentinel for an exactly-zero bin.
inline double amplitude_db(const RangeMatrix& m, std::size_t bin) {
  check_bin(m, bin);
  const double mag = m.magnitude(bin);
  if (mag == 0.0) return -std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(mag);
}

// Phase in (-180, 180]. The phase of a zero bin is undefined.
inline double phase_deg(const RangeMatrix& m, std::size_t bin) {
  check_bin(m, bin);
  if (m.magnitude(bin) == 0.0) throw std::domain_error("phase of a zero bin");
  return std::atan2(m.im(bin), m.re(bin)) * 180.0 / kPi;
}

// Scales entries so the largest row magnitude is 1; records the factor.
inline void normalize(RangeMatrix& m) {
  double peak = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) peak = std::max(peak, m.magnitude(i));
  if (peak == 0.0) return;
  const double s = 1.0 / peak;
  for (auto& v : m.data) v *= s;
  m.scale *= s;
}

inline void denormalize(RangeMatrix& m) {
  if (m.scale == 1.0 || m.scale == 0.0) return;
  const double inv = 1.0 / m.scale;
  for (auto& v : m.data) v *= inv;
  m.scale = 1.0;
}

}  // namespace urpca
