#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "urpca/spectrum.hpp"

namespace urpca {

/// Robust magnitude outlier rule: flag samples whose magnitude exceeds
/// median + 4 * (1.4826 * MAD), with the MAD floored at 1e-12 so a
/// constant-magnitude signal flags nothing.
inline std::vector<bool> detect_interference(const ComplexSignal& s) {
  if (s.empty()) throw std::invalid_argument("detect_interference: empty signal");
  std::vector<double> mag(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) mag[i] = std::abs(s[i]);
  std::vector<double> tmp = mag;
  const double med = detail::median_inplace(tmp);
  for (std::size_t i = 0; i < s.size(); ++i) tmp[i] = std::abs(mag[i] - med);
  const double mad = std::max(detail::median_inplace(tmp), 1e-12);
  const double threshold = med + 4.0 * (1.4826 * mad);
  std::vector<bool> mask(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) mask[i] = mag[i] > threshold;
  return mask;
}

inline ComplexSignal apply_mask(const ComplexSignal& s, const std::vector<bool>& mask) {
  if (mask.size() != s.size()) throw std::invalid_argument("apply_mask: size mismatch");
  ComplexSignal out = s;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (mask[i]) out[i] = Complex(0.0, 0.0);
  return out;
}

/// Zeroing technique: null the flagged time samples, then transform.
/// Detection always runs on the raw signal; the window only affects the DFT.
inline RangeMatrix zeroing_mitigate(const ComplexSignal& s, Window w = Window::kRect) {
  ComplexSignal masked = apply_mask(s, detect_interference(s));
  apply_window(masked, w);
  return to_matrix(dft(masked));
}

/// Ground-truth reference: the spectrum of the clean (targets + noise) signal.
inline RangeMatrix oracle(const ComplexSignal& clean, Window w = Window::kRect) {
  ComplexSignal x = clean;
  apply_window(x, w);
  return to_matrix(dft(x));
}

}  // namespace urpca
