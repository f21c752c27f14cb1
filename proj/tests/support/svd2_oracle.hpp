#pragma once

// Independent singular value thresholding oracle for n x 2 matrices, used to
// cross-check the tape-composed version. One-sided Jacobi on the two columns:
// a single rotation orthogonalizes them, giving X = U diag(s) V^T directly.

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace testsupport {

struct Svd2 {
  std::vector<double> u;        // n x 2, column-major by singular index
  std::array<double, 2> sigma;  // descending
  std::array<std::array<double, 2>, 2> v;  // v[i] is the i-th right vector
};

inline Svd2 svd_n_by_2(const std::vector<double>& col0,
                       const std::vector<double>& col1) {
  if (col0.size() != col1.size()) throw std::invalid_argument("ragged columns");
  const std::size_t n = col0.size();
  double g11 = 0.0, g22 = 0.0, g12 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    g11 += col0[i] * col0[i];
    g22 += col1[i] * col1[i];
    g12 += col0[i] * col1[i];
  }

  // rotation angle zeroing the off-diagonal of the Gram matrix
  double c = 1.0, s = 0.0;
  if (std::abs(g12) > 1e-300) {
    const double tau = (g22 - g11) / (2.0 * g12);
    const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
    c = 1.0 / std::sqrt(1.0 + t * t);
    s = t * c;
  }

  Svd2 out;
  out.u.assign(2 * n, 0.0);
  std::array<double, 2> norms{};
  for (std::size_t i = 0; i < n; ++i) {
    const double a = c * col0[i] - s * col1[i];
    const double b = s * col0[i] + c * col1[i];
    out.u[i] = a;
    out.u[n + i] = b;
    norms[0] += a * a;
    norms[1] += b * b;
  }
  out.sigma = {std::sqrt(norms[0]), std::sqrt(norms[1])};
  out.v = {{{c, -s}, {s, c}}};

  if (out.sigma[1] > out.sigma[0]) {
    std::swap(out.sigma[0], out.sigma[1]);
    std::swap(out.v[0], out.v[1]);
    for (std::size_t i = 0; i < n; ++i) std::swap(out.u[i], out.u[n + i]);
  }
  for (int k = 0; k < 2; ++k) {
    if (out.sigma[k] > 0.0)
      for (std::size_t i = 0; i < n; ++i) out.u[std::size_t(k) * n + i] /= out.sigma[k];
  }
  return out;
}

// Exact shrinkage U (sigma - lambda)_+ V^T, returned as two columns.
inline void svt_oracle(const std::vector<double>& col0, const std::vector<double>& col1,
                       double lambda, std::vector<double>& out0,
                       std::vector<double>& out1) {
  const Svd2 d = svd_n_by_2(col0, col1);
  const std::size_t n = col0.size();
  out0.assign(n, 0.0);
  out1.assign(n, 0.0);
  for (int k = 0; k < 2; ++k) {
    const double sk = d.sigma[std::size_t(k)] - lambda;
    if (sk <= 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = sk * d.u[std::size_t(k) * n + i];
      out0[i] += c * d.v[std::size_t(k)][0];
      out1[i] += c * d.v[std::size_t(k)][1];
    }
  }
}

// Reconstruction residual of the factorization itself; lets tests prove the
// oracle before trusting it.
inline double svd_self_check(const std::vector<double>& col0,
                             const std::vector<double>& col1) {
  const Svd2 d = svd_n_by_2(col0, col1);
  const std::size_t n = col0.size();
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r0 = 0.0, r1 = 0.0;
    for (int k = 0; k < 2; ++k) {
      const double c = d.sigma[std::size_t(k)] * d.u[std::size_t(k) * n + i];
      r0 += c * d.v[std::size_t(k)][0];
      r1 += c * d.v[std::size_t(k)][1];
    }
    worst = std::max(worst, std::abs(r0 - col0[i]));
    worst = std::max(worst, std::abs(r1 - col1[i]));
  }
  return worst;
}

}  // namespace testsupport
