#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "support/fd_check.hpp"
#include "support/svd2_oracle.hpp"
#include "urpca/autodiff.hpp"
#include "urpca/rng.hpp"
#include "urpca/spectrum.hpp"

using testsupport::check_gradients;
using testsupport::svd_n_by_2;
using testsupport::svd_self_check;
using testsupport::svt_oracle;
using urpca::Rng;
using urpca::Tape;
using urpca::TensorShape;
using urpca::Var;

namespace {

constexpr double kPrimAtol = 1e-9;
constexpr double kPrimRtol = 1e-6;

std::vector<double> random_vec(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

// columns of the math-side n x 2 matrix from a planar (2, n) tensor
void split_cols(const std::vector<double>& planar, std::vector<double>& c0,
                std::vector<double>& c1) {
  const std::size_t n = planar.size() / 2;
  c0.assign(planar.begin(), planar.begin() + long(n));
  c1.assign(planar.begin() + long(n), planar.end());
}

}  // namespace

TEST_CASE("leaf, zeros, constant hold their values") {
  Tape<double> t;
  const std::vector<double> x{1.0, -2.0, 3.0};
  const Var a = t.leaf(TensorShape::of(3), x.data(), true);
  CHECK(std::vector<double>(t.value(a).begin(), t.value(a).end()) == x);
  const Var z = t.zeros(TensorShape::of(2, 4));
  for (double v : t.value(z)) CHECK(v == 0.0);
  CHECK(t.shape(z).numel() == 8);
  const Var c = t.constant(2.5);
  CHECK(t.value(c)[0] == 2.5);
}

TEST_CASE("elementwise ops compute known values") {
  Tape<double> t;
  const std::vector<double> xv{-1.0, 0.0, 2.0};
  const std::vector<double> yv{4.0, 5.0, -6.0};
  const Var x = t.leaf(TensorShape::of(3), xv.data(), true);
  const Var y = t.leaf(TensorShape::of(3), yv.data(), true);

  const Var r = t.relu(x);
  CHECK(std::vector<double>(t.value(r).begin(), t.value(r).end()) ==
        std::vector<double>{0.0, 0.0, 2.0});

  const Var s = t.add(x, y);
  CHECK(std::vector<double>(t.value(s).begin(), t.value(s).end()) ==
        std::vector<double>{3.0, 5.0, -4.0});

  const Var sc = t.scale(x, -2.0);
  CHECK(std::vector<double>(t.value(sc).begin(), t.value(sc).end()) ==
        std::vector<double>{2.0, 0.0, -4.0});

  const Var m = t.mse(x, y);
  CHECK(std::abs(t.value(m)[0] - (25.0 + 25.0 + 64.0) / 3.0) < 1e-12);
}

TEST_CASE("relu keeps a zero subgradient at zero") {
  Tape<double> t;
  const std::vector<double> xv{0.0, -1.0, 1.0};
  const Var x = t.leaf(TensorShape::of(3), xv.data(), true);
  const Var loss = t.mse(t.relu(x), t.zeros(TensorShape::of(3)));
  t.backward(loss);
  const auto g = t.grad(x);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
  CHECK(g[2] > 0.0);
}

TEST_CASE("conv1d matches a hand computation") {
  Tape<double> t;
  const std::vector<double> xv{1.0, 2.0, 3.0};
  const std::vector<double> wv{1.0, 0.0, -1.0};
  const std::vector<double> bv{0.5};
  const Var x = t.leaf(TensorShape::of(1, 3), xv.data(), false);
  const Var w = t.leaf(TensorShape::of(1, 1, 3), wv.data(), false);
  const Var b = t.leaf(TensorShape::of(1), bv.data(), false);
  const Var y = t.conv1d(x, w, b, 1, 1);
  CHECK(std::vector<double>(t.value(y).begin(), t.value(y).end()) ==
        std::vector<double>{-1.5, -1.5, 2.5});
}

TEST_CASE("strided conv1d matches a hand computation") {
  Tape<double> t;
  const std::vector<double> xv{1.0, 2.0, 3.0, 4.0, 5.0};
  const std::vector<double> wv{1.0, 1.0, 1.0};
  const std::vector<double> bv{0.0};
  const Var x = t.leaf(TensorShape::of(1, 5), xv.data(), false);
  const Var w = t.leaf(TensorShape::of(1, 1, 3), wv.data(), false);
  const Var b = t.leaf(TensorShape::of(1), bv.data(), false);
  const Var y = t.conv1d(x, w, b, 2, 1);
  CHECK(std::vector<double>(t.value(y).begin(), t.value(y).end()) ==
        std::vector<double>{3.0, 9.0, 9.0});
}

TEST_CASE("transposed conv1d matches a hand computation") {
  Tape<double> t;
  const std::vector<double> xv{1.0, 2.0};
  const std::vector<double> wv{1.0, 2.0, 3.0, 4.0};
  const std::vector<double> bv{0.25};
  const Var x = t.leaf(TensorShape::of(1, 2), xv.data(), false);
  const Var w = t.leaf(TensorShape::of(1, 1, 4), wv.data(), false);
  const Var b = t.leaf(TensorShape::of(1), bv.data(), false);
  const Var y = t.conv1d_transposed(x, w, b, 4);
  CHECK(std::vector<double>(t.value(y).begin(), t.value(y).end()) ==
        std::vector<double>{1.25, 2.25, 3.25, 4.25, 2.25, 4.25, 6.25, 8.25});
}

TEST_CASE("conv1d rejects malformed operands") {
  Tape<double> t;
  const std::vector<double> xv(6, 1.0);
  const Var x2 = t.leaf(TensorShape::of(2, 3), xv.data(), false);
  const Var w = t.leaf(TensorShape::of(1, 1, 3), xv.data(), false);
  const Var b = t.leaf(TensorShape::of(1), xv.data(), false);
  CHECK_THROWS_AS(t.conv1d(x2, w, b, 1, 1), std::invalid_argument);  // ci mismatch
  CHECK_THROWS_AS(t.conv1d(x2, x2, b, 1, 1), std::invalid_argument);  // bad rank
  const Var w2 = t.leaf(TensorShape::of(1, 2, 3), xv.data(), false);
  CHECK_THROWS_AS(t.conv1d(x2, w2, b, 0, 1), std::invalid_argument);  // bad stride
}

TEST_CASE("gram2 and col_mix2 compute known values") {
  Tape<double> t;
  const std::vector<double> xv{1.0, 2.0, 3.0, 4.0, 5.0, 6.0};  // x0 = (1,2,3), x1 = (4,5,6)
  const Var x = t.leaf(TensorShape::of(2, 3), xv.data(), true);
  const Var g = t.gram2(x);
  CHECK(std::vector<double>(t.value(g).begin(), t.value(g).end()) ==
        std::vector<double>{14.0, 32.0, 77.0});
  CHECK(t.value(t.pick(g, 1))[0] == 32.0);
  CHECK_THROWS_AS(t.pick(g, 3), std::invalid_argument);

  const Var y = t.col_mix2(x, t.constant(2.0), t.constant(-1.0), t.constant(3.0));
  CHECK(std::vector<double>(t.value(y).begin(), t.value(y).end()) ==
        std::vector<double>{-2.0, -1.0, 0.0, 11.0, 13.0, 15.0});

  const Var bad = t.leaf(TensorShape::of(3, 2), xv.data(), false);
  CHECK_THROWS_AS(t.gram2(bad), std::invalid_argument);
}

TEST_CASE("row soft threshold shrinks magnitudes and clamps to zero") {
  Tape<double> t;
  const std::vector<double> xv{3.0, 1.0, 4.0, 0.0};  // rows (3,4) and (1,0)
  const Var x = t.leaf(TensorShape::of(2, 2), xv.data(), true);

  const Var y1 = t.row_soft_threshold(x, t.constant(1.0));
  const auto v1 = t.value(y1);
  CHECK(std::abs(v1[0] - 2.4) < 1e-9);
  CHECK(std::abs(v1[2] - 3.2) < 1e-9);
  CHECK(std::abs(v1[1] - 0.0) < 1e-9);  // row (1,0) shrinks to zero magnitude
  CHECK(std::abs(v1[3]) < 1e-12);

  const Var y2 = t.row_soft_threshold(x, t.constant(10.0));
  for (double v : t.value(y2)) CHECK(v == 0.0);
}

TEST_CASE("scalar primitives compute known values") {
  Tape<double> t;
  const Var a = t.constant(1.0), b = t.constant(1.0);
  CHECK(std::abs(t.value(t.satan2(a, b))[0] - urpca::kPi / 4.0) < 1e-15);
  CHECK(t.value(t.ssqrt(t.constant(2.25)))[0] == 1.5);
  CHECK(std::abs(t.value(t.ssin(t.constant(urpca::kPi / 6.0)))[0] - 0.5) < 1e-12);
  CHECK(std::abs(t.value(t.scos(t.constant(urpca::kPi / 3.0)))[0] - 0.5) < 1e-12);
  CHECK(t.value(t.sdiv(t.constant(3.0), t.constant(4.0)))[0] == 0.75);
  CHECK(t.value(t.ssub(t.constant(3.0), t.constant(4.0)))[0] == -1.0);
  CHECK(t.value(t.smul(t.constant(3.0), t.constant(4.0)))[0] == 12.0);
  CHECK(t.value(t.sadd(t.constant(3.0), t.constant(4.0)))[0] == 7.0);
}

TEST_CASE("backward demands a scalar loss and validates vars") {
  Tape<double> t;
  const std::vector<double> xv{1.0, 2.0};
  const Var x = t.leaf(TensorShape::of(2), xv.data(), true);
  CHECK_THROWS_AS(t.backward(x), std::invalid_argument);
  CHECK_THROWS_AS(t.value(Var{}), std::invalid_argument);
  CHECK_THROWS_AS(t.value(Var{42}), std::invalid_argument);
}

TEST_CASE("reset recycles the tape") {
  Tape<double> t;
  const std::vector<double> xv{1.0, 2.0, 3.0};
  const Var x = t.leaf(TensorShape::of(3), xv.data(), true);
  t.backward(t.mse(x, t.zeros(TensorShape::of(3))));
  CHECK(t.size() > 0);
  t.reset();
  CHECK(t.size() == 0);
  const Var y = t.leaf(TensorShape::of(3), xv.data(), true);
  const Var loss = t.mse(y, t.zeros(TensorShape::of(3)));
  t.backward(loss);
  CHECK(std::abs(t.grad(y)[2] - 2.0) < 1e-12);  // d/dy mean(y^2) = 2y/3
}

// ---- finite-difference checks ----

TEST_CASE("gradients: elementwise chain") {
  Rng rng(21);
  auto x0 = random_vec(6, rng);
  const auto res = check_gradients(
      [](Tape<double>& t, const std::vector<double>& x, std::vector<Var>& leaves) {
        const Var a = t.leaf(TensorShape::of(6), x.data(), true);
        leaves.push_back(a);
        const Var y = t.scale(t.relu(t.add(a, a)), 0.75);
        return t.mse(y, t.zeros(TensorShape::of(6)));
      },
      x0, kPrimAtol, kPrimRtol);
  INFO(res.detail);
  CHECK(res.ok);
}

TEST_CASE("gradients: conv1d over input, weight and bias") {
  Rng rng(22);
  // x (2,5), w (3,2,3), b (3)
  auto flat = random_vec(10 + 18 + 3, rng);
  const auto res = check_gradients(
      [](Tape<double>& t, const std::vector<double>& x, std::vector<Var>& leaves) {
        const Var xi = t.leaf(TensorShape::of(2, 5), x.data(), true);
        const Var w = t.leaf(TensorShape::of(3, 2, 3), x.data() + 10, true);
        const Var b = t.leaf(TensorShape::of(3), x.data() + 28, true);
        leaves.insert(leaves.end(), {xi, w, b});
        const Var y = t.conv1d(xi, w, b, 1, 1);
        return t.mse(y, t.zeros(t.shape(y)));
      },
      flat, kPrimAtol, kPrimRtol);
  INFO(res.detail);
  CHECK(res.ok);
}

TEST_CASE("gradients: strided conv1d") {
  Rng rng(23);
  auto flat = random_vec(8 + 6 + 1, rng);
  const auto res = check_gradients(
      [](Tape<double>& t, const std::vector<double>& x, std::vector<Var>& leaves) {
        const Var xi = t.leaf(TensorShape::of(1, 8), x.data(), true);
        const Var w = t.leaf(TensorShape::of(1, 1, 6), x.data() + 8, true);
        const Var b = t.leaf(TensorShape::of(1), x.data() + 14, true);
        leaves.insert(leaves.end(), {xi, w, b});
        const Var y = t.conv1d(xi, w, b, 2, 2);
        return t.mse(y, t.zeros(t.shape(y)));
      },
      flat, kPrimAtol, kPrimRtol);
  INFO(res.detail);
  CHECK(res.ok);
}

TEST_CASE("gradients: transposed conv1d") {
  Rng rng(24);
  // x (2,3), w (2,2,4), b (2), stride 4
  auto flat = random_vec(6 + 16 + 2, rng);
  const auto res = check_gradients(
      [](Tape<double>& t, const std::vector<double>& x, std::vector<Var>& leaves) {
        const Var xi = t.leaf(TensorShape::of(2, 3), x.data(), true);
        const Var w = t.leaf(TensorShape::of(2, 2, 4), x.data() + 6, true);
        const Var b = t.leaf(TensorShape::of(2), x.data() + 22, true);
        leaves.insert(leaves.end(), {xi, w, b});
        const Var y = t.conv1d_transposed(xi, w, b, 4);
        return t.mse(y, t.zeros(t.shape(y)));
      },
      flat, kPrimAtol, kPrimRtol);
  INFO(res.detail);
  CHECK(res.ok);
}

TEST_CASE("gradients: gram2, pick, col_mix2 and scalar chain") {
  Rng rng(25);
  auto flat = random_vec(8 + 3, rng, 0.2, 1.0);
  const auto res = check_gradients(
      [](Tape<double>& t, const std::vector<double>& x, std::vector<Var>& leaves) {
        const Var xi = t.leaf(TensorShape::of(2, 4), x.data(), true);
        const Var m = t.leaf(TensorShape::of(3), x.data() + 8, true);
        leaves.insert(leaves.end(), {xi, m});
        const Var g = t.gram2(xi);
        const Var mixed = t.col_mix2(xi, t.pick(m, 0), t.pick(m, 1), t.pick(m, 2));
        const Var extra = t.ssqrt(t.sadd(t.pick(g, 0), t.pick(g, 2)));
        const Var scaled = t.col_mix2(mixed, extra, t.constant(0.0), extra);
        return t.mse(scaled, t.zeros(t.shape(scaled)));
      },
      flat, kPrimAtol, kPrimRtol);
  INFO(res.detail);
  CHECK(res.ok);
}

TEST_CASE("gradients: scalar trig and division chain") {
  Rng rng(26);
  auto flat = random_vec(2, rng, 0.3, 1.2);
  const auto res = check_gradients(
      [](Tape<double>& t, const std::vector<double>& x, std::vector<Var>& leaves) {
        const Var a = t.leaf(TensorShape::of(1), x.data(), true);
        const Var b = t.leaf(TensorShape::of(1), x.data() + 1, true);
        leaves.insert(leaves.end(), {a, b});
        const Var th = t.satan2(a, b);
        const Var y = t.sadd(t.smul(t.ssin(th), t.scos(th)), t.sdiv(a, t.ssqrt(b)));
        return t.smul(y, y);
      },
      flat, kPrimAtol, kPrimRtol);
  INFO(res.detail);
  CHECK(res.ok);
}

TEST_CASE("gradients: row soft threshold above and below the kink") {
  Rng rng(27);
  // magnitudes around 1, lambda 0.4: active rows
  auto flat = random_vec(12, rng, 0.5, 1.0);
  flat.push_back(0.4);
  auto res = check_gradients(
      [](Tape<double>& t, const std::vector<double>& x, std::vector<Var>& leaves) {
        const Var xi = t.leaf(TensorShape::of(2, 6), x.data(), true);
        const Var lam = t.leaf(TensorShape::of(1), x.data() + 12, true);
        leaves.insert(leaves.end(), {xi, lam});
        return t.mse(t.row_soft_threshold(xi, lam), t.zeros(TensorShape::of(2, 6)));
      },
      flat, kPrimAtol, kPrimRtol);
  INFO(res.detail);
  CHECK(res.ok);

  // lambda far above every magnitude: clamped region, zero gradient everywhere
  Tape<double> t;
  const Var xi = t.leaf(TensorShape::of(2, 6), flat.data(), true);
  const Var lam = t.constant(50.0);
  const Var y = t.row_soft_threshold(xi, lam);
  t.backward(t.mse(y, t.zeros(TensorShape::of(2, 6))));
  for (double g : t.grad(xi)) CHECK(g == 0.0);
}

TEST_CASE("gradients: mse in both arguments") {
  Rng rng(28);
  auto flat = random_vec(10, rng);
  const auto res = check_gradients(
      [](Tape<double>& t, const std::vector<double>& x, std::vector<Var>& leaves) {
        const Var a = t.leaf(TensorShape::of(5), x.data(), true);
        const Var b = t.leaf(TensorShape::of(5), x.data() + 5, true);
        leaves.insert(leaves.end(), {a, b});
        return t.mse(a, b);
      },
      flat, kPrimAtol, kPrimRtol);
  INFO(res.detail);
  CHECK(res.ok);
}

// ---- singular value thresholding ----

TEST_CASE("svd oracle reconstructs its input") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const auto c0 = random_vec(16, rng);
    const auto c1 = random_vec(16, rng);
    CHECK(svd_self_check(c0, c1) < 1e-10);
    const auto d = svd_n_by_2(c0, c1);
    CHECK(d.sigma[0] >= d.sigma[1]);
    CHECK(d.sigma[1] >= 0.0);
    // right vectors orthonormal
    CHECK(std::abs(d.v[0][0] * d.v[1][0] + d.v[0][1] * d.v[1][1]) < 1e-12);
    CHECK(std::abs(d.v[0][0] * d.v[0][0] + d.v[0][1] * d.v[0][1] - 1.0) < 1e-12);
  }
}

TEST_CASE("svt matches a diagonal hand example") {
  Tape<double> t;
  // math matrix rows (3,0) and (0,1): planar x0 = (3,0), x1 = (0,1)
  const std::vector<double> xv{3.0, 0.0, 0.0, 1.0};
  const Var x = t.leaf(TensorShape::of(2, 2), xv.data(), false);
  const Var y = t.svt(x, t.constant(1.0));
  const auto v = t.value(y);
  CHECK(std::abs(v[0] - 2.0) < 1e-9);
  CHECK(std::abs(v[1]) < 1e-9);
  CHECK(std::abs(v[2]) < 1e-9);
  CHECK(std::abs(v[3]) < 1e-9);
}

TEST_CASE("svt with zero threshold is the identity") {
  Rng rng(32);
  Tape<double> t;
  const auto xv = random_vec(64, rng);
  const Var x = t.leaf(TensorShape::of(2, 32), xv.data(), false);
  const Var y = t.svt(x, t.constant(0.0));
  const auto v = t.value(y);
  for (std::size_t i = 0; i < xv.size(); ++i) CHECK(std::abs(v[i] - xv[i]) < 1e-9);
}

TEST_CASE("svt zeroes the matrix when the threshold dominates") {
  Rng rng(33);
  Tape<double> t;
  const auto xv = random_vec(32, rng);
  const Var x = t.leaf(TensorShape::of(2, 16), xv.data(), false);
  const Var y = t.svt(x, t.constant(100.0));
  for (double v : t.value(y)) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("svt agrees with the jacobi oracle on random matrices") {
  Rng rng(34);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto xv = random_vec(32, rng, -2.0, 2.0);
    const double lam = rng.uniform(0.0, 6.0);
    Tape<double> t;
    const Var x = t.leaf(TensorShape::of(2, 16), xv.data(), false);
    const Var y = t.svt(x, t.constant(lam));
    const auto got = t.value(y);

    std::vector<double> c0, c1, o0, o1;
    split_cols(xv, c0, c1);
    svt_oracle(c0, c1, lam, o0, o1);
    for (std::size_t i = 0; i < 16; ++i) {
      worst = std::max(worst, std::abs(got[i] - o0[i]));
      worst = std::max(worst, std::abs(got[16 + i] - o1[i]));
    }
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("svt is non-expansive and caps singular values") {
  Rng rng(35);
  for (int trial = 0; trial < 50; ++trial) {
    const auto xv = random_vec(40, rng, -3.0, 3.0);
    const double lam = rng.uniform(0.1, 4.0);
    Tape<double> t;
    const Var x = t.leaf(TensorShape::of(2, 20), xv.data(), false);
    const Var y = t.svt(x, t.constant(lam));
    const auto got = t.value(y);

    double nx = 0.0, ny = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) {
      nx += xv[i] * xv[i];
      ny += got[i] * got[i];
    }
    CHECK(ny <= nx + 1e-12);

    std::vector<double> c0, c1;
    std::vector<double> y0(got.begin(), got.begin() + 20), y1(got.begin() + 20, got.end());
    split_cols(xv, c0, c1);
    const auto din = svd_n_by_2(c0, c1);
    const auto dout = svd_n_by_2(y0, y1);
    CHECK(dout.sigma[0] <= std::max(din.sigma[0] - lam, 0.0) + 1e-9);
    CHECK(dout.sigma[1] <= std::max(din.sigma[1] - lam, 0.0) + 1e-9);
  }
}

TEST_CASE("gradients: svt composition against finite differences") {
  Rng rng(36);
  int done = 0;
  while (done < 5) {
    auto xv = random_vec(16, rng, -1.5, 1.5);
    const double lam = rng.uniform(0.2, 1.5);
    std::vector<double> c0, c1;
    split_cols(xv, c0, c1);
    const auto d = svd_n_by_2(c0, c1);
    // keep clear of the eigenvalue crossing and the shrink kinks
    if (d.sigma[0] - d.sigma[1] < 1e-3) continue;
    if (std::abs(d.sigma[0] - lam) < 1e-3 || std::abs(d.sigma[1] - lam) < 1e-3) continue;
    ++done;
    xv.push_back(lam);
    const auto res = check_gradients(
        [](Tape<double>& t, const std::vector<double>& x, std::vector<Var>& leaves) {
          const Var xi = t.leaf(TensorShape::of(2, 8), x.data(), true);
          const Var lv = t.leaf(TensorShape::of(1), x.data() + 16, true);
          leaves.insert(leaves.end(), {xi, lv});
          return t.mse(t.svt(xi, lv), t.zeros(TensorShape::of(2, 8)));
        },
        xv, 1e-8, 1e-5);
    INFO(res.detail);
    CHECK(res.ok);
  }
}

TEST_CASE("float tape agrees with the double tape to single precision") {
  Rng rng(37);
  const auto xd = random_vec(12, rng);
  std::vector<float> xf(xd.begin(), xd.end());
  const std::vector<double> wd = random_vec(6, rng);
  std::vector<float> wf(wd.begin(), wd.end());
  const std::vector<double> bd{0.1};
  const std::vector<float> bf{0.1f};

  Tape<double> td;
  const Var yd = td.conv1d(td.leaf(TensorShape::of(2, 6), xd.data(), false),
                           td.leaf(TensorShape::of(1, 2, 3), wd.data(), false),
                           td.leaf(TensorShape::of(1), bd.data(), false), 1, 1);
  Tape<float> tf;
  const Var yf = tf.conv1d(tf.leaf(TensorShape::of(2, 6), xf.data(), false),
                           tf.leaf(TensorShape::of(1, 2, 3), wf.data(), false),
                           tf.leaf(TensorShape::of(1), bf.data(), false), 1, 1);
  const auto vd = td.value(yd);
  const auto vf = tf.value(yf);
  REQUIRE(vd.size() == vf.size());
  for (std::size_t i = 0; i < vd.size(); ++i) CHECK(std::abs(vd[i] - double(vf[i])) < 1e-5);
}
