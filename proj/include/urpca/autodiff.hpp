#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

namespace urpca {

struct TensorShape {
  std::array<int, 3> d{1, 1, 1};
  int nd = 1;

  static TensorShape of(int n) { return {{n, 1, 1}, 1}; }
  static TensorShape of(int a, int b) { return {{a, b, 1}, 2}; }
  static TensorShape of(int a, int b, int c) { return {{a, b, c}, 3}; }

  int numel() const { return d[0] * d[1] * d[2]; }
  bool operator==(const TensorShape& o) const { return nd == o.nd && d == o.d; }
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over the primitives the unfolded network needs.
/// Nodes are appended in execution order, so a single reverse sweep visits
/// each node after all of its consumers.
template <typename T>
class Tape {
  enum class Op {
    kLeaf, kConv1d, kConvT1d, kRelu, kAdd, kScale, kMse,
    kGram2, kColMix2, kRowSoftThresh, kPick,
    kSAdd, kSSub, kSMul, kSDiv, kSSqrt, kSSin, kSCos, kSAtan2,
  };

  struct Node {
    Op op;
    TensorShape shape;
    std::array<int, 4> in{-1, -1, -1, -1};
    int i0 = 0, i1 = 0, i2 = 0;  // conv kernel/stride/pad, pick index
    T c = T(0);                  // scale factor
    bool needs_grad = false;
    std::vector<T> val, grad;
  };

  static constexpr T kEps = T(1e-12);       // magnitude guard in the proximal operators
  static constexpr T kDerivGuard = T(1e-30);

public:
  // ---- graph construction ----

  Var leaf(TensorShape shape, const T* data, bool needs_grad) {
    Node& n = push(Op::kLeaf, shape, needs_grad);
    if (data) std::copy(data, data + shape.numel(), n.val.begin());
    else std::fill(n.val.begin(), n.val.end(), T(0));
    return Var{int(nodes_.size()) - 1};
  }

  Var zeros(TensorShape shape) { return leaf(shape, nullptr, false); }

  Var constant(T value) {
    Var v = leaf(TensorShape::of(1), nullptr, false);
    nodes_[v.id].val[0] = value;
    return v;
  }

  Var conv1d(Var x, Var w, Var b, int stride, int pad) {
    const Node& xn = node(x);
    const Node& wn = node(w);
    const Node& bn = node(b);
    if (xn.shape.nd != 2 || wn.shape.nd != 3 || bn.shape.nd != 1)
      throw std::invalid_argument("conv1d: bad ranks");
    const int ci = xn.shape.d[0], len = xn.shape.d[1];
    const int co = wn.shape.d[0], k = wn.shape.d[2];
    if (wn.shape.d[1] != ci || bn.shape.d[0] != co)
      throw std::invalid_argument("conv1d: incompatible shapes");
    if (stride < 1 || pad < 0 || k < 1) throw std::invalid_argument("conv1d: bad geometry");
    const int lout = (len + 2 * pad - k) / stride + 1;
    if (lout < 1) throw std::invalid_argument("conv1d: empty output");
    Node& n = push(Op::kConv1d, TensorShape::of(co, lout),
                   xn.needs_grad || wn.needs_grad || bn.needs_grad, x, w, b);
    n.i0 = k; n.i1 = stride; n.i2 = pad;
    conv_forward(node(x), node(w), node(b), n);
    return last();
  }

  // Transposed convolution, stride s, no padding: length L -> (L-1)*s + k.
  // Weight layout is (C_in, C_out, k).
  Var conv1d_transposed(Var x, Var w, Var b, int stride) {
    const Node& xn = node(x);
    const Node& wn = node(w);
    const Node& bn = node(b);
    if (xn.shape.nd != 2 || wn.shape.nd != 3 || bn.shape.nd != 1)
      throw std::invalid_argument("conv1d_transposed: bad ranks");
    const int ci = xn.shape.d[0], len = xn.shape.d[1];
    const int co = wn.shape.d[1], k = wn.shape.d[2];
    if (wn.shape.d[0] != ci || bn.shape.d[0] != co)
      throw std::invalid_argument("conv1d_transposed: incompatible shapes");
    if (stride < 1 || k < stride) throw std::invalid_argument("conv1d_transposed: bad geometry");
    const int lout = (len - 1) * stride + k;
    Node& n = push(Op::kConvT1d, TensorShape::of(co, lout),
                   xn.needs_grad || wn.needs_grad || bn.needs_grad, x, w, b);
    n.i0 = k; n.i1 = stride;
    convt_forward(node(x), node(w), node(b), n);
    return last();
  }

  Var relu(Var x) {
    const Node& xn = node(x);
    Node& n = push(Op::kRelu, xn.shape, xn.needs_grad, x);
    const T* xv = node(x).val.data();
    T* yv = n.val.data();
    const int m = n.shape.numel();
    #pragma omp simd
    for (int i = 0; i < m; ++i) yv[i] = xv[i] > T(0) ? xv[i] : T(0);
    return last();
  }

  Var add(Var a, Var b) {
    const Node& an = node(a);
    const Node& bn = node(b);
    if (!(an.shape == bn.shape)) throw std::invalid_argument("add: shape mismatch");
    Node& n = push(Op::kAdd, an.shape, an.needs_grad || bn.needs_grad, a, b);
    const T* av = node(a).val.data();
    const T* bv = node(b).val.data();
    T* yv = n.val.data();
    const int m = n.shape.numel();
    #pragma omp simd
    for (int i = 0; i < m; ++i) yv[i] = av[i] + bv[i];
    return last();
  }

  Var scale(Var x, T c) {
    const Node& xn = node(x);
    Node& n = push(Op::kScale, xn.shape, xn.needs_grad, x);
    n.c = c;
    const T* xv = node(x).val.data();
    T* yv = n.val.data();
    const int m = n.shape.numel();
    #pragma omp simd
    for (int i = 0; i < m; ++i) yv[i] = c * xv[i];
    return last();
  }

  Var mse(Var a, Var b) {
    const Node& an = node(a);
    const Node& bn = node(b);
    if (!(an.shape == bn.shape)) throw std::invalid_argument("mse: shape mismatch");
    const int m = an.shape.numel();  // before push: growing nodes_ invalidates an/bn
    Node& n = push(Op::kMse, TensorShape::of(1), an.needs_grad || bn.needs_grad, a, b);
    const T* av = node(a).val.data();
    const T* bv = node(b).val.data();
    T acc = T(0);
    #pragma omp simd reduction(+ : acc)
    for (int i = 0; i < m; ++i) {
      const T d = av[i] - bv[i];
      acc += d * d;
    }
    n.val[0] = acc / T(m);
    return last();
  }

  // Column Gram of a (2, L) tensor: (sum x0^2, sum x0*x1, sum x1^2).
  Var gram2(Var x) {
    const Node& xn = node(x);
    if (xn.shape.nd != 2 || xn.shape.d[0] != 2) throw std::invalid_argument("gram2: need (2, L)");
    const int len = xn.shape.d[1];  // before push: growing nodes_ invalidates xn
    Node& n = push(Op::kGram2, TensorShape::of(3), xn.needs_grad, x);
    const T* x0 = node(x).val.data();
    const T* x1 = x0 + len;
    T a = T(0), b = T(0), c = T(0);
    #pragma omp simd reduction(+ : a, b, c)
    for (int i = 0; i < len; ++i) {
      a += x0[i] * x0[i];
      b += x0[i] * x1[i];
      c += x1[i] * x1[i];
    }
    n.val[0] = a; n.val[1] = b; n.val[2] = c;
    return last();
  }

  // Right-multiply a (2, L) tensor by the symmetric 2x2 [[m11, m12], [m12, m22]].
  Var col_mix2(Var x, Var m11, Var m12, Var m22) {
    const Node& xn = node(x);
    if (xn.shape.nd != 2 || xn.shape.d[0] != 2)
      throw std::invalid_argument("col_mix2: need (2, L)");
    check_scalar(m11); check_scalar(m12); check_scalar(m22);
    const bool g = xn.needs_grad || node(m11).needs_grad || node(m12).needs_grad ||
                   node(m22).needs_grad;
    const int len = xn.shape.d[1];  // before push: growing nodes_ invalidates xn
    Node& n = push(Op::kColMix2, xn.shape, g, x, m11, m12, m22);
    const T* x0 = node(x).val.data();
    const T* x1 = x0 + len;
    const T a = node(m11).val[0], b = node(m12).val[0], c = node(m22).val[0];
    T* y0 = n.val.data();
    T* y1 = y0 + len;
    #pragma omp simd
    for (int i = 0; i < len; ++i) {
      y0[i] = a * x0[i] + b * x1[i];
      y1[i] = b * x0[i] + c * x1[i];
    }
    return last();
  }

  // Row-wise complex soft-threshold of a (2, L) tensor:
  // row * max(1 - lambda/(|row| + eps), 0).
  Var row_soft_threshold(Var x, Var lambda) {
    const Node& xn = node(x);
    if (xn.shape.nd != 2 || xn.shape.d[0] != 2)
      throw std::invalid_argument("row_soft_threshold: need (2, L)");
    check_scalar(lambda);
    const int len = xn.shape.d[1];  // before push: growing nodes_ invalidates xn
    Node& n = push(Op::kRowSoftThresh, xn.shape, xn.needs_grad || node(lambda).needs_grad,
                   x, lambda);
    const T* x0 = node(x).val.data();
    const T* x1 = x0 + len;
    const T lam = node(lambda).val[0];
    T* y0 = n.val.data();
    T* y1 = y0 + len;
    for (int i = 0; i < len; ++i) {
      const T m = std::sqrt(x0[i] * x0[i] + x1[i] * x1[i]);
      const T s = std::max(T(1) - lam / (m + kEps), T(0));
      y0[i] = s * x0[i];
      y1[i] = s * x1[i];
    }
    return last();
  }

  Var pick(Var x, int index) {
    const Node& xn = node(x);
    if (index < 0 || index >= xn.shape.numel()) throw std::invalid_argument("pick: bad index");
    Node& n = push(Op::kPick, TensorShape::of(1), xn.needs_grad, x);
    n.i0 = index;
    n.val[0] = node(x).val[index];
    return last();
  }

  // ---- scalar primitives ----

  Var sadd(Var a, Var b) { return sbinary(Op::kSAdd, a, b); }
  Var ssub(Var a, Var b) { return sbinary(Op::kSSub, a, b); }
  Var smul(Var a, Var b) { return sbinary(Op::kSMul, a, b); }
  Var sdiv(Var a, Var b) { return sbinary(Op::kSDiv, a, b); }
  Var satan2(Var y, Var x) { return sbinary(Op::kSAtan2, y, x); }
  Var ssqrt(Var x) { return sunary(Op::kSSqrt, x); }
  Var ssin(Var x) { return sunary(Op::kSSin, x); }
  Var scos(Var x) { return sunary(Op::kSCos, x); }

  /// Singular value thresholding of a (2, L) tensor seen as an L x 2 matrix,
  /// composed from tape primitives. U is never formed: the column Gram is
  /// eigendecomposed in closed form and the shrinkage is applied as a
  /// symmetric 2x2 right-multiplication.
  Var svt(Var x, Var lambda) {
    Var g = gram2(x);
    Var a = pick(g, 0), b = pick(g, 1), c = pick(g, 2);
    Var two = constant(T(2)), half = constant(T(0.5)), eps = constant(kEps);
    Var theta = smul(satan2(smul(b, two), ssub(a, c)), half);
    Var cs = scos(theta), sn = ssin(theta);
    Var cs2 = smul(cs, cs), sn2 = smul(sn, sn), csn = smul(cs, sn);
    Var cross = smul(smul(b, csn), two);
    Var e1 = sadd(sadd(smul(a, cs2), cross), smul(c, sn2));
    Var e2 = ssub(sadd(smul(a, sn2), smul(c, cs2)), cross);
    Var s1 = ssqrt(relu(e1));
    Var s2 = ssqrt(relu(e2));
    Var t1 = sdiv(relu(ssub(s1, lambda)), sadd(s1, eps));
    Var t2 = sdiv(relu(ssub(s2, lambda)), sadd(s2, eps));
    Var m11 = sadd(smul(t1, cs2), smul(t2, sn2));
    Var m12 = smul(ssub(t1, t2), csn);
    Var m22 = sadd(smul(t1, sn2), smul(t2, cs2));
    return col_mix2(x, m11, m12, m22);
  }

  // ---- execution ----

  /// Reverse sweep from a scalar loss. Gradients accumulate additively at
  /// fan-out; each node is visited exactly once.
  void backward(Var loss) {
    Node& ln = node(loss);
    if (ln.shape.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
    for (auto& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), T(0));
    ln.grad[0] = T(1);
    for (int id = loss.id; id >= 0; --id) backward_node(id);
  }

  std::span<const T> value(Var v) const { return {node(v).val.data(), node(v).val.size()}; }
  std::span<const T> grad(Var v) const { return {node(v).grad.data(), node(v).grad.size()}; }
  TensorShape shape(Var v) const { return node(v).shape; }
  std::size_t size() const { return nodes_.size(); }

  /// Drops the graph, recycling node storage for the next build.
  void reset() {
    for (auto& n : nodes_) {
      pool_release(std::move(n.val));
      pool_release(std::move(n.grad));
    }
    nodes_.clear();
  }

private:
  Node& node(Var v) {
    if (!v.valid() || v.id >= int(nodes_.size())) throw std::invalid_argument("bad var");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (!v.valid() || v.id >= int(nodes_.size())) throw std::invalid_argument("bad var");
    return nodes_[v.id];
  }

  void check_scalar(Var v) const {
    if (node(v).shape.numel() != 1) throw std::invalid_argument("expected scalar operand");
  }

  Var last() const { return Var{int(nodes_.size()) - 1}; }

  Node& push(Op op, TensorShape shape, bool needs_grad,
             Var a = {}, Var b = {}, Var c = {}, Var d = {}) {
    Node n;
    n.op = op;
    n.shape = shape;
    n.in = {a.id, b.id, c.id, d.id};
    n.needs_grad = needs_grad;
    const std::size_t m = static_cast<std::size_t>(shape.numel());
    n.val = pool_acquire(m);
    n.grad = pool_acquire(m);
    nodes_.push_back(std::move(n));
    return nodes_.back();
  }

  Var sbinary(Op op, Var a, Var b) {
    check_scalar(a); check_scalar(b);
    Node& n = push(op, TensorShape::of(1), node(a).needs_grad || node(b).needs_grad, a, b);
    const T x = node(a).val[0], y = node(b).val[0];
    switch (op) {
      case Op::kSAdd: n.val[0] = x + y; break;
      case Op::kSSub: n.val[0] = x - y; break;
      case Op::kSMul: n.val[0] = x * y; break;
      case Op::kSDiv: n.val[0] = x / y; break;
      case Op::kSAtan2: n.val[0] = std::atan2(x, y); break;
      default: throw std::logic_error("sbinary");
    }
    return last();
  }

  Var sunary(Op op, Var a) {
    check_scalar(a);
    Node& n = push(op, TensorShape::of(1), node(a).needs_grad, a);
    const T x = node(a).val[0];
    switch (op) {
      case Op::kSSqrt: n.val[0] = std::sqrt(x); break;
      case Op::kSSin: n.val[0] = std::sin(x); break;
      case Op::kSCos: n.val[0] = std::cos(x); break;
      default: throw std::logic_error("sunary");
    }
    return last();
  }

  // ---- convolution kernels ----

  void conv_forward(const Node& xn, const Node& wn, const Node& bn, Node& yn) {
    const int ci_n = xn.shape.d[0], len = xn.shape.d[1];
    const int co_n = yn.shape.d[0], lout = yn.shape.d[1];
    const int k = yn.i0, stride = yn.i1, pad = yn.i2;
    const T* x = xn.val.data();
    const T* w = wn.val.data();
    const T* b = bn.val.data();
    T* y = yn.val.data();
    if (stride == 1) {
      for (int co = 0; co < co_n; ++co) {
        T* yr = y + co * lout;
        std::fill(yr, yr + lout, b[co]);
        for (int ci = 0; ci < ci_n; ++ci) {
          const T* xr = x + ci * len;
          const T* wr = w + (co * ci_n + ci) * k;
          for (int t = 0; t < k; ++t) {
            const int off = t - pad;
            const int lo = std::max(0, -off);
            const int hi = std::min(lout, len - off);
            const T ws = wr[t];
            const T* xs = xr + off;
            #pragma omp simd
            for (int l = lo; l < hi; ++l) yr[l] += ws * xs[l];
          }
        }
      }
    } else {
      for (int co = 0; co < co_n; ++co) {
        for (int l = 0; l < lout; ++l) {
          T acc = b[co];
          for (int ci = 0; ci < ci_n; ++ci) {
            const T* xr = x + ci * len;
            const T* wr = w + (co * ci_n + ci) * k;
            for (int t = 0; t < k; ++t) {
              const int idx = l * stride - pad + t;
              if (idx >= 0 && idx < len) acc += wr[t] * xr[idx];
            }
          }
          y[co * lout + l] = acc;
        }
      }
    }
  }

  void conv_backward(Node& xn, Node& wn, Node& bn, const Node& yn) {
    const int ci_n = xn.shape.d[0], len = xn.shape.d[1];
    const int co_n = yn.shape.d[0], lout = yn.shape.d[1];
    const int k = yn.i0, stride = yn.i1, pad = yn.i2;
    const T* x = xn.val.data();
    const T* w = wn.val.data();
    const T* dy = yn.grad.data();
    if (bn.needs_grad) {
      T* db = bn.grad.data();
      for (int co = 0; co < co_n; ++co) {
        const T* dyr = dy + co * lout;
        T acc = T(0);
        #pragma omp simd reduction(+ : acc)
        for (int l = 0; l < lout; ++l) acc += dyr[l];
        db[co] += acc;
      }
    }
    if (stride == 1) {
      if (wn.needs_grad) {
        T* dw = wn.grad.data();
        for (int co = 0; co < co_n; ++co) {
          const T* dyr = dy + co * lout;
          for (int ci = 0; ci < ci_n; ++ci) {
            const T* xr = x + ci * len;
            T* dwr = dw + (co * ci_n + ci) * k;
            for (int t = 0; t < k; ++t) {
              const int off = t - pad;
              const int lo = std::max(0, -off);
              const int hi = std::min(lout, len - off);
              const T* xs = xr + off;
              T acc = T(0);
              #pragma omp simd reduction(+ : acc)
              for (int l = lo; l < hi; ++l) acc += dyr[l] * xs[l];
              dwr[t] += acc;
            }
          }
        }
      }
      if (xn.needs_grad) {
        T* dx = xn.grad.data();
        for (int co = 0; co < co_n; ++co) {
          const T* dyr = dy + co * lout;
          for (int ci = 0; ci < ci_n; ++ci) {
            T* dxr = dx + ci * len;
            const T* wr = w + (co * ci_n + ci) * k;
            for (int t = 0; t < k; ++t) {
              const int off = t - pad;
              const int lo = std::max(0, -off);
              const int hi = std::min(lout, len - off);
              const T ws = wr[t];
              T* dxs = dxr + off;
              #pragma omp simd
              for (int l = lo; l < hi; ++l) dxs[l] += ws * dyr[l];
            }
          }
        }
      }
    } else {
      for (int co = 0; co < co_n; ++co) {
        for (int l = 0; l < lout; ++l) {
          const T g = dy[co * lout + l];
          for (int ci = 0; ci < ci_n; ++ci) {
            for (int t = 0; t < k; ++t) {
              const int idx = l * stride - pad + t;
              if (idx < 0 || idx >= len) continue;
              if (wn.needs_grad) wn.grad[(co * ci_n + ci) * k + t] += g * x[ci * len + idx];
              if (xn.needs_grad) xn.grad[ci * len + idx] += g * w[(co * ci_n + ci) * k + t];
            }
          }
        }
      }
    }
  }

  void convt_forward(const Node& xn, const Node& wn, const Node& bn, Node& yn) {
    const int ci_n = xn.shape.d[0], len = xn.shape.d[1];
    const int co_n = yn.shape.d[0], lout = yn.shape.d[1];
    const int k = yn.i0, stride = yn.i1;
    const T* x = xn.val.data();
    const T* w = wn.val.data();
    const T* b = bn.val.data();
    T* y = yn.val.data();
    for (int co = 0; co < co_n; ++co) std::fill(y + co * lout, y + (co + 1) * lout, b[co]);
    for (int ci = 0; ci < ci_n; ++ci) {
      for (int l = 0; l < len; ++l) {
        const T xv = x[ci * len + l];
        for (int co = 0; co < co_n; ++co) {
          const T* wr = w + (ci * co_n + co) * k;
          T* yr = y + co * lout + l * stride;
          for (int t = 0; t < k; ++t) yr[t] += wr[t] * xv;
        }
      }
    }
  }

  void convt_backward(Node& xn, Node& wn, Node& bn, const Node& yn) {
    const int ci_n = xn.shape.d[0], len = xn.shape.d[1];
    const int co_n = yn.shape.d[0], lout = yn.shape.d[1];
    const int k = yn.i0, stride = yn.i1;
    const T* x = xn.val.data();
    const T* w = wn.val.data();
    const T* dy = yn.grad.data();
    if (bn.needs_grad) {
      for (int co = 0; co < co_n; ++co) {
        T acc = T(0);
        const T* dyr = dy + co * lout;
        #pragma omp simd reduction(+ : acc)
        for (int l = 0; l < lout; ++l) acc += dyr[l];
        bn.grad[co] += acc;
      }
    }
    for (int ci = 0; ci < ci_n; ++ci) {
      for (int l = 0; l < len; ++l) {
        const T xv = x[ci * len + l];
        T dxacc = T(0);
        for (int co = 0; co < co_n; ++co) {
          const T* wr = w + (ci * co_n + co) * k;
          const T* dyr = dy + co * lout + l * stride;
          for (int t = 0; t < k; ++t) {
            if (wn.needs_grad) wn.grad[(ci * co_n + co) * k + t] += dyr[t] * xv;
            dxacc += wr[t] * dyr[t];
          }
        }
        if (xn.needs_grad) xn.grad[ci * len + l] += dxacc;
      }
    }
  }

  // ---- backward dispatch ----

  void backward_node(int id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.op == Op::kLeaf) return;
    Node* a = n.in[0] >= 0 ? &nodes_[n.in[0]] : nullptr;
    Node* b = n.in[1] >= 0 ? &nodes_[n.in[1]] : nullptr;
    switch (n.op) {
      case Op::kConv1d:
        conv_backward(*a, *b, nodes_[n.in[2]], n);
        break;
      case Op::kConvT1d:
        convt_backward(*a, *b, nodes_[n.in[2]], n);
        break;
      case Op::kRelu: {
        if (!a->needs_grad) break;
        const int m = n.shape.numel();
        const T* xv = a->val.data();
        const T* dy = n.grad.data();
        T* dx = a->grad.data();
        #pragma omp simd
        for (int i = 0; i < m; ++i) dx[i] += xv[i] > T(0) ? dy[i] : T(0);
        break;
      }
      case Op::kAdd: {
        const int m = n.shape.numel();
        const T* dy = n.grad.data();
        if (a->needs_grad) {
          T* da = a->grad.data();
          #pragma omp simd
          for (int i = 0; i < m; ++i) da[i] += dy[i];
        }
        if (b->needs_grad) {
          T* db = b->grad.data();
          #pragma omp simd
          for (int i = 0; i < m; ++i) db[i] += dy[i];
        }
        break;
      }
      case Op::kScale: {
        if (!a->needs_grad) break;
        const int m = n.shape.numel();
        const T* dy = n.grad.data();
        const T c = n.c;
        T* dx = a->grad.data();
        #pragma omp simd
        for (int i = 0; i < m; ++i) dx[i] += c * dy[i];
        break;
      }
      case Op::kMse: {
        const int m = a->shape.numel();
        const T g = n.grad[0] * T(2) / T(m);
        const T* av = a->val.data();
        const T* bv = b->val.data();
        if (a->needs_grad) {
          T* da = a->grad.data();
          #pragma omp simd
          for (int i = 0; i < m; ++i) da[i] += g * (av[i] - bv[i]);
        }
        if (b->needs_grad) {
          T* db = b->grad.data();
          #pragma omp simd
          for (int i = 0; i < m; ++i) db[i] -= g * (av[i] - bv[i]);
        }
        break;
      }
      case Op::kGram2: {
        if (!a->needs_grad) break;
        const int len = a->shape.d[1];
        const T* x0 = a->val.data();
        const T* x1 = x0 + len;
        T* dx0 = a->grad.data();
        T* dx1 = dx0 + len;
        const T ga = n.grad[0], gb = n.grad[1], gc = n.grad[2];
        #pragma omp simd
        for (int i = 0; i < len; ++i) {
          dx0[i] += T(2) * ga * x0[i] + gb * x1[i];
          dx1[i] += gb * x0[i] + T(2) * gc * x1[i];
        }
        break;
      }
      case Op::kColMix2: {
        Node& m11 = nodes_[n.in[1]];
        Node& m12 = nodes_[n.in[2]];
        Node& m22 = nodes_[n.in[3]];
        const int len = n.shape.d[1];
        const T* x0 = a->val.data();
        const T* x1 = x0 + len;
        const T* dy0 = n.grad.data();
        const T* dy1 = dy0 + len;
        if (a->needs_grad) {
          const T va = m11.val[0], vb = m12.val[0], vc = m22.val[0];
          T* dx0 = a->grad.data();
          T* dx1 = dx0 + len;
          #pragma omp simd
          for (int i = 0; i < len; ++i) {
            dx0[i] += va * dy0[i] + vb * dy1[i];
            dx1[i] += vb * dy0[i] + vc * dy1[i];
          }
        }
        T da = T(0), db = T(0), dc = T(0);
        #pragma omp simd reduction(+ : da, db, dc)
        for (int i = 0; i < len; ++i) {
          da += dy0[i] * x0[i];
          db += dy0[i] * x1[i] + dy1[i] * x0[i];
          dc += dy1[i] * x1[i];
        }
        if (m11.needs_grad) m11.grad[0] += da;
        if (m12.needs_grad) m12.grad[0] += db;
        if (m22.needs_grad) m22.grad[0] += dc;
        break;
      }
      case Op::kRowSoftThresh: {
        Node& ln = nodes_[n.in[1]];
        const int len = n.shape.d[1];
        const T* x0 = a->val.data();
        const T* x1 = x0 + len;
        const T* dy0 = n.grad.data();
        const T* dy1 = dy0 + len;
        const T lam = ln.val[0];
        T* dx0 = a->needs_grad ? a->grad.data() : nullptr;
        T* dx1 = dx0 ? dx0 + len : nullptr;
        T dlam = T(0);
        for (int i = 0; i < len; ++i) {
          const T m = std::sqrt(x0[i] * x0[i] + x1[i] * x1[i]);
          const T u = T(1) - lam / (m + kEps);
          if (u <= T(0)) continue;  // shrunk to zero; subgradient 0
          if (dx0) {
            if (m > T(0)) {
              const T c = lam / ((m + kEps) * (m + kEps) * m);
              dx0[i] += dy0[i] * (u + c * x0[i] * x0[i]) + dy1[i] * c * x0[i] * x1[i];
              dx1[i] += dy0[i] * c * x0[i] * x1[i] + dy1[i] * (u + c * x1[i] * x1[i]);
            } else {
              dx0[i] += u * dy0[i];
              dx1[i] += u * dy1[i];
            }
          }
          dlam -= (dy0[i] * x0[i] + dy1[i] * x1[i]) / (m + kEps);
        }
        if (ln.needs_grad) ln.grad[0] += dlam;
        break;
      }
      case Op::kPick:
        if (a->needs_grad) a->grad[n.i0] += n.grad[0];
        break;
      case Op::kSAdd:
        if (a->needs_grad) a->grad[0] += n.grad[0];
        if (b->needs_grad) b->grad[0] += n.grad[0];
        break;
      case Op::kSSub:
        if (a->needs_grad) a->grad[0] += n.grad[0];
        if (b->needs_grad) b->grad[0] -= n.grad[0];
        break;
      case Op::kSMul:
        if (a->needs_grad) a->grad[0] += n.grad[0] * b->val[0];
        if (b->needs_grad) b->grad[0] += n.grad[0] * a->val[0];
        break;
      case Op::kSDiv:
        if (a->needs_grad) a->grad[0] += n.grad[0] / b->val[0];
        if (b->needs_grad) b->grad[0] -= n.grad[0] * a->val[0] / (b->val[0] * b->val[0]);
        break;
      case Op::kSSqrt:
        if (a->needs_grad) a->grad[0] += n.grad[0] * T(0.5) / (n.val[0] + kDerivGuard);
        break;
      case Op::kSSin:
        if (a->needs_grad) a->grad[0] += n.grad[0] * std::cos(a->val[0]);
        break;
      case Op::kSCos:
        if (a->needs_grad) a->grad[0] -= n.grad[0] * std::sin(a->val[0]);
        break;
      case Op::kSAtan2: {
        const T y = a->val[0], x = b->val[0];
        const T r2 = x * x + y * y + kDerivGuard;
        if (a->needs_grad) a->grad[0] += n.grad[0] * x / r2;
        if (b->needs_grad) b->grad[0] -= n.grad[0] * y / r2;
        break;
      }
      case Op::kLeaf:
        break;
      default:
        throw std::logic_error("backward: unhandled op");
    }
  }

  // ---- storage pool ----

  std::vector<T> pool_acquire(std::size_t n) {
    auto it = pool_.find(n);
    if (it != pool_.end() && !it->second.empty()) {
      std::vector<T> v = std::move(it->second.back());
      it->second.pop_back();
      return v;
    }
    return std::vector<T>(n);
  }

  void pool_release(std::vector<T>&& v) { pool_[v.size()].push_back(std::move(v)); }

  std::vector<Node> nodes_;
  std::map<std::size_t, std::vector<std::vector<T>>> pool_;
};

}  // namespace urpca
