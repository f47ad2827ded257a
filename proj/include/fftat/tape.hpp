#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fftat/common.hpp"
#include "fftat/kernels.hpp"
#include "fftat/tensor.hpp"

namespace fftat {

// Reverse-mode autodiff over a tape of immutable forward values. Nodes are
// appended in construction order (which is therefore topological); backward
// is a single reverse sweep. Values never change after construction, only
// grad buffers accumulate, and every accumulation is element-independent or
// serially ordered, so runs are bit-reproducible.

template <typename T>
class Tape;

template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

template <typename T>
class Tape {
 public:
  struct Node {
    Tensor<T> value;
    std::vector<T> grad;  // allocated on backward, same numel as value
    bool requires_grad = false;
    std::function<void(Tape&)> backward;
    const char* op = "leaf";
  };

  Var<T> leaf(Tensor<T> v, bool requires_grad = false) {
    Node n;
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return {this, int(nodes_.size()) - 1};
  }

  Var<T> constant(Tensor<T> v) { return leaf(std::move(v), false); }

  Var<T> emplace(Tensor<T> value, bool requires_grad, const char* op,
                 std::function<void(Tape&)> backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.op = op;
    if (requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, int(nodes_.size()) - 1};
  }

  const Tensor<T>& val(Var<T> v) const { return nodes_[v.id].value; }
  const Tensor<T>& val(int id) const { return nodes_[id].value; }

  // When set, stop_gradient and gradient_reversal become true identities so
  // the whole graph is an honest differentiable function. Central-difference
  // checks need this: those two ops' backward passes disagree with the
  // forward value on purpose, which is exactly what finite differences
  // measure. Never set during training.
  bool flow_control_bypass = false;
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  std::vector<T>& grad_buf(int id) { return nodes_[id].grad; }

  // zero if the node never received gradient (e.g. cut by stop_gradient)
  std::vector<T> grad(Var<T> v) const {
    const Node& n = nodes_[v.id];
    if (!n.grad.empty()) return n.grad;
    return std::vector<T>(n.value.numel(), T(0));
  }

  void backward(Var<T> root) {
    check(root.tape == this, "backward: root from another tape");
    check(val(root).numel() == 1, "backward: root must be scalar, got shape ",
          shape_str(val(root).shape));
    for (int i = 0; i <= root.id; ++i) {
      Node& n = nodes_[i];
      if (n.requires_grad && n.grad.empty()) n.grad.assign(n.value.numel(), T(0));
    }
    if (!nodes_[root.id].requires_grad) return;
    nodes_[root.id].grad[0] += T(1);
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.requires_grad && n.backward) n.backward(*this);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

namespace ops {

template <typename T>
Tape<T>& tape_of(Var<T> a) {
  check(a.valid(), "op on invalid Var");
  return *a.tape;
}

template <typename T>
void check_same_tape(Var<T> a, Var<T> b, const char* op) {
  check(a.tape == b.tape, op, ": operands from different tapes");
}

// ---------------------------------------------------------------------------
// op constructors; the node id is captured before emplace so the backward
// closure can find its own grad buffer

// the backward callable is a template parameter: deducing T through a
// std::function parameter would reject every lambda call site
template <typename T, typename F>
Var<T> make_unary(Var<T> a, Tensor<T> out, const char* op, F back) {
  Tape<T>& t = tape_of(a);
  bool rg = t.requires_grad(a.id);
  int ai = a.id;
  int out_id = int(t.size());
  return t.emplace(std::move(out), rg, op,
                   [ai, out_id, back](Tape<T>& t) { back(t, out_id, ai); });
}

template <typename T, typename F>
Var<T> make_binary(Var<T> a, Var<T> b, Tensor<T> out, const char* op, F back) {
  Tape<T>& t = tape_of(a);
  check_same_tape(a, b, op);
  bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
  int ai = a.id, bi = b.id;
  int out_id = int(t.size());
  return t.emplace(std::move(out), rg, op,
                   [ai, bi, out_id, back](Tape<T>& t) { back(t, out_id, ai, bi); });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& t = tape_of(a);
  const Tensor<T>&av = t.val(a), &bv = t.val(b);
  check(av.shape == bv.shape, "add: shape mismatch ", shape_str(av.shape), " vs ",
        shape_str(bv.shape));
  Tensor<T> out(av.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[i] + bv.data[i];
  return make_binary(a, b, std::move(out), "add", [](Tape<T>& t, int o, int ai, int bi) {
    const auto& g = t.grad_buf(o);
    if (t.requires_grad(ai)) {
      auto& ga = t.grad_buf(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(bi)) {
      auto& gb = t.grad_buf(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  Tape<T>& t = tape_of(a);
  const Tensor<T>&av = t.val(a), &bv = t.val(b);
  check(av.shape == bv.shape, "sub: shape mismatch ", shape_str(av.shape), " vs ",
        shape_str(bv.shape));
  Tensor<T> out(av.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[i] - bv.data[i];
  return make_binary(a, b, std::move(out), "sub", [](Tape<T>& t, int o, int ai, int bi) {
    const auto& g = t.grad_buf(o);
    if (t.requires_grad(ai)) {
      auto& ga = t.grad_buf(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(bi)) {
      auto& gb = t.grad_buf(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  Tape<T>& t = tape_of(a);
  const Tensor<T>&av = t.val(a), &bv = t.val(b);
  check(av.shape == bv.shape, "mul: shape mismatch ", shape_str(av.shape), " vs ",
        shape_str(bv.shape));
  Tensor<T> out(av.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[i] * bv.data[i];
  return make_binary(a, b, std::move(out), "mul", [](Tape<T>& t, int o, int ai, int bi) {
    const auto& g = t.grad_buf(o);
    const auto& av = t.val(ai).data;
    const auto& bv = t.val(bi).data;
    if (t.requires_grad(ai)) {
      auto& ga = t.grad_buf(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(bi)) {
      auto& gb = t.grad_buf(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

// ---------------------------------------------------------------------------
// broadcasts

// x: [..., n] + v: [n]
template <typename T>
Var<T> add_bias(Var<T> x, Var<T> v) {
  Tape<T>& t = tape_of(x);
  const Tensor<T>&xv = t.val(x), &vv = t.val(v);
  check(vv.rank() == 1 && xv.rank() >= 1 && lastdim(xv) == vv.dim(0),
        "add_bias: shape mismatch ", shape_str(xv.shape), " vs ", shape_str(vv.shape));
  const std::size_t rows = leading_rows(xv), n = vv.dim(0);
  Tensor<T> out(xv.shape);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] = xv.data[i * n + j] + vv.data[j];
  return make_binary(x, v, std::move(out), "add_bias",
                     [rows, n](Tape<T>& t, int o, int xi, int vi) {
                       const auto& g = t.grad_buf(o);
                       if (t.requires_grad(xi)) {
                         auto& gx = t.grad_buf(xi);
                         for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                       }
                       if (t.requires_grad(vi)) {
                         auto& gv = t.grad_buf(vi);
                         for (std::size_t j = 0; j < n; ++j) {
                           T s = T(0);
                           for (std::size_t i = 0; i < rows; ++i) s += g[i * n + j];
                           gv[j] += s;
                         }
                       }
                     });
}

// x: [B, ...] op m: [...] broadcast over axis 0
template <typename T, typename F, typename BX, typename BM>
Var<T> bcast0_impl(Var<T> x, Var<T> m, const char* op, F f, BX bx, BM bm) {
  Tape<T>& t = tape_of(x);
  const Tensor<T>&xv = t.val(x), &mv = t.val(m);
  check(xv.rank() == mv.rank() + 1 &&
            std::equal(xv.shape.begin() + 1, xv.shape.end(), mv.shape.begin()),
        op, ": shape mismatch ", shape_str(xv.shape), " vs ", shape_str(mv.shape));
  const std::size_t batch = xv.dim(0), inner = mv.numel();
  Tensor<T> out(xv.shape);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < inner; ++i)
      out.data[b * inner + i] = f(xv.data[b * inner + i], mv.data[i]);
  return make_binary(x, m, std::move(out), op,
                     [batch, inner, bx, bm](Tape<T>& t, int o, int xi, int mi) {
                       const auto& g = t.grad_buf(o);
                       const auto& xv = t.val(xi).data;
                       const auto& mv = t.val(mi).data;
                       if (t.requires_grad(xi)) {
                         auto& gx = t.grad_buf(xi);
                         for (std::size_t b = 0; b < batch; ++b)
                           for (std::size_t i = 0; i < inner; ++i)
                             gx[b * inner + i] += bx(g[b * inner + i], mv[i]);
                       }
                       if (t.requires_grad(mi)) {
                         auto& gm = t.grad_buf(mi);
                         for (std::size_t i = 0; i < inner; ++i) {
                           T s = T(0);
                           for (std::size_t b = 0; b < batch; ++b)
                             s += bm(g[b * inner + i], xv[b * inner + i]);
                           gm[i] += s;
                         }
                       }
                     });
}

template <typename T>
Var<T> add_bcast0(Var<T> x, Var<T> m) {
  return bcast0_impl(
      x, m, "add_bcast0", [](T a, T b) { return a + b; }, [](T g, T) { return g; },
      [](T g, T) { return g; });
}

template <typename T>
Var<T> mul_bcast0(Var<T> x, Var<T> m) {
  return bcast0_impl(
      x, m, "mul_bcast0", [](T a, T b) { return a * b; }, [](T g, T mv) { return g * mv; },
      [](T g, T xv) { return g * xv; });
}

// ---------------------------------------------------------------------------
// scalar-constant ops

template <typename T>
Var<T> scale(Var<T> a, T c) {
  Tape<T>& t = tape_of(a);
  Tensor<T> out = t.val(a);
  for (auto& v : out.data) v *= c;
  return make_unary(a, std::move(out), "scale", [c](Tape<T>& t, int o, int ai) {
    if (!t.requires_grad(ai)) return;
    const auto& g = t.grad_buf(o);
    auto& ga = t.grad_buf(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
  });
}

template <typename T>
Var<T> add_scalar(Var<T> a, T c) {
  Tape<T>& t = tape_of(a);
  Tensor<T> out = t.val(a);
  for (auto& v : out.data) v += c;
  return make_unary(a, std::move(out), "add_scalar", [](Tape<T>& t, int o, int ai) {
    if (!t.requires_grad(ai)) return;
    const auto& g = t.grad_buf(o);
    auto& ga = t.grad_buf(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

template <typename T>
Var<T> neg(Var<T> a) {
  return scale(a, T(-1));
}

// 1 - x, the complement used by binary cross-entropy terms
template <typename T>
Var<T> one_minus(Var<T> a) {
  return add_scalar(neg(a), T(1));
}

// ---------------------------------------------------------------------------
// elementwise unary ops

template <typename T, typename FV, typename FG>
Var<T> unary_map(Var<T> a, const char* op, FV fval, FG fgrad) {
  Tape<T>& t = tape_of(a);
  const Tensor<T>& av = t.val(a);
  Tensor<T> out(av.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = fval(av.data[i]);
  return make_unary(a, std::move(out), op, [fgrad](Tape<T>& t, int o, int ai) {
    if (!t.requires_grad(ai)) return;
    const auto& g = t.grad_buf(o);
    const auto& x = t.val(ai).data;
    const auto& y = t.val(o).data;
    auto& ga = t.grad_buf(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * fgrad(x[i], y[i]);
  });
}

template <typename T>
Var<T> relu(Var<T> a) {
  return unary_map(
      a, "relu", [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  return unary_map(
      a, "sigmoid", [](T x) { return T(1) / (T(1) + std::exp(-x)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> exp(Var<T> a) {
  return unary_map(
      a, "exp", [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log(Var<T> a) {
  return unary_map(
      a, "log", [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

// subgradient: passes gradient only where the clamp is inactive
template <typename T>
Var<T> clamp(Var<T> a, T lo, T hi) {
  return unary_map(
      a, "clamp", [lo, hi](T x) { return x < lo ? lo : (x > hi ? hi : x); },
      [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
}

template <typename T>
Var<T> gelu(Var<T> a) {
  Tape<T>& t = tape_of(a);
  const Tensor<T>& av = t.val(a);
  Tensor<T> out(av.shape);
  kernels::gelu(av.data.data(), out.data.data(), av.numel());
  return make_unary(a, std::move(out), "gelu", [](Tape<T>& t, int o, int ai) {
    if (!t.requires_grad(ai)) return;
    const auto& g = t.grad_buf(o);
    const auto& x = t.val(ai).data;
    kernels::gelu_backward(x.data(), g.data(), t.grad_buf(ai).data(), g.size());
  });
}

// ---------------------------------------------------------------------------
// matmul: a is [m, k] or [b, m, k] (leading dims flattened to rows), w is [k, n]

template <typename T>
Var<T> matmul(Var<T> a, Var<T> w) {
  Tape<T>& t = tape_of(a);
  const Tensor<T>&av = t.val(a), &wv = t.val(w);
  check(wv.rank() == 2 && av.rank() >= 2, "matmul: want [.., k] x [k, n], got ",
        shape_str(av.shape), " x ", shape_str(wv.shape));
  const std::size_t k = lastdim(av), n = wv.dim(1);
  check(wv.dim(0) == k, "matmul: inner dim mismatch ", shape_str(av.shape), " x ",
        shape_str(wv.shape));
  const std::size_t m = leading_rows(av);
  Shape out_shape(av.shape.begin(), av.shape.end() - 1);
  out_shape.push_back(n);
  Tensor<T> out(std::move(out_shape));
  kernels::matmul(av.data.data(), wv.data.data(), out.data.data(), m, k, n);
  return make_binary(a, w, std::move(out), "matmul",
                     [m, k, n](Tape<T>& t, int o, int ai, int wi) {
                       const auto& g = t.grad_buf(o);
                       const auto& av = t.val(ai).data;
                       const auto& wv = t.val(wi).data;
                       if (t.requires_grad(ai)) {
                         // dA = dC * W^T
                         std::vector<T> wt(k * n);
                         kernels::transpose(wv.data(), wt.data(), k, n);
                         std::vector<T> da(m * k);
                         kernels::matmul(g.data(), wt.data(), da.data(), m, n, k);
                         auto& ga = t.grad_buf(ai);
                         for (std::size_t i = 0; i < da.size(); ++i) ga[i] += da[i];
                       }
                       if (t.requires_grad(wi)) {
                         // dW = A^T * dC
                         std::vector<T> at(m * k);
                         kernels::transpose(av.data(), at.data(), m, k);
                         std::vector<T> dw(k * n);
                         kernels::matmul(at.data(), g.data(), dw.data(), k, m, n);
                         auto& gw = t.grad_buf(wi);
                         for (std::size_t i = 0; i < dw.size(); ++i) gw[i] += dw[i];
                       }
                     });
}

// batched matmul with optional transposes; a: [b, *, *], w: [b, *, *]
template <typename T>
Var<T> bmm(Var<T> a, Var<T> w, bool ta = false, bool tb = false) {
  Tape<T>& t = tape_of(a);
  const Tensor<T>&av = t.val(a), &wv = t.val(w);
  check(av.rank() == 3 && wv.rank() == 3 && av.dim(0) == wv.dim(0),
        "bmm: want matching [b, ., .] x [b, ., .], got ", shape_str(av.shape), " x ",
        shape_str(wv.shape));
  const std::size_t batch = av.dim(0);
  const std::size_t m = ta ? av.dim(2) : av.dim(1);
  const std::size_t k = ta ? av.dim(1) : av.dim(2);
  const std::size_t k2 = tb ? wv.dim(2) : wv.dim(1);
  const std::size_t n = tb ? wv.dim(1) : wv.dim(2);
  check(k == k2, "bmm: inner dim mismatch ", shape_str(av.shape), " x ", shape_str(wv.shape));
  Tensor<T> out({batch, m, n});
  kernels::bmm(av.data.data(), wv.data.data(), out.data.data(), batch, m, k, n, ta, tb);
  return make_binary(
      a, w, std::move(out), "bmm",
      [batch, m, k, n, ta, tb](Tape<T>& t, int o, int ai, int wi) {
        const auto& g = t.grad_buf(o);  // [batch, m, n]
        const auto& av = t.val(ai).data;
        const auto& wv = t.val(wi).data;
        // per batch item: C = opA(A) opB(B);
        // d opA(A) = G opB(B)^T, d opB(B) = opA(A)^T G, then un-transpose.
        if (t.requires_grad(ai)) {
          auto& ga = t.grad_buf(ai);
          for (std::size_t b = 0; b < batch; ++b) {
            const T* gb = g.data() + b * m * n;
            const T* wb = wv.data() + b * k * n;
            T* gab = ga.data() + b * m * k;
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t p = 0; p < k; ++p) {
                T s = T(0);
                for (std::size_t j = 0; j < n; ++j) {
                  const T bv = tb ? wb[j * k + p] : wb[p * n + j];
                  s += gb[i * n + j] * bv;
                }
                // dA[i,p] in opA space; map back through ta
                gab[ta ? p * m + i : i * k + p] += s;
              }
          }
        }
        if (t.requires_grad(wi)) {
          auto& gw = t.grad_buf(wi);
          for (std::size_t b = 0; b < batch; ++b) {
            const T* gb = g.data() + b * m * n;
            const T* ab = av.data() + b * m * k;
            T* gwb = gw.data() + b * k * n;
            for (std::size_t p = 0; p < k; ++p)
              for (std::size_t j = 0; j < n; ++j) {
                T s = T(0);
                for (std::size_t i = 0; i < m; ++i) {
                  const T avv = ta ? ab[p * m + i] : ab[i * k + p];
                  s += avv * gb[i * n + j];
                }
                gwb[tb ? j * k + p : p * n + j] += s;
              }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// softmax over the last axis

template <typename T>
Var<T> softmax_lastdim(Var<T> a) {
  Tape<T>& t = tape_of(a);
  const Tensor<T>& av = t.val(a);
  check(av.rank() >= 1, "softmax: rank-0 input");
  const std::size_t rows = leading_rows(av), n = lastdim(av);
  Tensor<T> out(av.shape);
  kernels::softmax_rows(av.data.data(), out.data.data(), rows, n);
  return make_unary(a, std::move(out), "softmax", [rows, n](Tape<T>& t, int o, int ai) {
    if (!t.requires_grad(ai)) return;
    const auto& y = t.val(o).data;
    const auto& g = t.grad_buf(o);
    kernels::softmax_rows_backward(y.data(), g.data(), t.grad_buf(ai).data(), rows, n);
  });
}

// ---------------------------------------------------------------------------
// layer norm over the last axis, with affine params

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5)) {
  Tape<T>& t = tape_of(x);
  const Tensor<T>&xv = t.val(x), &gv = t.val(gamma), &bv = t.val(beta);
  const std::size_t n = lastdim(xv);
  check(gv.rank() == 1 && bv.rank() == 1 && gv.dim(0) == n && bv.dim(0) == n,
        "layer_norm: affine params must be [", n, "], got ", shape_str(gv.shape), " and ",
        shape_str(bv.shape));
  const std::size_t rows = leading_rows(xv);
  Tensor<T> out(xv.shape);
  auto mean = std::make_shared<std::vector<T>>(rows);
  auto rstd = std::make_shared<std::vector<T>>(rows);
  kernels::layernorm_rows(xv.data.data(), gv.data.data(), bv.data.data(), out.data.data(),
                          mean->data(), rstd->data(), rows, n, eps);
  bool rg = t.requires_grad(x.id) || t.requires_grad(gamma.id) || t.requires_grad(beta.id);
  int xi = x.id, gi = gamma.id, bi = beta.id;
  int out_id = int(t.size());
  return t.emplace(std::move(out), rg, "layer_norm", [=](Tape<T>& t) {
    const auto& g = t.grad_buf(out_id);
    const auto& xd = t.val(xi).data;
    const auto& gam = t.val(gi).data;
    if (t.requires_grad(xi)) {
      kernels::layernorm_rows_backward(xd.data(), gam.data(), g.data(), mean->data(),
                                       rstd->data(), t.grad_buf(xi).data(), rows, n);
    }
    // dgamma = sum_rows(dy * xhat), dbeta = sum_rows(dy); serial reductions
    if (t.requires_grad(gi)) {
      auto& gg = t.grad_buf(gi);
      for (std::size_t i = 0; i < rows; ++i) {
        const T mu = (*mean)[i], rs = (*rstd)[i];
        for (std::size_t j = 0; j < n; ++j)
          gg[j] += g[i * n + j] * (xd[i * n + j] - mu) * rs;
      }
    }
    if (t.requires_grad(bi)) {
      auto& gb = t.grad_buf(bi);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
  });
}

// ---------------------------------------------------------------------------
// reductions

template <typename T>
Var<T> sum_all(Var<T> a) {
  Tape<T>& t = tape_of(a);
  const Tensor<T>& av = t.val(a);
  T s = T(0);
  for (T v : av.data) s += v;
  return make_unary(a, Tensor<T>::scalar(s), "sum_all", [](Tape<T>& t, int o, int ai) {
    if (!t.requires_grad(ai)) return;
    const T g = t.grad_buf(o)[0];
    auto& ga = t.grad_buf(ai);
    for (auto& v : ga) v += g;
  });
}

template <typename T>
Var<T> mean_all(Var<T> a) {
  Tape<T>& t = tape_of(a);
  const std::size_t n = t.val(a).numel();
  check(n > 0, "mean_all: empty tensor");
  return scale(sum_all(a), T(1) / T(n));
}

// [.., n] -> [..]: sum over the last axis
template <typename T>
Var<T> sum_lastdim(Var<T> a) {
  Tape<T>& t = tape_of(a);
  const Tensor<T>& av = t.val(a);
  check(av.rank() >= 2, "sum_lastdim: want rank >= 2, got ", shape_str(av.shape));
  const std::size_t rows = leading_rows(av), n = lastdim(av);
  Tensor<T> out(Shape(av.shape.begin(), av.shape.end() - 1));
  for (std::size_t i = 0; i < rows; ++i) {
    T s = T(0);
    for (std::size_t j = 0; j < n; ++j) s += av.data[i * n + j];
    out.data[i] = s;
  }
  return make_unary(a, std::move(out), "sum_lastdim", [rows, n](Tape<T>& t, int o, int ai) {
    if (!t.requires_grad(ai)) return;
    const auto& g = t.grad_buf(o);
    auto& ga = t.grad_buf(ai);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i];
  });
}

// [m, n] -> [n]: column means (the batch average of row distributions)
template <typename T>
Var<T> mean_axis0(Var<T> a) {
  Tape<T>& t = tape_of(a);
  const Tensor<T>& av = t.val(a);
  check(av.rank() == 2, "mean_axis0: want rank 2, got ", shape_str(av.shape));
  const std::size_t m = av.dim(0), n = av.dim(1);
  check(m > 0, "mean_axis0: empty axis");
  Tensor<T> out({n});
  for (std::size_t j = 0; j < n; ++j) {
    T s = T(0);
    for (std::size_t i = 0; i < m; ++i) s += av.data[i * n + j];
    out.data[j] = s / T(m);
  }
  return make_unary(a, std::move(out), "mean_axis0", [m, n](Tape<T>& t, int o, int ai) {
    if (!t.requires_grad(ai)) return;
    const auto& g = t.grad_buf(o);
    auto& ga = t.grad_buf(ai);
    const T inv = T(1) / T(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j] * inv;
  });
}

// [B, ...] -> [...]: sum over axis 0
template <typename T>
Var<T> sum_axis0(Var<T> a) {
  Tape<T>& t = tape_of(a);
  const Tensor<T>& av = t.val(a);
  check(av.rank() >= 2, "sum_axis0: want rank >= 2, got ", shape_str(av.shape));
  const std::size_t batch = av.dim(0), inner = av.numel() / batch;
  Tensor<T> out(Shape(av.shape.begin() + 1, av.shape.end()));
  for (std::size_t i = 0; i < inner; ++i) {
    T s = T(0);
    for (std::size_t b = 0; b < batch; ++b) s += av.data[b * inner + i];
    out.data[i] = s;
  }
  return make_unary(a, std::move(out), "sum_axis0", [batch, inner](Tape<T>& t, int o, int ai) {
    if (!t.requires_grad(ai)) return;
    const auto& g = t.grad_buf(o);
    auto& ga = t.grad_buf(ai);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < inner; ++i) ga[b * inner + i] += g[i];
  });
}

// ---------------------------------------------------------------------------
// shape ops

template <typename T>
Var<T> reshape(Var<T> a, Shape s) {
  Tape<T>& t = tape_of(a);
  const Tensor<T>& av = t.val(a);
  check(shape_numel(s) == av.numel(), "reshape: numel mismatch ", shape_str(av.shape), " -> ",
        shape_str(s));
  Tensor<T> out(std::move(s), av.data);
  return make_unary(a, std::move(out), "reshape", [](Tape<T>& t, int o, int ai) {
    if (!t.requires_grad(ai)) return;
    const auto& g = t.grad_buf(o);
    auto& ga = t.grad_buf(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

template <typename T>
Var<T> transpose2d(Var<T> a) {
  Tape<T>& t = tape_of(a);
  const Tensor<T>& av = t.val(a);
  check(av.rank() == 2, "transpose: want rank 2, got ", shape_str(av.shape));
  const std::size_t m = av.dim(0), n = av.dim(1);
  Tensor<T> out({n, m});
  kernels::transpose(av.data.data(), out.data.data(), m, n);
  return make_unary(a, std::move(out), "transpose", [m, n](Tape<T>& t, int o, int ai) {
    if (!t.requires_grad(ai)) return;
    const auto& g = t.grad_buf(o);
    auto& ga = t.grad_buf(ai);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

namespace detail {
inline std::size_t axis_block(const Shape& s, std::size_t axis) {
  std::size_t b = 1;
  for (std::size_t i = axis; i < s.size(); ++i) b *= s[i];
  return b;
}
}  // namespace detail

// concatenate along `axis`; all other dims must match
template <typename T>
Var<T> concat(Var<T> a, Var<T> b, std::size_t axis) {
  Tape<T>& t = tape_of(a);
  const Tensor<T>&av = t.val(a), &bv = t.val(b);
  check(av.rank() == bv.rank() && axis < av.rank(), "concat: rank/axis mismatch ",
        shape_str(av.shape), " vs ", shape_str(bv.shape), " axis ", axis);
  for (std::size_t i = 0; i < av.rank(); ++i)
    check(i == axis || av.dim(i) == bv.dim(i), "concat: shape mismatch ", shape_str(av.shape),
          " vs ", shape_str(bv.shape), " axis ", axis);
  Shape os = av.shape;
  os[axis] += bv.dim(axis);
  // copy in blocks: outer x (a_block | b_block)
  const std::size_t a_block = detail::axis_block(av.shape, axis);
  const std::size_t b_block = detail::axis_block(bv.shape, axis);
  const std::size_t outer = av.numel() / a_block;
  Tensor<T> out(os);
  for (std::size_t i = 0; i < outer; ++i) {
    std::copy_n(av.data.begin() + i * a_block, a_block,
                out.data.begin() + i * (a_block + b_block));
    std::copy_n(bv.data.begin() + i * b_block, b_block,
                out.data.begin() + i * (a_block + b_block) + a_block);
  }
  return make_binary(a, b, std::move(out), "concat",
                     [outer, a_block, b_block](Tape<T>& t, int o, int ai, int bi) {
                       const auto& g = t.grad_buf(o);
                       const std::size_t stride = a_block + b_block;
                       if (t.requires_grad(ai)) {
                         auto& ga = t.grad_buf(ai);
                         for (std::size_t i = 0; i < outer; ++i)
                           for (std::size_t j = 0; j < a_block; ++j)
                             ga[i * a_block + j] += g[i * stride + j];
                       }
                       if (t.requires_grad(bi)) {
                         auto& gb = t.grad_buf(bi);
                         for (std::size_t i = 0; i < outer; ++i)
                           for (std::size_t j = 0; j < b_block; ++j)
                             gb[i * b_block + j] += g[i * stride + a_block + j];
                       }
                     });
}

// slice [begin, end) along `axis`
template <typename T>
Var<T> slice(Var<T> a, std::size_t axis, std::size_t begin, std::size_t end) {
  Tape<T>& t = tape_of(a);
  const Tensor<T>& av = t.val(a);
  check(axis < av.rank() && begin < end && end <= av.dim(axis), "slice: bad range [", begin,
        ", ", end, ") along axis ", axis, " of ", shape_str(av.shape));
  Shape os = av.shape;
  os[axis] = end - begin;
  const std::size_t in_block = detail::axis_block(av.shape, axis);
  const std::size_t out_block = detail::axis_block(os, axis);
  const std::size_t tail = axis + 1 < av.rank() ? detail::axis_block(av.shape, axis + 1) : 1;
  const std::size_t outer = av.numel() / in_block;
  Tensor<T> out(os);
  for (std::size_t i = 0; i < outer; ++i)
    std::copy_n(av.data.begin() + i * in_block + begin * tail, out_block,
                out.data.begin() + i * out_block);
  return make_unary(a, std::move(out), "slice",
                    [outer, in_block, out_block, begin, tail](Tape<T>& t, int o, int ai) {
                      if (!t.requires_grad(ai)) return;
                      const auto& g = t.grad_buf(o);
                      auto& ga = t.grad_buf(ai);
                      for (std::size_t i = 0; i < outer; ++i)
                        for (std::size_t j = 0; j < out_block; ++j)
                          ga[i * in_block + begin * tail + j] += g[i * out_block + j];
                    });
}

// tile x into [reps, shape(x)]
template <typename T>
Var<T> tile0(Var<T> a, std::size_t reps) {
  Tape<T>& t = tape_of(a);
  const Tensor<T>& av = t.val(a);
  check(reps >= 1, "tile0: reps must be >= 1");
  Shape os;
  os.push_back(reps);
  for (auto d : av.shape) os.push_back(d);
  const std::size_t inner = av.numel();
  Tensor<T> out(os);
  for (std::size_t r = 0; r < reps; ++r)
    std::copy_n(av.data.begin(), inner, out.data.begin() + r * inner);
  return make_unary(a, std::move(out), "tile0", [reps, inner](Tape<T>& t, int o, int ai) {
    if (!t.requires_grad(ai)) return;
    const auto& g = t.grad_buf(o);
    auto& ga = t.grad_buf(ai);
    for (std::size_t i = 0; i < inner; ++i) {
      T s = T(0);
      for (std::size_t r = 0; r < reps; ++r) s += g[r * inner + i];
      ga[i] += s;
    }
  });
}

// x: [m, n], idx: [m] -> [m], picking x[i, idx[i]]
template <typename T>
Var<T> pick_per_row(Var<T> a, const std::vector<std::size_t>& idx) {
  Tape<T>& t = tape_of(a);
  const Tensor<T>& av = t.val(a);
  check(av.rank() == 2, "pick_per_row: want rank 2, got ", shape_str(av.shape));
  const std::size_t m = av.dim(0), n = av.dim(1);
  check(idx.size() == m, "pick_per_row: ", idx.size(), " indices for ", m, " rows");
  for (std::size_t i = 0; i < m; ++i)
    check(idx[i] < n, "pick_per_row: index ", idx[i], " out of range for ", n, " columns");
  Tensor<T> out({m});
  for (std::size_t i = 0; i < m; ++i) out.data[i] = av.data[i * n + idx[i]];
  return make_unary(a, std::move(out), "pick_per_row", [idx, n](Tape<T>& t, int o, int ai) {
    if (!t.requires_grad(ai)) return;
    const auto& g = t.grad_buf(o);
    auto& ga = t.grad_buf(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i * n + idx[i]] += g[i];
  });
}

// ---------------------------------------------------------------------------
// gradient-flow control

// forward identity (bitwise); contributes zero gradient to all ancestors
template <typename T>
Var<T> stop_gradient(Var<T> a) {
  Tape<T>& t = tape_of(a);
  if (t.flow_control_bypass) return a;
  Tensor<T> out = t.val(a);
  return t.emplace(std::move(out), false, "stop_gradient", {});
}

// forward identity (bitwise); backward multiplies by -lambda
template <typename T>
Var<T> gradient_reversal(Var<T> a, T lambda) {
  check(lambda >= T(0), "gradient_reversal: lambda must be >= 0");
  Tape<T>& t = tape_of(a);
  if (t.flow_control_bypass) return a;
  Tensor<T> out = t.val(a);
  return make_unary(a, std::move(out), "grad_reverse", [lambda](Tape<T>& t, int o, int ai) {
    if (!t.requires_grad(ai)) return;
    const auto& g = t.grad_buf(o);
    auto& ga = t.grad_buf(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= lambda * g[i];
  });
}

}  // namespace ops
}  // namespace fftat
