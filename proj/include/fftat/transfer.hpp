#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "fftat/params.hpp"
#include "fftat/tape.hpp"
#include "fftat/tensor.hpp"

namespace fftat {

// Per-patch transferability machinery: a shared discriminator scores each
// patch token's domain membership, binary entropy turns that into a
// transferability score in [0,1], and batch-averaged score outer products
// form the graph that guides the next step's attention.

// Plain-value graph handed across steps. It is built from detached scores,
// so by construction no gradient flows anywhere through it.
template <typename T>
struct TransferGraph {
  std::size_t p = 0;
  std::uint64_t iteration_built = 0;  // step whose scores produced it; 0 = unweighted init
  std::vector<T> m;                   // p x p row-major, symmetric, entries in [0,1]

  static TransferGraph ones(std::size_t p) {
    return TransferGraph{p, 0, std::vector<T>(p * p, T(1))};
  }
};

// tokens (B x P x d), already through gradient reversal -> source
// probabilities (B x P) via the shared two-layer head
template <typename T>
Var<T> patch_discriminate(Tape<T>& tape, Var<T> patch_tokens, const DiscParamsT<Var<T>>& p) {
  // copy dims up front: adding ops below may reallocate the tape's node store
  const Shape ts = tape.val(patch_tokens).shape;
  check(ts.size() == 3, "patch_discriminate: want B x P x d, got ", shape_str(ts));
  Var<T> h = ops::gelu(ops::add_bias(ops::matmul(patch_tokens, p.w1), p.b1));
  Var<T> logit = ops::add_bias(ops::matmul(h, p.w2), p.b2);  // B x P x 1
  return ops::sigmoid(ops::reshape(logit, {ts[0], ts[1]}));
}

// binary entropy in base 2, so a maximally confused discriminator (p = 0.5)
// scores exactly 1; probabilities are clamped to [eps, 1-eps] first
template <typename T>
Var<T> transferability_score(Tape<T>& tape, Var<T> probs, T eps) {
  (void)tape;
  check(eps > T(0) && eps < T(0.5), "transferability_score: eps out of range");
  Var<T> p = ops::clamp(probs, eps, T(1) - eps);
  Var<T> q = ops::one_minus(p);
  Var<T> ent = ops::neg(ops::add(ops::mul(p, ops::log(p)), ops::mul(q, ops::log(q))));
  return ops::scale(ent, T(1) / std::log(T(2)));
}

// scalar convenience used by tests and oracles
template <typename T>
T binary_entropy_bits(T p) {
  return -(p * std::log(p) + (T(1) - p) * std::log(T(1) - p)) / std::log(T(2));
}

// Batch average of per-image score outer products. The formal definition
// also averages over attention heads, but the summand does not depend on the
// head index, so that average cancels; `heads` stays in the signature to
// document the contract.
template <typename T>
TransferGraph<T> build_graph(const Tensor<T>& scores, std::size_t heads, std::uint64_t step) {
  check(scores.rank() == 2 && scores.dim(0) > 0, "build_graph: want nonempty B x P scores, got ",
        shape_str(scores.shape));
  check(heads > 0, "build_graph: head count must be positive");
  const std::size_t b = scores.dim(0), p = scores.dim(1);
  TransferGraph<T> g{p, step, std::vector<T>(p * p, T(0))};
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t r = 0; r < p; ++r) {
      const T cr = scores.at(i, r);
      for (std::size_t c = 0; c < p; ++c) g.m[r * p + c] += cr * scores.at(i, c);
    }
  const T inv = T(1) / T(b);
  for (auto& v : g.m) v *= inv;
  return g;
}

// (1+P)^2 matrix: interior is the graph, index-0 row and column are ones so
// the class token's logits pass unscaled
template <typename T>
Tensor<T> pad_graph(const TransferGraph<T>& g) {
  check(g.p > 0 && g.m.size() == g.p * g.p, "pad_graph: malformed graph");
  const std::size_t n = g.p + 1;
  Tensor<T> out = Tensor<T>::full({n, n}, T(1));
  for (std::size_t r = 0; r < g.p; ++r)
    for (std::size_t c = 0; c < g.p; ++c) out.at(r + 1, c + 1) = g.m[r * g.p + c];
  return out;
}

}  // namespace fftat
