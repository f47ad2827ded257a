#pragma once

#include <cmath>
#include <cstddef>

#include "fftat/params.hpp"
#include "fftat/tape.hpp"
#include "fftat/tensor.hpp"

namespace fftat {

// Three attention variants over tokens of shape B x N x d (N = 1 + P):
//
//   vanilla       softmax(Q K^T / sqrt(d_k)) V
//   graph_guided  softmax((Q K^T . G) / sqrt(d_k)) V, G a constant (1+P)^2
//                 matrix in [0,1]; the mask scales pre-softmax logits, so a
//                 zero entry gives logit 0, not -inf
//   score_masked  class-token row only: softmax(q_cls K^T / sqrt(d_k)) . [1;c]
//                 then V; the per-patch scores scale post-softmax weights, so
//                 that row generally no longer sums to 1. Patch rows fall
//                 back to vanilla, keeping the layer output full-width.
//
// Both reduce to vanilla when mask/scores are all ones.

enum class AttnKind { vanilla, graph_guided, score_masked };

template <typename T>
Var<T> multi_head_attention(Tape<T>& tape, Var<T> tokens, const AttnParamsT<Var<T>>& p,
                            std::size_t heads, AttnKind kind, Var<T> padded_graph = {},
                            Var<T> scores = {}) {
  const Tensor<T>& tv = tape.val(tokens);
  check(tv.rank() == 3, "attention: want B x N x d tokens, got ", shape_str(tv.shape));
  const std::size_t b = tv.dim(0), n = tv.dim(1), d = tv.dim(2);
  check(heads > 0 && d % heads == 0, "attention: dim ", d, " not divisible by ", heads,
        " heads");
  const std::size_t dk = d / heads;

  if (kind == AttnKind::graph_guided) {
    check(padded_graph.valid(), "graph_guided attention needs a graph");
    const Tensor<T>& g = tape.val(padded_graph);
    check(g.rank() == 2 && g.dim(0) == n && g.dim(1) == n, "attention graph is ",
          shape_str(g.shape), ", want ", n, "x", n);
  }
  if (kind == AttnKind::score_masked) {
    check(scores.valid(), "score_masked attention needs scores");
    const Tensor<T>& s = tape.val(scores);
    check(s.rank() == 2 && s.dim(0) == b && s.dim(1) == n - 1, "attention scores are ",
          shape_str(s.shape), ", want ", b, "x", n - 1);
  }

  Var<T> q = ops::add_bias(ops::matmul(tokens, p.wq), p.bq);
  Var<T> k = ops::add_bias(ops::matmul(tokens, p.wk), p.bk);
  Var<T> v = ops::add_bias(ops::matmul(tokens, p.wv), p.bv);

  const T inv_sqrt_dk = T(1) / std::sqrt(T(dk));

  Var<T> merged;  // heads concatenated back to B x N x d
  for (std::size_t h = 0; h < heads; ++h) {
    Var<T> qh = ops::slice(q, 2, h * dk, (h + 1) * dk);
    Var<T> kh = ops::slice(k, 2, h * dk, (h + 1) * dk);
    Var<T> vh = ops::slice(v, 2, h * dk, (h + 1) * dk);

    Var<T> logits = ops::bmm(qh, kh, false, true);  // B x N x N
    if (kind == AttnKind::graph_guided) logits = ops::mul_bcast0(logits, padded_graph);
    logits = ops::scale(logits, inv_sqrt_dk);
    Var<T> attn = ops::softmax_lastdim(logits);

    if (kind == AttnKind::score_masked) {
      // multiply the class-token row's post-softmax weights by [1; scores]
      Var<T> cls_row = ops::slice(attn, 1, 0, 1);  // B x 1 x N
      Var<T> one = tape.constant(Tensor<T>::full({b, 1}, T(1)));
      Var<T> mask = ops::reshape(ops::concat(one, scores, 1), {b, 1, n});
      Var<T> masked = ops::mul(cls_row, mask);
      attn = ops::concat(masked, ops::slice(attn, 1, 1, n), 1);
    }

    Var<T> head_out = ops::bmm(attn, vh);  // B x N x dk
    merged = h == 0 ? head_out : ops::concat(merged, head_out, 2);
  }

  return ops::add_bias(ops::matmul(merged, p.wo), p.bo);
}

// pre-norm transformer block: attn(LN(z)) + z, then mlp(LN(.)) + .
template <typename T>
Var<T> transformer_block(Tape<T>& tape, Var<T> tokens, const BlockParamsT<Var<T>>& p,
                         std::size_t heads, AttnKind kind, Var<T> padded_graph = {},
                         Var<T> scores = {}) {
  Var<T> x1 = ops::layer_norm(tokens, p.ln1_g, p.ln1_b);
  Var<T> attn = multi_head_attention(tape, x1, p.attn, heads, kind, padded_graph, scores);
  Var<T> z = ops::add(attn, tokens);
  Var<T> x2 = ops::layer_norm(z, p.ln2_g, p.ln2_b);
  Var<T> h = ops::gelu(ops::add_bias(ops::matmul(x2, p.mlp_w1), p.mlp_b1));
  Var<T> m = ops::add_bias(ops::matmul(h, p.mlp_w2), p.mlp_b2);
  return ops::add(m, z);
}

}  // namespace fftat
