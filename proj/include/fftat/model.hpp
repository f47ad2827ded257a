#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fftat/attention.hpp"
#include "fftat/config.hpp"
#include "fftat/data.hpp"
#include "fftat/fusion.hpp"
#include "fftat/params.hpp"
#include "fftat/patch_embed.hpp"
#include "fftat/tape.hpp"
#include "fftat/transfer.hpp"

namespace fftat {

// Network assembly. One step runs:
//
//   embed -> blocks 0..L-2 (graph-guided, using the previous step's graph)
//         -> per-domain feature fusion on patch tokens (training only)
//         -> patch discriminator (through gradient reversal) -> scores
//         -> final block with the score-masked class row
//         -> classifier head on the class token
//         -> domain discriminator on the class token (through reversal)
//
// and hands back a fresh graph built from this step's detached scores for
// the next step to consume.

namespace detail {

template <typename T>
Tensor<T> concat_axis0(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.rank() == b.rank() && a.rank() >= 1, "concat_axis0: rank mismatch");
  for (std::size_t i = 1; i < a.rank(); ++i)
    check(a.dim(i) == b.dim(i), "concat_axis0: shape mismatch ", shape_str(a.shape), " vs ",
          shape_str(b.shape));
  Shape s = a.shape;
  s[0] += b.dim(0);
  Tensor<T> out(s);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + std::ptrdiff_t(a.numel()));
  return out;
}

}  // namespace detail

template <typename T>
struct EncodeOut {
  Var<T> final_tokens;    // B x (1+P) x d
  Var<T> patch_probs;     // B x P, downstream of gradient reversal
  Var<T> scores;          // B x P, on the gradient path of patch_probs
  Var<T> scores_detached; // stop-gradient view consumed by mask and graph
};

// n_source > 0 marks a training pass on a [source; target] concatenated
// batch: fusion (if enabled) mixes each domain separately, and discriminator
// inputs pass through gradient reversal
template <typename T>
EncodeOut<T> encode(Tape<T>& tape, const ModelParamsT<Var<T>>& params, Var<T> patch_mat,
                    const TransferGraph<T>& graph, const RunConfig& cfg,
                    std::size_t n_source) {
  const bool training = n_source > 0;
  const std::size_t n = tape.val(patch_mat).dim(0);
  const std::size_t tokens_n = 1 + cfg.patch_count();
  check(graph.p == cfg.patch_count(), "encode: graph is ", graph.p, "x", graph.p, ", want ",
        cfg.patch_count());

  Var<T> tokens = embed_tokens(tape, patch_mat, params);

  const AttnKind early = cfg.tg_guidance ? AttnKind::graph_guided : AttnKind::vanilla;
  Var<T> padded;
  if (cfg.tg_guidance) padded = tape.constant(pad_graph(graph));
  for (std::size_t l = 0; l + 1 < cfg.layers; ++l)
    tokens = transformer_block(tape, tokens, params.blocks[l], cfg.heads, early, padded);

  Var<T> cls_tok = ops::slice(tokens, 1, std::size_t(0), std::size_t(1));
  Var<T> patches = ops::slice(tokens, 1, std::size_t(1), tokens_n);

  if (training && cfg.feature_fusion) {
    check(n_source < n, "encode: training batch has no target rows");
    Var<T> src = ops::slice(patches, 0, std::size_t(0), n_source);
    Var<T> tgt = ops::slice(patches, 0, n_source, n);
    patches = ops::concat(fuse(tape, src), fuse(tape, tgt), 0);
  }

  Var<T> disc_in = training ? ops::gradient_reversal(patches, T(cfg.grl_lambda)) : patches;
  Var<T> patch_probs = patch_discriminate(tape, disc_in, params.pat);
  Var<T> scores = transferability_score(tape, patch_probs, T(cfg.prob_eps));
  Var<T> scores_det = ops::stop_gradient(scores);

  Var<T> fused_tokens = ops::concat(cls_tok, patches, 1);
  Var<T> final_tokens = transformer_block(tape, fused_tokens, params.blocks[cfg.layers - 1],
                                          cfg.heads, AttnKind::score_masked, Var<T>{},
                                          scores_det);
  return {final_tokens, patch_probs, scores, scores_det};
}

template <typename T>
struct TrainForward {
  Var<T> src_logits;       // B_s x K
  Var<T> tgt_logits;       // B_t x K
  Var<T> dom_probs;        // (B_s + B_t), source rows first, through reversal
  Var<T> patch_probs;      // (B_s + B_t) x P, through reversal
  Var<T> scores_detached;  // (B_s + B_t) x P
  TransferGraph<T> fresh_graph;
};

template <typename T>
Var<T> classifier_logits(Tape<T>& tape, const ModelParamsT<Var<T>>& params, Var<T> enc_tokens) {
  const std::size_t n = tape.val(enc_tokens).dim(0);
  const std::size_t d = tape.val(enc_tokens).dim(2);
  Var<T> cls = ops::reshape(ops::slice(enc_tokens, 1, std::size_t(0), std::size_t(1)), {n, d});
  return ops::add_bias(ops::matmul(cls, params.head_w), params.head_b);
}

template <typename T>
TrainForward<T> forward_train(Tape<T>& tape, const ModelParamsT<Var<T>>& params,
                              const DomainBatch& batch, const TransferGraph<T>& graph,
                              const RunConfig& cfg, std::uint64_t step) {
  check(!batch.source_images.empty() && !batch.target_images.empty(),
        "forward_train: empty domain batch");
  const std::size_t n_s = batch.source_images.size();
  const std::size_t n = n_s + batch.target_images.size();
  const std::size_t d = cfg.dim;

  Tensor<T> patch_mat = detail::concat_axis0(
      extract_patches<T>(batch.source_images, cfg.image_side, cfg.patch_side),
      extract_patches<T>(batch.target_images, cfg.image_side, cfg.patch_side));
  Var<T> patch_var = tape.constant(std::move(patch_mat));

  EncodeOut<T> enc = encode(tape, params, patch_var, graph, cfg, n_s);

  Var<T> logits = classifier_logits(tape, params, enc.final_tokens);
  Var<T> cls = ops::reshape(ops::slice(enc.final_tokens, 1, std::size_t(0), std::size_t(1)),
                            {n, d});
  Var<T> dom_in = ops::gradient_reversal(cls, T(cfg.grl_lambda));
  Var<T> dh = ops::gelu(ops::add_bias(ops::matmul(dom_in, params.dom.w1), params.dom.b1));
  Var<T> dom_logit = ops::add_bias(ops::matmul(dh, params.dom.w2), params.dom.b2);
  Var<T> dom_probs = ops::sigmoid(ops::reshape(dom_logit, {n}));

  TrainForward<T> out;
  out.src_logits = ops::slice(logits, 0, std::size_t(0), n_s);
  out.tgt_logits = ops::slice(logits, 0, n_s, n);
  out.dom_probs = dom_probs;
  out.patch_probs = enc.patch_probs;
  out.scores_detached = enc.scores_detached;
  out.fresh_graph = build_graph(tape.val(enc.scores_detached), cfg.heads, step);
  return out;
}

// inference: fusion off, graph from the trained state, scores computed per
// image; every row is independent, so results are batch-size invariant
template <typename T>
Tensor<T> predict_logits(const ModelParamsT<Tensor<T>>& params,
                         const std::vector<Image>& images, const TransferGraph<T>& graph,
                         const RunConfig& cfg) {
  Tape<T> tape;
  ModelParamsT<Var<T>> pv = params_to_tape(tape, params, false);
  Var<T> patch_var =
      tape.constant(extract_patches<T>(images, cfg.image_side, cfg.patch_side));
  EncodeOut<T> enc = encode(tape, pv, patch_var, graph, cfg, 0);
  Var<T> logits = classifier_logits(tape, pv, enc.final_tokens);
  return tape.val(logits);
}

template <typename T>
std::vector<std::size_t> predict(const ModelParamsT<Tensor<T>>& params,
                                 const std::vector<Image>& images,
                                 const TransferGraph<T>& graph, const RunConfig& cfg) {
  const Tensor<T> logits = predict_logits(params, images, graph, cfg);
  std::vector<std::size_t> labels(images.size());
  const std::size_t k = logits.dim(1);
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (logits.at(i, c) > logits.at(i, best)) best = c;
    labels[i] = best;
  }
  return labels;
}

}  // namespace fftat
