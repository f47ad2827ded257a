#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fftat/attention.hpp"
#include "fftat/data.hpp"
#include "fftat/fusion.hpp"
#include "fftat/grad_check.hpp"
#include "fftat/losses.hpp"
#include "fftat/model.hpp"
#include "fftat/rng.hpp"
#include "fftat/transfer.hpp"

namespace fftat {

// Finite-difference verification rows, always f64: one row per op family
// plus the end-to-end objective on a tiny model. stop_gradient and
// gradient_reversal are absent by design: their backward deliberately
// disagrees with the forward value, which is exactly what central
// differences measure; their contracts are property-tested instead.

struct GradCheckRow {
  std::string name;
  double max_rel_err = 0;
  double tolerance = 0;
  bool pass = false;
};

namespace gradcheck_detail {

using D = double;

inline Tensor<D> rand_tensor(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
  Tensor<D> t(std::move(s));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// values away from the clamp kinks, where central differences are valid
inline Tensor<D> rand_tensor_clampsafe(Rng& rng, Shape s, double lo, double hi) {
  Tensor<D> t(std::move(s));
  for (auto& v : t.data) {
    double x;
    do {
      x = rng.uniform(lo - 0.5, hi + 0.5);
    } while (std::fabs(x - lo) < 5e-3 || std::fabs(x - hi) < 5e-3);
    v = x;
  }
  return t;
}

inline ModelParamsT<Var<D>> bind_leaves(std::span<const Var<D>> leaves, std::size_t layers) {
  ModelParamsT<Var<D>> pv;
  pv.blocks.resize(layers);
  std::size_t i = 0;
  visit(pv, [&](const std::string&, Var<D>& v) {
    check(i < leaves.size(), "gradcheck: leaf count mismatch");
    v = leaves[i++];
  });
  check(i == leaves.size(), "gradcheck: ", leaves.size(), " leaves for ", i, " parameters");
  return pv;
}

inline std::vector<Tensor<D>> flatten_params(const ModelParamsT<Tensor<D>>& p) {
  std::vector<Tensor<D>> out;
  visit(const_cast<ModelParamsT<Tensor<D>>&>(p),
        [&](const std::string&, Tensor<D>& t) { out.push_back(t); });
  return out;
}

struct RowSpec {
  std::string name;
  double tolerance;
  std::vector<Tensor<D>> params;
  LossBuilder<D> build;
  std::size_t limit = 0;  // per-tensor element cap; 0 = all
};

// weight the output so gradients are dense and anisotropic
inline Var<D> weighted_sum(Tape<D>& t, Var<D> x, Rng& r) {
  Tensor<D> w(t.val(x).shape);
  for (auto& v : w.data) v = r.uniform(-1.0, 1.0);
  return ops::sum_all(ops::mul(x, t.constant(std::move(w))));
}

inline GradCheckRow run_row(const RowSpec& spec) {
  const GradCheckReport<D> rep = grad_check<D>(spec.params, spec.build, 1e-5, spec.limit);
  GradCheckRow row;
  row.name = spec.name;
  row.max_rel_err = rep.max_rel_err;
  row.tolerance = spec.tolerance;
  row.pass = rep.max_rel_err <= spec.tolerance && std::isfinite(rep.max_rel_err);
  return row;
}

}  // namespace gradcheck_detail

inline std::vector<GradCheckRow> run_gradcheck_suite(std::uint64_t seed = 0) {
  using namespace gradcheck_detail;
  namespace o = ops;
  Rng rng(derive_seed(seed, 7, 0));
  std::vector<RowSpec> specs;

  {
    RowSpec s;
    s.name = "matmul";
    s.tolerance = 1e-6;
    s.params = {rand_tensor(rng, {3, 4, 5}), rand_tensor(rng, {5, 6})};
    Rng wr(derive_seed(seed, 7, 100));
    s.build = [wr](Tape<D>& t, std::span<const Var<D>> p) mutable {
      Rng r = wr;
      return weighted_sum(t, o::matmul(p[0], p[1]), r);
    };
    specs.push_back(std::move(s));
  }
  {
    RowSpec s;
    s.name = "bmm";
    s.tolerance = 1e-6;
    s.params = {rand_tensor(rng, {2, 3, 4}), rand_tensor(rng, {2, 5, 4}),
                rand_tensor(rng, {2, 3, 5})};
    Rng wr(derive_seed(seed, 7, 101));
    s.build = [wr](Tape<D>& t, std::span<const Var<D>> p) mutable {
      Rng r = wr;
      // both transpose flavors: a b^T and a^T c
      Var<D> x = o::bmm(p[0], p[1], false, true);   // 2x3x5
      Var<D> y = o::bmm(p[0], p[2], true, false);   // 2x4x5
      return o::add(weighted_sum(t, x, r), weighted_sum(t, y, r));
    };
    specs.push_back(std::move(s));
  }
  {
    RowSpec s;
    s.name = "softmax";
    s.tolerance = 1e-6;
    s.params = {rand_tensor(rng, {4, 7}, -3.0, 3.0)};
    Rng wr(derive_seed(seed, 7, 102));
    s.build = [wr](Tape<D>& t, std::span<const Var<D>> p) mutable {
      Rng r = wr;
      return weighted_sum(t, o::softmax_lastdim(p[0]), r);
    };
    specs.push_back(std::move(s));
  }
  {
    RowSpec s;
    s.name = "layer_norm";
    s.tolerance = 1e-6;
    s.params = {rand_tensor(rng, {5, 6}), rand_tensor(rng, {6}, 0.5, 1.5),
                rand_tensor(rng, {6})};
    Rng wr(derive_seed(seed, 7, 103));
    s.build = [wr](Tape<D>& t, std::span<const Var<D>> p) mutable {
      Rng r = wr;
      return weighted_sum(t, o::layer_norm(p[0], p[1], p[2]), r);
    };
    specs.push_back(std::move(s));
  }
  {
    RowSpec s;
    s.name = "gelu";
    s.tolerance = 1e-6;
    s.params = {rand_tensor(rng, {4, 9}, -3.0, 3.0)};
    Rng wr(derive_seed(seed, 7, 104));
    s.build = [wr](Tape<D>& t, std::span<const Var<D>> p) mutable {
      Rng r = wr;
      return weighted_sum(t, o::gelu(p[0]), r);
    };
    specs.push_back(std::move(s));
  }
  {
    RowSpec s;
    s.name = "sigmoid";
    s.tolerance = 1e-6;
    s.params = {rand_tensor(rng, {3, 8}, -4.0, 4.0)};
    Rng wr(derive_seed(seed, 7, 105));
    s.build = [wr](Tape<D>& t, std::span<const Var<D>> p) mutable {
      Rng r = wr;
      return weighted_sum(t, o::sigmoid(p[0]), r);
    };
    specs.push_back(std::move(s));
  }
  {
    RowSpec s;
    s.name = "exp";
    s.tolerance = 1e-6;
    s.params = {rand_tensor(rng, {3, 5}, -2.0, 2.0)};
    Rng wr(derive_seed(seed, 7, 106));
    s.build = [wr](Tape<D>& t, std::span<const Var<D>> p) mutable {
      Rng r = wr;
      return weighted_sum(t, o::exp(p[0]), r);
    };
    specs.push_back(std::move(s));
  }
  {
    RowSpec s;
    s.name = "log";
    s.tolerance = 1e-6;
    s.params = {rand_tensor(rng, {3, 5}, 0.2, 3.0)};
    Rng wr(derive_seed(seed, 7, 107));
    s.build = [wr](Tape<D>& t, std::span<const Var<D>> p) mutable {
      Rng r = wr;
      return weighted_sum(t, o::log(p[0]), r);
    };
    specs.push_back(std::move(s));
  }
  {
    RowSpec s;
    s.name = "clamp";
    s.tolerance = 1e-6;
    s.params = {rand_tensor_clampsafe(rng, {4, 6}, -0.5, 0.5)};
    Rng wr(derive_seed(seed, 7, 108));
    s.build = [wr](Tape<D>& t, std::span<const Var<D>> p) mutable {
      Rng r = wr;
      return weighted_sum(t, o::clamp(p[0], -0.5, 0.5), r);
    };
    specs.push_back(std::move(s));
  }
  {
    RowSpec s;
    s.name = "add_mul_bias";
    s.tolerance = 1e-6;
    s.params = {rand_tensor(rng, {3, 4, 5}), rand_tensor(rng, {3, 4, 5}),
                rand_tensor(rng, {5}), rand_tensor(rng, {4, 5})};
    Rng wr(derive_seed(seed, 7, 109));
    s.build = [wr](Tape<D>& t, std::span<const Var<D>> p) mutable {
      Rng r = wr;
      Var<D> x = o::add_bias(o::mul(p[0], p[1]), p[2]);
      x = o::add_bcast0(o::mul_bcast0(x, p[3]), p[3]);
      return weighted_sum(t, o::sub(x, p[1]), r);
    };
    specs.push_back(std::move(s));
  }
  {
    RowSpec s;
    s.name = "reductions";
    s.tolerance = 1e-6;
    s.params = {rand_tensor(rng, {4, 5}), rand_tensor(rng, {2, 3, 4})};
    Rng wr(derive_seed(seed, 7, 110));
    s.build = [wr](Tape<D>& t, std::span<const Var<D>> p) mutable {
      Rng r = wr;
      Var<D> a = weighted_sum(t, o::tile0(o::mean_axis0(p[0]), 3), r);
      Var<D> b = weighted_sum(t, o::sum_lastdim(p[1]), r);
      Var<D> c = weighted_sum(t, o::sum_axis0(p[1]), r);
      return o::add(o::add(a, b), o::add(c, o::mean_all(p[0])));
    };
    specs.push_back(std::move(s));
  }
  {
    RowSpec s;
    s.name = "concat_slice_reshape";
    s.tolerance = 1e-6;
    s.params = {rand_tensor(rng, {2, 3, 4}), rand_tensor(rng, {2, 2, 4}),
                rand_tensor(rng, {4, 6})};
    Rng wr(derive_seed(seed, 7, 111));
    s.build = [wr](Tape<D>& t, std::span<const Var<D>> p) mutable {
      Rng r = wr;
      Var<D> cat = o::concat(p[0], p[1], 1);                         // 2x5x4
      Var<D> sl = o::slice(cat, 1, std::size_t(1), std::size_t(4));  // 2x3x4
      Var<D> tr = o::transpose2d(p[2]);                              // 6x4
      Var<D> rs = o::reshape(sl, {6, 4});
      return weighted_sum(t, o::add(rs, tr), r);
    };
    specs.push_back(std::move(s));
  }

  // attention variants: P = 3 patches plus class token, d = 4, two heads
  auto attn_params = [&](Rng& r) {
    std::vector<Tensor<D>> p;
    p.push_back(rand_tensor(r, {2, 4, 4}));  // tokens, B x (1+P) x d
    for (int i = 0; i < 4; ++i) {
      p.push_back(rand_tensor(r, {4, 4}));   // w
      p.push_back(rand_tensor(r, {4}));      // b
    }
    return p;
  };
  auto bind_attn = [](std::span<const Var<D>> p) {
    return AttnParamsT<Var<D>>{p[1], p[2], p[3], p[4], p[5], p[6], p[7], p[8]};
  };
  {
    RowSpec s;
    s.name = "attention_vanilla";
    s.tolerance = 1e-6;
    s.params = attn_params(rng);
    Rng wr(derive_seed(seed, 7, 112));
    s.build = [wr, bind_attn](Tape<D>& t, std::span<const Var<D>> p) mutable {
      Rng r = wr;
      Var<D> out = multi_head_attention(t, p[0], bind_attn(p), 2, AttnKind::vanilla);
      return weighted_sum(t, out, r);
    };
    specs.push_back(std::move(s));
  }
  {
    RowSpec s;
    s.name = "attention_graph_guided";
    s.tolerance = 1e-6;
    s.params = attn_params(rng);
    Tensor<D> graph = rand_tensor(rng, {4, 4}, 0.1, 1.0);
    Rng wr(derive_seed(seed, 7, 113));
    s.build = [wr, bind_attn, graph](Tape<D>& t, std::span<const Var<D>> p) mutable {
      Rng r = wr;
      Var<D> g = t.constant(graph);
      Var<D> out = multi_head_attention(t, p[0], bind_attn(p), 2, AttnKind::graph_guided, g);
      return weighted_sum(t, out, r);
    };
    specs.push_back(std::move(s));
  }
  {
    RowSpec s;
    s.name = "attention_score_masked";
    s.tolerance = 1e-6;
    s.params = attn_params(rng);
    Tensor<D> scores = rand_tensor(rng, {2, 3}, 0.1, 1.0);
    Rng wr(derive_seed(seed, 7, 114));
    s.build = [wr, bind_attn, scores](Tape<D>& t, std::span<const Var<D>> p) mutable {
      Rng r = wr;
      Var<D> sc = t.constant(scores);
      Var<D> out =
          multi_head_attention(t, p[0], bind_attn(p), 2, AttnKind::score_masked, {}, sc);
      return weighted_sum(t, out, r);
    };
    specs.push_back(std::move(s));
  }
  {
    // two stacked pre-norm blocks, the depth the acceptance bound quotes
    RowSpec s;
    s.name = "transformer_block";
    s.tolerance = 1e-5;
    RunConfig bc;
    bc.image_side = 16;
    bc.patch_side = 8;
    bc.dim = 4;
    bc.heads = 2;
    bc.layers = 2;
    bc.classes = 2;
    bc.mlp_ratio = 2;
    Rng br(derive_seed(seed, 7, 115));
    ModelParamsT<Tensor<D>> mp = init_params<D>(bc, br);
    std::vector<Tensor<D>> flat;
    for (std::size_t i = 0; i < 2; ++i) {
      auto& b = mp.blocks[i];
      for (Tensor<D>* t : {&b.ln1_g, &b.ln1_b, &b.attn.wq, &b.attn.bq, &b.attn.wk, &b.attn.bk,
                           &b.attn.wv, &b.attn.bv, &b.attn.wo, &b.attn.bo, &b.ln2_g, &b.ln2_b,
                           &b.mlp_w1, &b.mlp_b1, &b.mlp_w2, &b.mlp_b2})
        flat.push_back(*t);
    }
    s.params = flat;
    s.params.insert(s.params.begin(), rand_tensor(rng, {2, 4, 4}));
    Rng wr(derive_seed(seed, 7, 116));
    s.build = [wr](Tape<D>& t, std::span<const Var<D>> p) mutable {
      Rng r = wr;
      Var<D> x = p[0];
      for (std::size_t blk = 0; blk < 2; ++blk) {
        const std::size_t o0 = 1 + blk * 16;
        BlockParamsT<Var<D>> bp;
        bp.ln1_g = p[o0 + 0];
        bp.ln1_b = p[o0 + 1];
        bp.attn = {p[o0 + 2], p[o0 + 3], p[o0 + 4], p[o0 + 5],
                   p[o0 + 6], p[o0 + 7], p[o0 + 8], p[o0 + 9]};
        bp.ln2_g = p[o0 + 10];
        bp.ln2_b = p[o0 + 11];
        bp.mlp_w1 = p[o0 + 12];
        bp.mlp_b1 = p[o0 + 13];
        bp.mlp_w2 = p[o0 + 14];
        bp.mlp_b2 = p[o0 + 15];
        x = transformer_block(t, x, bp, 2, AttnKind::vanilla);
      }
      return weighted_sum(t, x, r);
    };
    specs.push_back(std::move(s));
  }
  {
    RowSpec s;
    s.name = "feature_fusion";
    s.tolerance = 1e-6;
    s.params = {rand_tensor(rng, {3, 4, 5})};
    Rng wr(derive_seed(seed, 7, 117));
    s.build = [wr](Tape<D>& t, std::span<const Var<D>> p) mutable {
      Rng r = wr;
      return weighted_sum(t, fuse(t, p[0]), r);
    };
    specs.push_back(std::move(s));
  }
  {
    RowSpec s;
    s.name = "patch_scores";
    s.tolerance = 1e-6;
    s.params = {rand_tensor(rng, {2, 3, 6}), rand_tensor(rng, {6, 3}), rand_tensor(rng, {3}),
                rand_tensor(rng, {3, 1}), rand_tensor(rng, {1})};
    Rng wr(derive_seed(seed, 7, 118));
    s.build = [wr](Tape<D>& t, std::span<const Var<D>> p) mutable {
      Rng r = wr;
      DiscParamsT<Var<D>> dp{p[1], p[2], p[3], p[4]};
      Var<D> probs = patch_discriminate(t, p[0], dp);
      return weighted_sum(t, transferability_score(t, probs, 1e-7), r);
    };
    specs.push_back(std::move(s));
  }
  {
    RowSpec s;
    s.name = "classification_loss";
    s.tolerance = 1e-6;
    s.params = {rand_tensor(rng, {4, 3}, -2.0, 2.0)};
    s.build = [](Tape<D>& t, std::span<const Var<D>> p) {
      return classification_loss(t, p[0], {0, 2, 1, 2}, 1e-7);
    };
    specs.push_back(std::move(s));
  }
  {
    RowSpec s;
    s.name = "binary_ce";
    s.tolerance = 1e-6;
    s.params = {rand_tensor(rng, {3, 4}, -2.0, 2.0)};
    s.build = [](Tape<D>& t, std::span<const Var<D>> p) {
      return binary_ce(t, ops::sigmoid(p[0]), domain_targets<D>(2, 1, 4), 1e-7);
    };
    specs.push_back(std::move(s));
  }
  {
    RowSpec s;
    s.name = "self_clustering_mi";
    s.tolerance = 1e-6;
    s.params = {rand_tensor(rng, {5, 3}, -2.0, 2.0)};
    s.build = [](Tape<D>& t, std::span<const Var<D>> p) {
      return self_clustering_mi(t, p[0], 1e-7);
    };
    specs.push_back(std::move(s));
  }

  {
    // the full objective on a tiny model: d=8, P=4, L=2, B=2, K=2
    RowSpec s;
    s.name = "end_to_end_total";
    s.tolerance = 1e-4;
    RunConfig tc;
    tc.image_side = 16;
    tc.patch_side = 8;
    tc.dim = 8;
    tc.heads = 2;
    tc.layers = 2;
    tc.classes = 2;
    tc.mlp_ratio = 2;
    tc.batch_size = 2;

    Rng ir(derive_seed(seed, 7, 200));
    ModelParamsT<Tensor<D>> mp = init_params<D>(tc, ir);
    s.params = flatten_params(mp);

    DomainBatch batch;
    Rng dr(derive_seed(seed, 7, 201));
    for (int i = 0; i < 2; ++i) {
      Image img(16, 16);
      for (auto& v : img.data) v = float(dr.uniform());
      batch.source_images.push_back(img);
      batch.source_labels.push_back(std::size_t(i));
      Image tgt(16, 16);
      for (auto& v : tgt.data) v = float(dr.uniform());
      batch.target_images.push_back(tgt);
    }
    Tensor<D> raw_scores = rand_tensor(dr, {2, 4}, 0.2, 1.0);
    TransferGraph<D> graph = build_graph(raw_scores, tc.heads, 3);

    s.build = [tc, batch, graph](Tape<D>& t, std::span<const Var<D>> leaves) {
      t.flow_control_bypass = true;
      ModelParamsT<Var<D>> pv = bind_leaves(leaves, tc.layers);
      TrainForward<D> fwd = forward_train(t, pv, batch, graph, tc, 4);
      LossTerms<D> terms;
      const D eps = D(tc.prob_eps);
      terms.l_clc = classification_loss(t, fwd.src_logits, batch.source_labels, eps);
      terms.l_dis = binary_ce(t, fwd.dom_probs, domain_targets<D>(2, 2, 1), eps);
      terms.l_pat = binary_ce(t, fwd.patch_probs, domain_targets<D>(2, 2, 4), eps);
      terms.mi = self_clustering_mi(t, fwd.tgt_logits, eps);
      return total_loss(t, terms, D(tc.alpha), D(tc.beta), D(tc.gamma));
    };
    specs.push_back(std::move(s));
  }

  std::vector<GradCheckRow> rows;
  for (const auto& spec : specs) rows.push_back(run_row(spec));
  return rows;
}

}  // namespace fftat
