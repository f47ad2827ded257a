#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "fftat/tape.hpp"
#include "fftat/tensor.hpp"

namespace fftat {

// The four objective terms. Discriminator terms are plain positive
// cross-entropies; the adversarial minus signs live in the gradient
// reversal the model applies to discriminator inputs, so one minimization
// trains discriminators down and the encoder up.

// mean cross-entropy of softmax(logits) against integer labels
template <typename T>
Var<T> classification_loss(Tape<T>& tape, Var<T> logits,
                           const std::vector<std::size_t>& labels, T eps) {
  const Tensor<T>& lv = tape.val(logits);
  check(lv.rank() == 2, "classification_loss: want B x K logits, got ", shape_str(lv.shape));
  check(labels.size() == lv.dim(0), "classification_loss: ", labels.size(), " labels for ",
        lv.dim(0), " rows");
  for (std::size_t i = 0; i < labels.size(); ++i)
    check(labels[i] < lv.dim(1), "label ", labels[i], " out of range for ", lv.dim(1),
          " classes");
  Var<T> p = ops::softmax_lastdim(logits);
  Var<T> picked = ops::pick_per_row(ops::clamp(p, eps, T(1)), labels);
  return ops::neg(ops::mean_all(ops::log(picked)));
}

// mean binary cross-entropy of probabilities against constant targets;
// used by both discriminator terms (targets: 1 = source, 0 = target)
template <typename T>
Var<T> binary_ce(Tape<T>& tape, Var<T> probs, const Tensor<T>& targets, T eps) {
  const Tensor<T>& pv = tape.val(probs);
  check(pv.shape == targets.shape, "binary_ce: probs ", shape_str(pv.shape), " vs targets ",
        shape_str(targets.shape));
  Var<T> p = ops::clamp(probs, eps, T(1) - eps);
  Var<T> y = tape.constant(targets);
  Var<T> ll = ops::add(ops::mul(y, ops::log(p)),
                       ops::mul(ops::one_minus(y), ops::log(ops::one_minus(p))));
  return ops::neg(ops::mean_all(ll));
}

// concatenated per-domain targets for a batch of n_s source rows then n_t
// target rows, broadcast over `cols` entries per row
template <typename T>
Tensor<T> domain_targets(std::size_t n_s, std::size_t n_t, std::size_t cols) {
  Tensor<T> t = cols == 1 ? Tensor<T>::zeros({n_s + n_t}) : Tensor<T>::zeros({n_s + n_t, cols});
  for (std::size_t i = 0; i < n_s * cols; ++i) t.data[i] = T(1);
  return t;
}

// self-clustering objective on target softmax rows:
//   I = H(mean_i p_i) - mean_i H(p_i), natural log, in [0, ln K]
template <typename T>
Var<T> self_clustering_mi(Tape<T>& tape, Var<T> target_logits, T eps) {
  // copy dims up front: adding ops below may reallocate the tape's node store
  const Shape ls = tape.val(target_logits).shape;
  check(ls.size() == 2 && ls[0] > 0, "self_clustering_mi: want nonempty B x K logits, got ",
        shape_str(ls));
  Var<T> p = ops::softmax_lastdim(target_logits);
  auto plogp_sum = [&](Var<T> x) {
    // sum over the last axis of x log x, clamped away from 0
    return ops::sum_lastdim(ops::mul(x, ops::log(ops::clamp(x, eps, T(1)))));
  };
  Var<T> h_rows = ops::neg(plogp_sum(p));                       // B
  Var<T> p_bar = ops::reshape(ops::mean_axis0(p), {std::size_t(1), ls[1]});
  Var<T> h_marginal = ops::reshape(ops::neg(plogp_sum(p_bar)), Shape{});
  return ops::sub(h_marginal, ops::mean_all(h_rows));
}

template <typename T>
struct LossTerms {
  Var<T> l_clc, l_dis, l_pat, mi, total;
};

// total = l_clc + alpha * l_dis + beta * l_pat - gamma * mi
template <typename T>
Var<T> total_loss(Tape<T>& tape, const LossTerms<T>& t, T alpha, T beta, T gamma) {
  auto term_finite = [&](Var<T> v, const char* name) {
    const T x = tape.val(v).data[0];
    if (!std::isfinite(double(x)))
      throw NumericalError(strcat("loss term ", name, " is non-finite (", double(x), ")"));
  };
  term_finite(t.l_clc, "l_clc");
  term_finite(t.l_dis, "l_dis");
  term_finite(t.l_pat, "l_pat");
  term_finite(t.mi, "mi");
  Var<T> total = ops::add(t.l_clc, ops::scale(t.l_dis, alpha));
  total = ops::add(total, ops::scale(t.l_pat, beta));
  return ops::sub(total, ops::scale(t.mi, gamma));
}

}  // namespace fftat
