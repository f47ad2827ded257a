#pragma once

#include <cstddef>

#include "fftat/tape.hpp"
#include "fftat/tensor.hpp"

namespace fftat {

// In-batch embedding fusion over patch tokens (B x P x d), one domain at a
// time: each embedding becomes a convex combination of itself and all
// same-position embeddings in the batch,
//
//   fused_i = (2 b_i + sum_{j != i} b_j) / (B + 1) = (b_i + S) / (B + 1),
//
// with S the per-position batch sum. Coefficients sum to 1, so the batch
// mean is preserved exactly and B = 1 is the identity. Gradients flow
// through every term.
template <typename T>
Var<T> fuse(Tape<T>& tape, Var<T> batch) {
  const Tensor<T>& bv = tape.val(batch);
  check(bv.rank() == 3, "fuse: want B x P x d, got ", shape_str(bv.shape));
  const std::size_t b = bv.dim(0);
  if (b == 1) return batch;
  Var<T> s = ops::sum_axis0(batch);  // P x d
  return ops::scale(ops::add_bcast0(batch, s), T(1) / T(b + 1));
}

}  // namespace fftat
