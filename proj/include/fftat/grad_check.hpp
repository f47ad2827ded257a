#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "fftat/common.hpp"
#include "fftat/tape.hpp"
#include "fftat/tensor.hpp"

namespace fftat {

// Central-difference verification of tape gradients. The loss builder must be
// a pure function of the parameter values: build(tape, leaves) -> scalar Var.
// rel err = |analytic - central| / max(1, |central|), reported at the worst
// element across all checked parameters.

template <typename T>
struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_param = 0;   // index into the params vector
  std::size_t worst_elem = 0;    // flat index within that parameter
  double analytic = 0.0;         // gradient at the worst element
  double numeric = 0.0;          // central difference at the worst element
  double loss = 0.0;             // unperturbed loss value
  std::size_t checked = 0;       // number of elements compared
};

template <typename T>
using LossBuilder = std::function<Var<T>(Tape<T>&, std::span<const Var<T>>)>;

namespace detail {

template <typename T>
T eval_loss(const std::vector<Tensor<T>>& params, const LossBuilder<T>& build) {
  Tape<T> tape;
  std::vector<Var<T>> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.leaf(p, false));
  Var<T> loss = build(tape, leaves);
  check(tape.val(loss).numel() == 1, "grad_check: loss must be scalar");
  return tape.val(loss).data[0];
}

}  // namespace detail

// Checks up to `limit` evenly strided elements per parameter (0 = all).
template <typename T>
GradCheckReport<T> grad_check(const std::vector<Tensor<T>>& params,
                              const LossBuilder<T>& build, T eps,
                              std::size_t limit = 0) {
  check(!params.empty(), "grad_check: no parameters");
  check(eps > T(0), "grad_check: eps must be positive");

  GradCheckReport<T> rep;

  // analytic pass
  std::vector<std::vector<T>> analytic(params.size());
  {
    Tape<T> tape;
    std::vector<Var<T>> leaves;
    leaves.reserve(params.size());
    for (const auto& p : params) leaves.push_back(tape.leaf(p, true));
    Var<T> loss = build(tape, leaves);
    check(tape.val(loss).numel() == 1, "grad_check: loss must be scalar");
    rep.loss = double(tape.val(loss).data[0]);
    tape.backward(loss);
    for (std::size_t k = 0; k < params.size(); ++k) analytic[k] = tape.grad(leaves[k]);
  }

  // numeric pass, two evaluations per checked element
  std::vector<Tensor<T>> work = params;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const std::size_t n = params[k].numel();
    if (n == 0) continue;
    const std::size_t count = (limit == 0 || limit >= n) ? n : limit;
    const std::size_t stride = n / count;
    for (std::size_t c = 0; c < count; ++c) {
      const std::size_t i = c * stride;
      const T saved = work[k].data[i];
      work[k].data[i] = saved + eps;
      const T plus = detail::eval_loss(work, build);
      work[k].data[i] = saved - eps;
      const T minus = detail::eval_loss(work, build);
      work[k].data[i] = saved;
      const double central = double(plus - minus) / (2.0 * double(eps));
      const double rel = std::abs(double(analytic[k][i]) - central) /
                         std::max(1.0, std::abs(central));
      ++rep.checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = k;
        rep.worst_elem = i;
        rep.analytic = double(analytic[k][i]);
        rep.numeric = central;
      }
    }
  }
  return rep;
}

}  // namespace fftat
