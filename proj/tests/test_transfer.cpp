#include <cmath>
#include <vector>

#include "doctest.h"
#include "fftat/rng.hpp"
#include "fftat/transfer.hpp"

using namespace fftat;

namespace {

double score_of(double p, double eps = 1e-7) {
  Tape<double> t;
  auto pv = t.constant(Tensor<double>::full({1}, p));
  return t.val(transferability_score(t, pv, eps)).data[0];
}

}  // namespace

TEST_CASE("transferability score pins: confusion scores 1, certainty scores ~0") {
  CHECK(score_of(0.5) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(score_of(0.25) == doctest::Approx(0.8112781244591328).epsilon(1e-15));
  CHECK(score_of(0.75) == doctest::Approx(0.8112781244591328).epsilon(1e-15));

  const double near_zero = score_of(1e-7);
  CHECK(near_zero > 0.0);
  CHECK(near_zero < 1e-5);
}

TEST_CASE("score is symmetric around 0.5, bitwise, and increases toward it") {
  for (double p : {0.1, 0.23, 0.37, 0.499}) CHECK(score_of(p) == score_of(1.0 - p));
  CHECK(score_of(0.3) < score_of(0.4));
  CHECK(score_of(0.4) < score_of(0.5));
  CHECK(score_of(0.05) < score_of(0.2));
}

TEST_CASE("out-of-range probabilities saturate at the clamp boundary") {
  CHECK(score_of(5.0) == score_of(1.0 - 1e-7));
  CHECK(score_of(-3.0) == score_of(1e-7));
  CHECK(score_of(0.99999999) == score_of(1.0 - 1e-7));  // clamp pins past 1 - eps
}

TEST_CASE("score rejects a degenerate clamp width") {
  Tape<double> t;
  auto pv = t.constant(Tensor<double>::full({1}, 0.5));
  CHECK_THROWS_AS(transferability_score(t, pv, 0.0), Error);
  CHECK_THROWS_AS(transferability_score(t, pv, 0.5), Error);
}

TEST_CASE("graph from a single image is the score outer product") {
  Tensor<double> scores({1, 2});
  scores.data = {1.0, 0.5};
  const TransferGraph<double> g = build_graph(scores, 4, 7);
  CHECK(g.p == 2);
  CHECK(g.iteration_built == 7);
  CHECK(g.m == std::vector<double>({1.0, 0.5, 0.5, 0.25}));
}

TEST_CASE("graph from a batch averages the per-image outer products") {
  Tensor<double> scores({2, 2});
  scores.data = {1.0, 0.0, 0.0, 1.0};
  const TransferGraph<double> g = build_graph(scores, 4, 0);
  CHECK(g.m == std::vector<double>({0.5, 0.0, 0.0, 0.5}));
}

TEST_CASE("the head average cancels: any head count builds the same graph") {
  Rng rng(5);
  Tensor<double> scores({3, 5});
  for (auto& v : scores.data) v = rng.uniform(0.0, 1.0);
  const TransferGraph<double> a = build_graph(scores, 1, 3);
  const TransferGraph<double> b = build_graph(scores, 8, 3);
  CHECK(a.m == b.m);
}

TEST_CASE("graph entries stay in [0,1] and the matrix is exactly symmetric") {
  Rng rng(6);
  Tensor<double> scores({4, 6});
  for (auto& v : scores.data) v = rng.uniform(0.0, 1.0);
  const TransferGraph<double> g = build_graph(scores, 2, 1);
  for (double v : g.m) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  for (std::size_t r = 0; r < g.p; ++r)
    for (std::size_t c = 0; c < g.p; ++c) CHECK(g.m[r * g.p + c] == g.m[c * g.p + r]);

  // diagonal entry r is the batch mean of score_r squared
  for (std::size_t r = 0; r < g.p; ++r) {
    double m = 0.0;
    for (std::size_t i = 0; i < 4; ++i) m += scores.at(i, r) * scores.at(i, r);
    CHECK(g.m[r * g.p + r] == doctest::Approx(m / 4.0).epsilon(1e-15));
  }
}

TEST_CASE("build_graph validates its inputs") {
  Tensor<double> ok({1, 2});
  ok.data = {0.5, 0.5};
  CHECK_THROWS_AS(build_graph(ok, 0, 0), Error);
  CHECK_THROWS_AS(build_graph(Tensor<double>::zeros({3}), 1, 0), Error);
}

TEST_CASE("unweighted initial graph is all ones at iteration 0") {
  const TransferGraph<float> g = TransferGraph<float>::ones(3);
  CHECK(g.p == 3);
  CHECK(g.iteration_built == 0);
  CHECK(g.m == std::vector<float>(9, 1.0f));
}

TEST_CASE("pad_graph surrounds the interior with a ones row and column") {
  TransferGraph<double> g{2, 4, {0.9, 0.3, 0.3, 0.1}};
  const Tensor<double> p = pad_graph(g);
  REQUIRE(p.shape == Shape({3, 3}));
  CHECK(p.data == std::vector<double>({1.0, 1.0, 1.0, 1.0, 0.9, 0.3, 1.0, 0.3, 0.1}));

  TransferGraph<double> bad{2, 0, {1.0}};
  CHECK_THROWS_AS(pad_graph(bad), Error);
}

TEST_CASE("zero-weight patch discriminator is maximally confused everywhere") {
  RunConfig cfg;
  cfg.image_side = 16;
  cfg.patch_side = 4;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.layers = 1;
  ModelParamsT<Tensor<double>> zp = zero_params<double>(cfg);

  Rng rng(11);
  Tensor<double> tokens({2, 5, 8});
  for (auto& v : tokens.data) v = rng.uniform(-2.0, 2.0);

  Tape<double> t;
  auto pv = params_to_tape(t, zp, false);
  const Tensor<double>& probs = t.val(patch_discriminate(t, t.constant(tokens), pv.pat));
  REQUIRE(probs.shape == Shape({2, 5}));
  for (double v : probs.data) CHECK(v == 0.5);  // sigmoid(0), bitwise

  CHECK_THROWS_AS(patch_discriminate(t, t.constant(Tensor<double>::zeros({2, 8})), pv.pat),
                  Error);
}

TEST_CASE("scores from a confused discriminator build an all-ones-ish graph") {
  // probs all 0.5 -> scores all 1 -> every graph entry 1 up to rounding
  Tape<double> t;
  auto probs = t.constant(Tensor<double>::full({2, 4}, 0.5));
  const Tensor<double>& s = t.val(transferability_score(t, probs, 1e-7));
  const TransferGraph<double> g = build_graph(s, 4, 2);
  for (double v : g.m) CHECK(v == doctest::Approx(1.0).epsilon(1e-14));
}
