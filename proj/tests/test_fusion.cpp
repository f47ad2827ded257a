#include <cmath>
#include <vector>

#include "doctest.h"
#include "fftat/fusion.hpp"
#include "fftat/rng.hpp"

using namespace fftat;

namespace {

Tensor<double> rand_batch(std::size_t b, std::size_t p, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> t({b, p, d});
  for (auto& v : t.data) v = rng.uniform(-2.0, 2.0);
  return t;
}

Tensor<double> fuse_plain(const Tensor<double>& batch) {
  Tape<double> t;
  return t.val(fuse(t, t.constant(batch)));
}

}  // namespace

TEST_CASE("a batch of one is returned untouched: same tape node") {
  Tape<double> t;
  auto in = t.constant(rand_batch(1, 3, 4, 0));
  auto out = fuse(t, in);
  CHECK(out.id == in.id);
  CHECK(t.val(out).data == t.val(in).data);
}

TEST_CASE("two-item batch mixes with coefficients 2/3 and 1/3") {
  Tensor<double> batch({2, 1, 2});
  batch.data = {3.0, 9.0, 0.0, 3.0};
  const Tensor<double> f = fuse_plain(batch);
  // (b_i + S) / 3 with S = (3, 12)
  CHECK(f.data[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(f.data[1] == doctest::Approx(7.0).epsilon(1e-15));
  CHECK(f.data[2] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(f.data[3] == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("fusion coefficients sum to one: an all-ones batch maps to all ones") {
  for (std::size_t b : {2, 3, 5, 7}) {
    const Tensor<double> f = fuse_plain(Tensor<double>::full({b, 2, 3}, 1.0));
    // (1 + b) / (b + 1) in fp: integer-valued sums and an exact divide by itself
    for (double v : f.data) CHECK(v == 1.0);
  }
}

TEST_CASE("fusion preserves the per-position batch mean") {
  const Tensor<double> batch = rand_batch(5, 4, 3, 1);
  const Tensor<double> f = fuse_plain(batch);
  REQUIRE(f.shape == batch.shape);
  for (std::size_t p = 0; p < 4; ++p)
    for (std::size_t e = 0; e < 3; ++e) {
      double before = 0.0, after = 0.0;
      for (std::size_t i = 0; i < 5; ++i) {
        before += batch.at(i, p, e);
        after += f.at(i, p, e);
      }
      CHECK(std::fabs(after - before) / 5.0 <= 1e-12);
    }
}

TEST_CASE("fusion is linear in the batch") {
  const Tensor<double> a = rand_batch(3, 2, 4, 2);
  const Tensor<double> b = rand_batch(3, 2, 4, 3);
  Tensor<double> mix = a;
  for (std::size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = 2.0 * a.data[i] - b.data[i];

  const Tensor<double> fa = fuse_plain(a), fb = fuse_plain(b), fmix = fuse_plain(mix);
  for (std::size_t i = 0; i < fa.data.size(); ++i)
    CHECK(std::fabs(fmix.data[i] - (2.0 * fa.data[i] - fb.data[i])) <= 1e-12);
}

TEST_CASE("fusion commutes with batch permutation") {
  const Tensor<double> batch = rand_batch(5, 3, 2, 4);
  const std::vector<std::size_t> perm = {3, 0, 4, 2, 1};
  Tensor<double> shuffled(batch.shape);
  const std::size_t stride = 3 * 2;
  for (std::size_t i = 0; i < 5; ++i)
    std::copy(batch.data.begin() + std::ptrdiff_t(perm[i] * stride),
              batch.data.begin() + std::ptrdiff_t((perm[i] + 1) * stride),
              shuffled.data.begin() + std::ptrdiff_t(i * stride));

  const Tensor<double> f = fuse_plain(batch), fs = fuse_plain(shuffled);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t r = 0; r < stride; ++r)
      CHECK(std::fabs(fs.data[i * stride + r] - f.data[perm[i] * stride + r]) <= 1e-12);

  // with two items the batch sum has one addend order, so equality is bitwise
  const Tensor<double> two = rand_batch(2, 3, 2, 5);
  Tensor<double> swapped(two.shape);
  std::copy(two.data.begin() + std::ptrdiff_t(stride), two.data.end(), swapped.data.begin());
  std::copy(two.data.begin(), two.data.begin() + std::ptrdiff_t(stride),
            swapped.data.begin() + std::ptrdiff_t(stride));
  const Tensor<double> f2 = fuse_plain(two), f2s = fuse_plain(swapped);
  for (std::size_t r = 0; r < stride; ++r) {
    CHECK(f2s.data[r] == f2.data[stride + r]);
    CHECK(f2s.data[stride + r] == f2.data[r]);
  }
}

TEST_CASE("fusion contracts the batch toward its mean") {
  const Tensor<double> batch = rand_batch(6, 2, 2, 6);
  const Tensor<double> f = fuse_plain(batch);
  for (std::size_t p = 0; p < 2; ++p)
    for (std::size_t e = 0; e < 2; ++e) {
      double mean = 0.0;
      for (std::size_t i = 0; i < 6; ++i) mean += batch.at(i, p, e);
      mean /= 6.0;
      double var_before = 0.0, var_after = 0.0;
      for (std::size_t i = 0; i < 6; ++i) {
        var_before += (batch.at(i, p, e) - mean) * (batch.at(i, p, e) - mean);
        var_after += (f.at(i, p, e) - mean) * (f.at(i, p, e) - mean);
      }
      // fused deviations are the originals scaled by 1/(B+1)
      CHECK(var_after == doctest::Approx(var_before / 49.0).epsilon(1e-9));
    }
}

TEST_CASE("fuse rejects non-batched input") {
  Tape<double> t;
  CHECK_THROWS_AS(fuse(t, t.constant(Tensor<double>::zeros({3, 4}))), Error);
}
