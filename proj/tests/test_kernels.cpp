#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "fftat/kernels.hpp"
#include "fftat/rng.hpp"

using namespace fftat;
namespace k = fftat::kernels;

namespace {
std::vector<double> rand_vec(Rng& rng, std::size_t n, double lo = -1, double hi = 1) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}
}  // namespace

TEST_CASE("matmul identity") {
  // I * A = A for any 2x2 A
  const std::vector<double> eye = {1, 0, 0, 1};
  const std::vector<double> a = {3.5, -2, 0.25, 7};
  std::vector<double> c(4, -99);
  k::matmul(eye.data(), a.data(), c.data(), 2, 2, 2);
  for (int i = 0; i < 4; ++i) CHECK(c[i] == a[i]);
}

TEST_CASE("matmul against plain triple loop") {
  Rng rng(1);
  const std::size_t m = 7, kk = 5, n = 9;
  auto a = rand_vec(rng, m * kk), b = rand_vec(rng, kk * n);
  std::vector<double> got(m * n), want(m * n, 0.0);
  k::matmul(a.data(), b.data(), got.data(), m, kk, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t x = 0; x < kk; ++x) want[i * n + j] += a[i * kk + x] * b[x * n + j];
  for (std::size_t i = 0; i < m * n; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("softmax of equal logits is uniform") {
  const std::vector<double> x = {0, 0, 0};
  std::vector<double> y(3);
  k::softmax_rows(x.data(), y.data(), 1, 3);
  for (double v : y) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("softmax rows are nonnegative and sum to 1") {
  Rng rng(2);
  const std::size_t rows = 50, n = 13;
  auto x = rand_vec(rng, rows * n, -20, 20);

  std::vector<double> y64(rows * n);
  k::softmax_rows(x.data(), y64.data(), rows, n);
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < n; ++j) {
      CHECK(y64[i * n + j] >= 0.0);
      s += y64[i * n + j];
    }
    CHECK(std::fabs(s - 1.0) <= 1e-12);
  }

  std::vector<float> x32(x.begin(), x.end()), y32(rows * n);
  k::softmax_rows(x32.data(), y32.data(), rows, n);
  for (std::size_t i = 0; i < rows; ++i) {
    float s = 0;
    for (std::size_t j = 0; j < n; ++j) s += y32[i * n + j];
    CHECK(std::fabs(double(s) - 1.0) <= 1e-6);
  }
}

TEST_CASE("bmm matches per-item matmul including transposes") {
  Rng rng(3);
  const std::size_t batch = 4, m = 3, kk = 6, n = 5;
  auto a = rand_vec(rng, batch * m * kk);
  auto b = rand_vec(rng, batch * kk * n);
  std::vector<double> got(batch * m * n), want(batch * m * n);
  k::bmm(a.data(), b.data(), got.data(), batch, m, kk, n, false, false);
  for (std::size_t i = 0; i < batch; ++i)
    k::matmul(a.data() + i * m * kk, b.data() + i * kk * n, want.data() + i * m * n, m, kk, n);
  CHECK(std::memcmp(got.data(), want.data(), sizeof(double) * got.size()) == 0);

  // a [b,m,k] x b[b,n,k]^T: row i of the transposed factor is its column
  auto bt = rand_vec(rng, batch * n * kk);
  std::vector<double> got2(batch * m * n, 0.0), want2(batch * m * n, 0.0);
  k::bmm(a.data(), bt.data(), got2.data(), batch, m, kk, n, false, true);
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) {
        double s = 0;
        for (std::size_t x = 0; x < kk; ++x)
          s += a[(i * m + r) * kk + x] * bt[(i * n + c) * kk + x];
        want2[(i * m + r) * n + c] = s;
      }
  for (std::size_t i = 0; i < got2.size(); ++i)
    CHECK(got2[i] == doctest::Approx(want2[i]).epsilon(1e-12));
}

TEST_CASE("layernorm rows have zero mean and unit variance under identity affine") {
  Rng rng(4);
  const std::size_t rows = 8, n = 32;
  auto x = rand_vec(rng, rows * n, -3, 3);
  std::vector<double> gamma(n, 1.0), beta(n, 0.0), y(rows * n), mean(rows), rstd(rows);
  k::layernorm_rows(x.data(), gamma.data(), beta.data(), y.data(), mean.data(), rstd.data(),
                    rows, n, 1e-12);
  for (std::size_t i = 0; i < rows; ++i) {
    double mu = 0, var = 0;
    for (std::size_t j = 0; j < n; ++j) mu += y[i * n + j];
    mu /= double(n);
    for (std::size_t j = 0; j < n; ++j) var += (y[i * n + j] - mu) * (y[i * n + j] - mu);
    var /= double(n);
    CHECK(std::fabs(mu) <= 1e-12);
    CHECK(std::fabs(var - 1.0) <= 1e-9);
  }
}

TEST_CASE("gelu endpoint values") {
  const std::vector<double> x = {0.0, 10.0, -10.0};
  std::vector<double> y(3);
  k::gelu(x.data(), y.data(), 3);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == doctest::Approx(10.0).epsilon(1e-12));       // phi(10) ~ 1
  CHECK(std::fabs(y[2]) <= 1e-12);                           // phi(-10) ~ 0
}

TEST_CASE("parallel kernels are bitwise equal to serial") {
  // force the OpenMP code path even on a small machine
  const int saved = k::thread_cap();
  k::set_threads(4);
  Rng rng(5);

  SUBCASE("matmul") {
    const std::size_t m = 37, kk = 21, n = 29;
    auto a = rand_vec(rng, m * kk), b = rand_vec(rng, kk * n);
    std::vector<double> cs(m * n), cp(m * n);
    k::matmul_serial(a.data(), b.data(), cs.data(), m, kk, n);
    k::matmul_omp(a.data(), b.data(), cp.data(), m, kk, n);
    CHECK(std::memcmp(cs.data(), cp.data(), sizeof(double) * cs.size()) == 0);
  }
  SUBCASE("bmm") {
    const std::size_t batch = 6, m = 5, kk = 7, n = 4;
    auto a = rand_vec(rng, batch * m * kk), b = rand_vec(rng, batch * n * kk);
    std::vector<double> cs(batch * m * n, 0.0), cp(batch * m * n, 0.0);
    k::bmm_serial(a.data(), b.data(), cs.data(), batch, m, kk, n, false, true);
    k::bmm_omp(a.data(), b.data(), cp.data(), batch, m, kk, n, false, true);
    CHECK(std::memcmp(cs.data(), cp.data(), sizeof(double) * cs.size()) == 0);
  }
  SUBCASE("softmax forward and backward") {
    const std::size_t rows = 41, n = 19;
    auto x = rand_vec(rng, rows * n, -5, 5);
    std::vector<double> ys(rows * n), yp(rows * n);
    k::softmax_rows_serial(x.data(), ys.data(), rows, n);
    k::softmax_rows_omp(x.data(), yp.data(), rows, n);
    CHECK(std::memcmp(ys.data(), yp.data(), sizeof(double) * ys.size()) == 0);

    auto dy = rand_vec(rng, rows * n);
    std::vector<double> dxs(rows * n, 0.0), dxp(rows * n, 0.0);
    k::softmax_rows_backward_serial(ys.data(), dy.data(), dxs.data(), rows, n);
    k::softmax_rows_backward_omp(ys.data(), dy.data(), dxp.data(), rows, n);
    CHECK(std::memcmp(dxs.data(), dxp.data(), sizeof(double) * dxs.size()) == 0);
  }
  SUBCASE("layernorm forward and backward") {
    const std::size_t rows = 23, n = 16;
    auto x = rand_vec(rng, rows * n);
    auto gamma = rand_vec(rng, n, 0.5, 1.5);
    auto beta = rand_vec(rng, n);
    std::vector<double> ys(rows * n), yp(rows * n), ms(rows), mp(rows), rs(rows), rp(rows);
    k::layernorm_rows_serial(x.data(), gamma.data(), beta.data(), ys.data(), ms.data(),
                             rs.data(), rows, n, 1e-5);
    k::layernorm_rows_omp(x.data(), gamma.data(), beta.data(), yp.data(), mp.data(), rp.data(),
                          rows, n, 1e-5);
    CHECK(std::memcmp(ys.data(), yp.data(), sizeof(double) * ys.size()) == 0);
    CHECK(std::memcmp(ms.data(), mp.data(), sizeof(double) * ms.size()) == 0);

    auto dy = rand_vec(rng, rows * n);
    std::vector<double> dxs(rows * n, 0.0), dxp(rows * n, 0.0);
    k::layernorm_rows_backward_serial(x.data(), gamma.data(), dy.data(), ms.data(), rs.data(),
                                      dxs.data(), rows, n);
    k::layernorm_rows_backward_omp(x.data(), gamma.data(), dy.data(), mp.data(), rp.data(),
                                   dxp.data(), rows, n);
    CHECK(std::memcmp(dxs.data(), dxp.data(), sizeof(double) * dxs.size()) == 0);
  }
  SUBCASE("gelu forward and backward") {
    const std::size_t n = 10007;
    auto x = rand_vec(rng, n, -4, 4);
    std::vector<double> ys(n), yp(n);
    k::gelu_serial(x.data(), ys.data(), n);
    k::gelu_omp(x.data(), yp.data(), n);
    CHECK(std::memcmp(ys.data(), yp.data(), sizeof(double) * ys.size()) == 0);

    auto dy = rand_vec(rng, n);
    std::vector<double> dxs(n, 0.0), dxp(n, 0.0);
    k::gelu_backward_serial(x.data(), dy.data(), dxs.data(), n);
    k::gelu_backward_omp(x.data(), dy.data(), dxp.data(), n);
    CHECK(std::memcmp(dxs.data(), dxp.data(), sizeof(double) * dxs.size()) == 0);
  }

  k::set_threads(saved);
}

TEST_CASE("softmax backward fault hook perturbs the kernel") {
  Rng rng(6);
  const std::size_t rows = 3, n = 5;
  auto x = rand_vec(rng, rows * n), dy = rand_vec(rng, rows * n);
  std::vector<double> y(rows * n);
  k::softmax_rows(x.data(), y.data(), rows, n);

  std::vector<double> clean(rows * n, 0.0), faulty(rows * n, 0.0);
  k::softmax_rows_backward(y.data(), dy.data(), clean.data(), rows, n);
  k::softmax_backward_fault_scale = 2.0;
  k::softmax_rows_backward(y.data(), dy.data(), faulty.data(), rows, n);
  k::softmax_backward_fault_scale = 1.0;

  bool differs = false;
  for (std::size_t i = 0; i < clean.size(); ++i) differs = differs || clean[i] != faulty[i];
  CHECK(differs);
  // scale 1.0 must be a perfect no-op
  std::vector<double> again(rows * n, 0.0);
  k::softmax_rows_backward(y.data(), dy.data(), again.data(), rows, n);
  CHECK(std::memcmp(clean.data(), again.data(), sizeof(double) * clean.size()) == 0);
}
