#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fftat/kernels.hpp"
#include "fftat/rng.hpp"

// Serial reference vs OpenMP kernels: wall time, speedup, and a bitwise
// output comparison (the parallel variants must be exact, not just close).

namespace {

using fftat::Rng;
namespace k = fftat::kernels;

std::vector<float> rand_vec(Rng& rng, std::size_t n, float lo = -1.f, float hi = 1.f) {
  std::vector<float> v(n);
  for (auto& x : v) x = float(rng.uniform(lo, hi));
  return v;
}

double time_ms(const std::function<void()>& f, int reps) {
  f();  // warm caches and the OpenMP pool
  using clock = std::chrono::steady_clock;
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = clock::now();
    f();
    const auto t1 = clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

struct Case {
  std::string name;
  std::size_t out_elems;
  std::function<void(float*)> serial;
  std::function<void(float*)> parallel;
  double flops = 0;  // per invocation, 0 if not meaningful
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs OpenMP kernel benchmark"};
  int reps = 5;
  int threads = 0;
  app.add_option("--reps", reps, "timed repetitions, best-of")->capture_default_str();
  app.add_option("--threads", threads, "worker cap, 0 = hardware")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  if (threads > 0) k::set_threads(threads);

  Rng rng(42);
  std::vector<Case> cases;

  {  // square matmul
    const std::size_t m = 256, kk = 256, n = 256;
    auto a = rand_vec(rng, m * kk), b = rand_vec(rng, kk * n);
    cases.push_back({"matmul 256^3", m * n,
                     [=](float* c) { k::matmul_serial(a.data(), b.data(), c, m, kk, n); },
                     [=](float* c) { k::matmul_omp(a.data(), b.data(), c, m, kk, n); },
                     2.0 * double(m) * double(kk) * double(n)});
  }
  {  // patch-embedding shape: many short rows into a thin output
    const std::size_t m = 544, kk = 192, n = 64;
    auto a = rand_vec(rng, m * kk), b = rand_vec(rng, kk * n);
    cases.push_back({"matmul 544x192x64", m * n,
                     [=](float* c) { k::matmul_serial(a.data(), b.data(), c, m, kk, n); },
                     [=](float* c) { k::matmul_omp(a.data(), b.data(), c, m, kk, n); },
                     2.0 * double(m) * double(kk) * double(n)});
  }
  {  // attention-shaped batched matmul
    const std::size_t batch = 128, m = 17, kk = 16, n = 17;
    auto a = rand_vec(rng, batch * m * kk), b = rand_vec(rng, batch * n * kk);
    cases.push_back(
        {"bmm 128x17x16x17^T", batch * m * n,
         [=](float* c) { k::bmm_serial(a.data(), b.data(), c, batch, m, kk, n, false, true); },
         [=](float* c) { k::bmm_omp(a.data(), b.data(), c, batch, m, kk, n, false, true); },
         2.0 * double(batch) * double(m) * double(kk) * double(n)});
  }
  {  // softmax forward
    const std::size_t rows = 16384, n = 64;
    auto x = rand_vec(rng, rows * n, -4.f, 4.f);
    cases.push_back({"softmax 16384x64", rows * n,
                     [=](float* y) { k::softmax_rows_serial(x.data(), y, rows, n); },
                     [=](float* y) { k::softmax_rows_omp(x.data(), y, rows, n); }});
  }
  {  // softmax backward (accumulating, so zero first)
    const std::size_t rows = 16384, n = 64;
    auto x = rand_vec(rng, rows * n, -4.f, 4.f);
    std::vector<float> y(rows * n);
    k::softmax_rows_serial(x.data(), y.data(), rows, n);
    auto dy = rand_vec(rng, rows * n);
    cases.push_back({"softmax bwd 16384x64", rows * n,
                     [=](float* dx) {
                       std::memset(dx, 0, rows * n * sizeof(float));
                       k::softmax_rows_backward_serial(y.data(), dy.data(), dx, rows, n);
                     },
                     [=](float* dx) {
                       std::memset(dx, 0, rows * n * sizeof(float));
                       k::softmax_rows_backward_omp(y.data(), dy.data(), dx, rows, n);
                     }});
  }
  {  // layer norm forward (mean/rstd stashes per variant)
    const std::size_t rows = 16384, n = 64;
    auto x = rand_vec(rng, rows * n);
    auto g = rand_vec(rng, n, 0.5f, 1.5f);
    auto b = rand_vec(rng, n);
    auto mean = std::make_shared<std::vector<float>>(rows);
    auto rstd = std::make_shared<std::vector<float>>(rows);
    cases.push_back({"layernorm 16384x64", rows * n,
                     [=](float* y) {
                       k::layernorm_rows_serial(x.data(), g.data(), b.data(), y, mean->data(),
                                                rstd->data(), rows, n, 1e-5f);
                     },
                     [=](float* y) {
                       k::layernorm_rows_omp(x.data(), g.data(), b.data(), y, mean->data(),
                                             rstd->data(), rows, n, 1e-5f);
                     }});
  }
  {  // gelu forward
    const std::size_t n = std::size_t(1) << 22;
    auto x = rand_vec(rng, n, -3.f, 3.f);
    cases.push_back({"gelu 4M", n, [=](float* y) { k::gelu_serial(x.data(), y, n); },
                     [=](float* y) { k::gelu_omp(x.data(), y, n); }});
  }

  std::printf("threads: %d\n", k::threads());
  std::printf("%-22s %12s %12s %9s %10s  %s\n", "kernel", "serial ms", "omp ms", "speedup",
              "GFLOP/s", "bitwise");
  bool all_match = true;
  for (const auto& c : cases) {
    std::vector<float> out_s(c.out_elems), out_p(c.out_elems);
    const double ser = time_ms([&] { c.serial(out_s.data()); }, reps);
    const double par = time_ms([&] { c.parallel(out_p.data()); }, reps);
    const bool match =
        std::memcmp(out_s.data(), out_p.data(), c.out_elems * sizeof(float)) == 0;
    all_match = all_match && match;
    char gflops[32] = "-";
    if (c.flops > 0) std::snprintf(gflops, sizeof gflops, "%.2f", c.flops / (ser * 1e6));
    std::printf("%-22s %12.3f %12.3f %9.2f %10s  %s\n", c.name.c_str(), ser, par, ser / par,
                gflops, match ? "yes" : "NO");
  }
  if (!all_match) {
    std::printf("mismatch: parallel kernels must be bitwise equal to serial\n");
    return 1;
  }
  return 0;
}
