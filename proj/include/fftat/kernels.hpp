#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <omp.h>

namespace fftat::kernels {

// Every parallel kernel assigns each output element to exactly one
// iteration and keeps the per-element arithmetic identical to the serial
// reference, so parallel and serial results are bitwise equal and runs are
// reproducible for any thread count. The serial variants are kept both as
// the test oracle and as the small-size fast path.

inline int& thread_cap() {
  static int cap = 0;  // 0 = use the OpenMP default
  return cap;
}

inline void set_threads(int n) { thread_cap() = n; }

inline int threads() {
  int cap = thread_cap();
  int hw = omp_get_max_threads();
  return cap > 0 && cap < hw ? cap : hw;
}

// work below this many flops is not worth a fork/join
inline constexpr std::size_t kParallelCutoff = 1u << 15;

inline bool use_parallel(std::size_t work) {
  return threads() > 1 && work >= kParallelCutoff;
}

// ---------------------------------------------------------------------------
// matmul: C[m x n] = A[m x k] * B[k x n], row-major, ikj order.
// The j-loop is vectorizable without reassociation: each C[i][j] accumulates
// over p in a fixed order.

template <typename T>
void matmul_serial(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] = T(0);
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

template <typename T>
void matmul_omp(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for num_threads(threads()) schedule(static)
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] = T(0);
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

template <typename T>
void matmul(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  if (use_parallel(m * k * n))
    matmul_omp(a, b, c, m, k, n);
  else
    matmul_serial(a, b, c, m, k, n);
}

template <typename T>
void transpose(const T* a, T* at, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) at[j * m + i] = a[i * n + j];
}

// ---------------------------------------------------------------------------
// bmm: per-batch C[b] = opA(A[b]) * opB(B[b]) with optional transposes.
// A is batch x (ta ? k x m : m x k), B is batch x (tb ? n x k : k x n).
// Used for attention score/value products where m, n, k are tiny, so the
// transposed variants use direct dot loops rather than scratch transposes.

template <typename T>
void bmm_item(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
              bool ta, bool tb) {
  if (!ta && !tb) {
    matmul_serial(a, b, c, m, k, n);
    return;
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T s = T(0);
      for (std::size_t p = 0; p < k; ++p) {
        const T av = ta ? a[p * m + i] : a[i * k + p];
        const T bv = tb ? b[j * k + p] : b[p * n + j];
        s += av * bv;
      }
      c[i * n + j] = s;
    }
}

template <typename T>
void bmm_serial(const T* a, const T* b, T* c, std::size_t batch, std::size_t m, std::size_t k,
                std::size_t n, bool ta, bool tb) {
  for (std::size_t bi = 0; bi < batch; ++bi)
    bmm_item(a + bi * m * k, b + bi * k * n, c + bi * m * n, m, k, n, ta, tb);
}

template <typename T>
void bmm_omp(const T* a, const T* b, T* c, std::size_t batch, std::size_t m, std::size_t k,
             std::size_t n, bool ta, bool tb) {
#pragma omp parallel for num_threads(threads()) schedule(static)
  for (std::size_t bi = 0; bi < batch; ++bi)
    bmm_item(a + bi * m * k, b + bi * k * n, c + bi * m * n, m, k, n, ta, tb);
}

template <typename T>
void bmm(const T* a, const T* b, T* c, std::size_t batch, std::size_t m, std::size_t k,
         std::size_t n, bool ta, bool tb) {
  if (use_parallel(batch * m * k * n))
    bmm_omp(a, b, c, batch, m, k, n, ta, tb);
  else
    bmm_serial(a, b, c, batch, m, k, n, ta, tb);
}

// ---------------------------------------------------------------------------
// softmax over the last axis; max-shifted for stability

template <typename T>
void softmax_row(const T* x, T* y, std::size_t n) {
  T mx = x[0];
  for (std::size_t j = 1; j < n; ++j)
    if (x[j] > mx) mx = x[j];
  T sum = T(0);
  for (std::size_t j = 0; j < n; ++j) {
    y[j] = std::exp(x[j] - mx);
    sum += y[j];
  }
  const T inv = T(1) / sum;
  for (std::size_t j = 0; j < n; ++j) y[j] *= inv;
}

template <typename T>
void softmax_rows_serial(const T* x, T* y, std::size_t rows, std::size_t n) {
  for (std::size_t i = 0; i < rows; ++i) softmax_row(x + i * n, y + i * n, n);
}

template <typename T>
void softmax_rows_omp(const T* x, T* y, std::size_t rows, std::size_t n) {
#pragma omp parallel for num_threads(threads()) schedule(static)
  for (std::size_t i = 0; i < rows; ++i) softmax_row(x + i * n, y + i * n, n);
}

template <typename T>
void softmax_rows(const T* x, T* y, std::size_t rows, std::size_t n) {
  if (use_parallel(rows * n * 8))
    softmax_rows_omp(x, y, rows, n);
  else
    softmax_rows_serial(x, y, rows, n);
}

// Test fixture: scales the softmax backward output. 1.0 in normal operation
// (multiplying by 1.0 is exact, so the hot path is unaffected); the gradient
// checker flips it to prove it catches a corrupted kernel.
inline double softmax_backward_fault_scale = 1.0;

// dx = y * (dy - sum(dy * y)) per row
template <typename T>
void softmax_backward_row(const T* y, const T* dy, T* dx, std::size_t n) {
  const T fault = T(softmax_backward_fault_scale);
  T dot = T(0);
  for (std::size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
  for (std::size_t j = 0; j < n; ++j) dx[j] += fault * y[j] * (dy[j] - dot);
}

template <typename T>
void softmax_rows_backward_serial(const T* y, const T* dy, T* dx, std::size_t rows,
                                  std::size_t n) {
  for (std::size_t i = 0; i < rows; ++i)
    softmax_backward_row(y + i * n, dy + i * n, dx + i * n, n);
}

template <typename T>
void softmax_rows_backward_omp(const T* y, const T* dy, T* dx, std::size_t rows, std::size_t n) {
#pragma omp parallel for num_threads(threads()) schedule(static)
  for (std::size_t i = 0; i < rows; ++i)
    softmax_backward_row(y + i * n, dy + i * n, dx + i * n, n);
}

template <typename T>
void softmax_rows_backward(const T* y, const T* dy, T* dx, std::size_t rows, std::size_t n) {
  if (use_parallel(rows * n * 8))
    softmax_rows_backward_omp(y, dy, dx, rows, n);
  else
    softmax_rows_backward_serial(y, dy, dx, rows, n);
}

// ---------------------------------------------------------------------------
// layer norm over the last axis; mean/rstd are stashed per row for backward

template <typename T>
void layernorm_row(const T* x, const T* gamma, const T* beta, T* y, T* mean, T* rstd,
                   std::size_t n, T eps) {
  T mu = T(0);
  for (std::size_t j = 0; j < n; ++j) mu += x[j];
  mu /= T(n);
  T var = T(0);
  for (std::size_t j = 0; j < n; ++j) {
    const T d = x[j] - mu;
    var += d * d;
  }
  var /= T(n);
  const T rs = T(1) / std::sqrt(var + eps);
  for (std::size_t j = 0; j < n; ++j) y[j] = (x[j] - mu) * rs * gamma[j] + beta[j];
  *mean = mu;
  *rstd = rs;
}

template <typename T>
void layernorm_rows_serial(const T* x, const T* gamma, const T* beta, T* y, T* mean, T* rstd,
                           std::size_t rows, std::size_t n, T eps) {
  for (std::size_t i = 0; i < rows; ++i)
    layernorm_row(x + i * n, gamma, beta, y + i * n, mean + i, rstd + i, n, eps);
}

template <typename T>
void layernorm_rows_omp(const T* x, const T* gamma, const T* beta, T* y, T* mean, T* rstd,
                        std::size_t rows, std::size_t n, T eps) {
#pragma omp parallel for num_threads(threads()) schedule(static)
  for (std::size_t i = 0; i < rows; ++i)
    layernorm_row(x + i * n, gamma, beta, y + i * n, mean + i, rstd + i, n, eps);
}

template <typename T>
void layernorm_rows(const T* x, const T* gamma, const T* beta, T* y, T* mean, T* rstd,
                    std::size_t rows, std::size_t n, T eps) {
  if (use_parallel(rows * n * 8))
    layernorm_rows_omp(x, gamma, beta, y, mean, rstd, rows, n, eps);
  else
    layernorm_rows_serial(x, gamma, beta, y, mean, rstd, rows, n, eps);
}

// dx for one row; dgamma/dbeta are accumulated by the caller (they reduce
// over rows, which must stay serial for determinism)
template <typename T>
void layernorm_backward_row(const T* x, const T* gamma, const T* dy, T mean, T rstd, T* dx,
                            std::size_t n) {
  // xhat = (x - mean) * rstd; dxhat = dy * gamma
  // dx = rstd * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
  T s1 = T(0), s2 = T(0);
  for (std::size_t j = 0; j < n; ++j) {
    const T xh = (x[j] - mean) * rstd;
    const T dxh = dy[j] * gamma[j];
    s1 += dxh;
    s2 += dxh * xh;
  }
  s1 /= T(n);
  s2 /= T(n);
  for (std::size_t j = 0; j < n; ++j) {
    const T xh = (x[j] - mean) * rstd;
    const T dxh = dy[j] * gamma[j];
    dx[j] += rstd * (dxh - s1 - xh * s2);
  }
}

template <typename T>
void layernorm_rows_backward_serial(const T* x, const T* gamma, const T* dy, const T* mean,
                                    const T* rstd, T* dx, std::size_t rows, std::size_t n) {
  for (std::size_t i = 0; i < rows; ++i)
    layernorm_backward_row(x + i * n, gamma, dy + i * n, mean[i], rstd[i], dx + i * n, n);
}

template <typename T>
void layernorm_rows_backward_omp(const T* x, const T* gamma, const T* dy, const T* mean,
                                 const T* rstd, T* dx, std::size_t rows, std::size_t n) {
#pragma omp parallel for num_threads(threads()) schedule(static)
  for (std::size_t i = 0; i < rows; ++i)
    layernorm_backward_row(x + i * n, gamma, dy + i * n, mean[i], rstd[i], dx + i * n, n);
}

template <typename T>
void layernorm_rows_backward(const T* x, const T* gamma, const T* dy, const T* mean,
                             const T* rstd, T* dx, std::size_t rows, std::size_t n) {
  if (use_parallel(rows * n * 8))
    layernorm_rows_backward_omp(x, gamma, dy, mean, rstd, dx, rows, n);
  else
    layernorm_rows_backward_serial(x, gamma, dy, mean, rstd, dx, rows, n);
}

// ---------------------------------------------------------------------------
// exact GELU: x * Phi(x)

template <typename T>
T gelu_value(T x) {
  return x * T(0.5) * (T(1) + std::erf(x * T(M_SQRT1_2)));
}

// d/dx = Phi(x) + x * phi(x)
template <typename T>
T gelu_grad(T x) {
  const T phi = std::exp(T(-0.5) * x * x) * T(0.3989422804014326779);
  return T(0.5) * (T(1) + std::erf(x * T(M_SQRT1_2))) + x * phi;
}

template <typename T>
void gelu_serial(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = gelu_value(x[i]);
}

template <typename T>
void gelu_omp(const T* x, T* y, std::size_t n) {
#pragma omp parallel for num_threads(threads()) schedule(static)
  for (std::size_t i = 0; i < n; ++i) y[i] = gelu_value(x[i]);
}

template <typename T>
void gelu(const T* x, T* y, std::size_t n) {
  if (use_parallel(n * 16))
    gelu_omp(x, y, n);
  else
    gelu_serial(x, y, n);
}

template <typename T>
void gelu_backward_serial(const T* x, const T* dy, T* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * gelu_grad(x[i]);
}

template <typename T>
void gelu_backward_omp(const T* x, const T* dy, T* dx, std::size_t n) {
#pragma omp parallel for num_threads(threads()) schedule(static)
  for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * gelu_grad(x[i]);
}

template <typename T>
void gelu_backward(const T* x, const T* dy, T* dx, std::size_t n) {
  if (use_parallel(n * 16))
    gelu_backward_omp(x, dy, dx, n);
  else
    gelu_backward_serial(x, dy, dx, n);
}

}  // namespace fftat::kernels
