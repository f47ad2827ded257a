#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

// Straight-line scalar reimplementations used as independent oracles. No
// library headers on purpose: these are written directly from the math with
// plain loops, so a shared bug with the tensor path is unlikely.

namespace oracle {

using vec = std::vector<double>;

struct MhaWeights {
  // all [d*d] row-major, biases [d]; y = x W + b convention
  vec wq, bq, wk, bk, wv, bv, wo, bo;
};

enum class Mode { vanilla, graph_scaled, class_row_masked };

// One batch item: x is n tokens by d dims (token 0 = class token).
// graph_scaled multiplies raw logits by graph[i*n+j] before the 1/sqrt(dk)
// scale; class_row_masked multiplies the post-softmax class row by
// [1, scores...]. Patch rows are always plain attention.
inline vec mha(const vec& x, std::size_t n, std::size_t d, std::size_t h, const MhaWeights& w,
               Mode mode, const vec& graph = {}, const vec& scores = {}) {
  const std::size_t dk = d / h;
  auto project = [&](const vec& wm, const vec& b) {
    vec y(n * d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t o = 0; o < d; ++o) {
        double s = b[o];
        for (std::size_t c = 0; c < d; ++c) s += x[i * d + c] * wm[c * d + o];
        y[i * d + o] = s;
      }
    return y;
  };
  const vec q = project(w.wq, w.bq);
  const vec k = project(w.wk, w.bk);
  const vec v = project(w.wv, w.bv);

  vec merged(n * d, 0.0);
  for (std::size_t a = 0; a < h; ++a) {
    const std::size_t off = a * dk;
    for (std::size_t i = 0; i < n; ++i) {
      vec logits(n, 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dk; ++c) dot += q[i * d + off + c] * k[j * d + off + c];
        if (mode == Mode::graph_scaled) dot *= graph[i * n + j];
        logits[j] = dot / std::sqrt(double(dk));
      }
      double mx = logits[0];
      for (double l : logits) mx = std::max(mx, l);
      double z = 0.0;
      vec att(n, 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        att[j] = std::exp(logits[j] - mx);
        z += att[j];
      }
      for (std::size_t j = 0; j < n; ++j) att[j] /= z;
      if (mode == Mode::class_row_masked && i == 0)
        for (std::size_t j = 1; j < n; ++j) att[j] *= scores[j - 1];
      for (std::size_t c = 0; c < dk; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += att[j] * v[j * d + off + c];
        merged[i * d + off + c] = s;
      }
    }
  }

  vec out(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < d; ++o) {
      double s = w.bo[o];
      for (std::size_t c = 0; c < d; ++c) s += merged[i * d + c] * w.wo[c * d + o];
      out[i * d + o] = s;
    }
  return out;
}

// post-softmax class-row weights after masking, one head; for the
// monotonicity probe on the mask coefficients
inline vec class_row_weights(const vec& x, std::size_t n, std::size_t d, std::size_t h,
                             std::size_t head, const MhaWeights& w, const vec& scores) {
  const std::size_t dk = d / h;
  auto project_row0 = [&](const vec& wm, const vec& b, std::size_t row) {
    vec y(d, 0.0);
    for (std::size_t o = 0; o < d; ++o) {
      double s = b[o];
      for (std::size_t c = 0; c < d; ++c) s += x[row * d + c] * wm[c * d + o];
      y[o] = s;
    }
    return y;
  };
  const vec q0 = project_row0(w.wq, w.bq, 0);
  vec logits(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const vec kj = project_row0(w.wk, w.bk, j);
    double dot = 0.0;
    for (std::size_t c = 0; c < dk; ++c) dot += q0[head * dk + c] * kj[head * dk + c];
    logits[j] = dot / std::sqrt(double(dk));
  }
  double mx = logits[0];
  for (double l : logits) mx = std::max(mx, l);
  double z = 0.0;
  vec att(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    att[j] = std::exp(logits[j] - mx);
    z += att[j];
  }
  for (std::size_t j = 0; j < n; ++j) att[j] /= z;
  for (std::size_t j = 1; j < n; ++j) att[j] *= scores[j - 1];
  return att;
}

// mean over all n*p entries of binary cross-entropy against the row's domain
// (rows < n_source are source, label 1)
inline double patch_bce(const vec& probs, std::size_t n, std::size_t p, std::size_t n_source,
                        double eps) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      double c = probs[i * p + j];
      c = std::min(std::max(c, eps), 1.0 - eps);
      total += i < n_source ? -std::log(c) : -std::log(1.0 - c);
    }
  return total / double(n * p);
}

// I = H(mean of rows) - mean(H(row)), natural log
inline double mutual_info(const vec& probs, std::size_t b, std::size_t k) {
  auto entropy = [&](const double* p) {
    double h = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      if (p[j] > 0.0) h -= p[j] * std::log(p[j]);
    return h;
  };
  vec mean(k, 0.0);
  double mean_h = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < k; ++j) mean[j] += probs[i * k + j] / double(b);
    mean_h += entropy(&probs[i * k]) / double(b);
  }
  return entropy(mean.data()) - mean_h;
}

// softmax helper for building probability rows from logits in tests
inline vec softmax_rows(const vec& logits, std::size_t rows, std::size_t n) {
  vec out(rows * n, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    double mx = logits[i * n];
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, logits[i * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(logits[i * n + j] - mx);
      z += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return out;
}

}  // namespace oracle
