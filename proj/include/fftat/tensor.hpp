#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "fftat/common.hpp"

namespace fftat {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  if (s.empty()) return "scalar";
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out;
}

// Dense row-major tensor, rank 0..3. The numeric substrate for everything;
// f32 for training, f64 for verification runs.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), T(0)) {}
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    check(data.size() == shape_numel(shape), "tensor: data length ", data.size(),
          " does not match shape ", shape_str(shape));
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, T v) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
  }
  static Tensor scalar(T v) { return Tensor(Shape{}, {v}); }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape[i]; }

  T& at(std::size_t i) { return data[i]; }
  T at(std::size_t i) const { return data[i]; }
  T& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  T at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
  T& at(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  T at(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

// rows = product of all dims but the last; the reduction axis of softmax,
// layer norm and friends
template <typename T>
std::size_t lastdim(const Tensor<T>& t) {
  check(t.rank() >= 1, "lastdim: rank-0 tensor");
  return t.shape.back();
}

template <typename T>
std::size_t leading_rows(const Tensor<T>& t) {
  return t.numel() / lastdim(t);
}

}  // namespace fftat
