#pragma once

// Elementwise, reduction and matrix primitives.

#include <spin/gemm.hpp>
#include <spin/tensor.hpp>

namespace spin {

namespace detail {
template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
}
}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, b}, [](Node<T>& o) {
    for (auto& p : o.parents)
      if (p->requires_grad)
        for (std::size_t i = 0; i < o.grad.size(); ++i) p->grad[i] += o.grad[i];
  });
}

// Sum of any number of same-shaped tensors, accumulated left to right.
template <typename T>
Tensor<T> add_n(const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw ShapeError("add_n: no inputs");
  for (const auto& x : xs) detail::require_same_shape(xs.front(), x, "add_n");
  std::vector<T> out(xs.front().data());
  for (std::size_t k = 1; k < xs.size(); ++k)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += xs[k][i];
  return Tensor<T>::from_op(xs.front().shape(), std::move(out), xs, [](Node<T>& o) {
    for (auto& p : o.parents)
      if (p->requires_grad)
        for (std::size_t i = 0; i < o.grad.size(); ++i) p->grad[i] += o.grad[i];
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, b}, [](Node<T>& o) {
    auto& pa = *o.parents[0];
    auto& pb = *o.parents[1];
    if (pa.requires_grad)
      for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += o.grad[i];
    if (pb.requires_grad)
      for (std::size_t i = 0; i < o.grad.size(); ++i) pb.grad[i] -= o.grad[i];
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, b}, [](Node<T>& o) {
    auto& pa = *o.parents[0];
    auto& pb = *o.parents[1];
    if (pa.requires_grad)
      for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += o.grad[i] * pb.data[i];
    if (pb.requires_grad)
      for (std::size_t i = 0; i < o.grad.size(); ++i) pb.grad[i] += o.grad[i] * pa.data[i];
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
  return Tensor<T>::from_op(a.shape(), std::move(out), {a}, [s](Node<T>& o) {
    auto& pa = *o.parents[0];
    for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += o.grad[i] * s;
  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + s;
  return Tensor<T>::from_op(a.shape(), std::move(out), {a}, [](Node<T>& o) {
    auto& pa = *o.parents[0];
    for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += o.grad[i];
  });
}

// Scalar quotient a / b of two single-element tensors.
template <typename T>
Tensor<T> div_scalar(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.numel() != 1 || b.numel() != 1) throw ShapeError("div_scalar: operands must be scalars");
  return Tensor<T>::from_op({1}, {a[0] / b[0]}, {a, b}, [](Node<T>& o) {
    auto& pa = *o.parents[0];
    auto& pb = *o.parents[1];
    const T g = o.grad[0];
    if (pa.requires_grad) pa.grad[0] += g / pb.data[0];
    if (pb.requires_grad) pb.grad[0] -= g * pa.data[0] / (pb.data[0] * pb.data[0]);
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] > T(0) ? a[i] : T(0);
  if (detail::branch_hash())
    for (std::size_t i = 0; i < out.size(); ++i) detail::record_branch(a[i] > T(0) ? 2 * i + 1 : 2 * i);
  return Tensor<T>::from_op(a.shape(), std::move(out), {a}, [](Node<T>& o) {
    auto& pa = *o.parents[0];
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      if (pa.data[i] > T(0)) pa.grad[i] += o.grad[i];
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T x = a[i];
    out[i] = x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
  }
  return Tensor<T>::from_op(a.shape(), std::move(out), {a}, [](Node<T>& o) {
    auto& pa = *o.parents[0];
    for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += o.grad[i] * o.data[i] * (T(1) - o.data[i]);
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = T(0);
  for (T v : a.data()) s += v;
  return Tensor<T>::from_op({1}, {s}, {a}, [](Node<T>& o) {
    auto& pa = *o.parents[0];
    for (auto& g : pa.grad) g += o.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

// Sum of products with a constant weight tensor: sum_i a[i] * w[i].
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& a, const std::vector<T>& w) {
  if (w.size() != a.numel()) throw ShapeError("weighted_sum: weight length mismatch");
  T s = T(0);
  for (std::size_t i = 0; i < w.size(); ++i) s += a[i] * w[i];
  return Tensor<T>::from_op({1}, {s}, {a}, [w](Node<T>& o) {
    auto& pa = *o.parents[0];
    for (std::size_t i = 0; i < w.size(); ++i) pa.grad[i] += o.grad[0] * w[i];
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.numel())
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  return Tensor<T>::from_op(std::move(shape), a.data(), {a}, [](Node<T>& o) {
    auto& pa = *o.parents[0];
    for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += o.grad[i];
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected a matrix, got " + to_string(a.shape()));
  const int r = a.dim(0), c = a.dim(1);
  std::vector<T> out(a.numel());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(j) * r + i] = a[static_cast<std::size_t>(i) * c + j];
  return Tensor<T>::from_op({c, r}, std::move(out), {a}, [r, c](Node<T>& o) {
    auto& pa = *o.parents[0];
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        pa.grad[static_cast<std::size_t>(i) * c + j] += o.grad[static_cast<std::size_t>(j) * r + i];
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(static_cast<std::size_t>(m) * n);
  detail::gemm<T>(detail::Trans::kNo, detail::Trans::kNo, m, n, k, a.ptr(), b.ptr(), out.data(), false);
  return Tensor<T>::from_op({m, n}, std::move(out), {a, b}, [m, k, n](Node<T>& o) {
    auto& pa = *o.parents[0];
    auto& pb = *o.parents[1];
    using detail::Trans;
    if (pa.requires_grad)
      detail::gemm<T>(Trans::kNo, Trans::kYes, m, k, n, o.grad.data(), pb.data.data(), pa.grad.data(), true);
    if (pb.requires_grad)
      detail::gemm<T>(Trans::kYes, Trans::kNo, k, n, m, pa.data.data(), o.grad.data(), pb.grad.data(), true);
  });
}

// Row-wise softmax of a matrix with max subtraction.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
  if (a.rank() != 2) throw ShapeError("softmax_rows: expected a matrix, got " + to_string(a.shape()));
  const int r = a.dim(0), c = a.dim(1);
  std::vector<T> out(a.numel());
  for (int i = 0; i < r; ++i) {
    const T* x = a.ptr() + static_cast<std::size_t>(i) * c;
    T* y = out.data() + static_cast<std::size_t>(i) * c;
    const T mx = *std::max_element(x, x + c);
    T s = T(0);
    for (int j = 0; j < c; ++j) s += (y[j] = std::exp(x[j] - mx));
    for (int j = 0; j < c; ++j) y[j] /= s;
  }
  return Tensor<T>::from_op(a.shape(), std::move(out), {a}, [r, c](Node<T>& o) {
    auto& pa = *o.parents[0];
    for (int i = 0; i < r; ++i) {
      const std::size_t off = static_cast<std::size_t>(i) * c;
      T dot = T(0);
      for (int j = 0; j < c; ++j) dot += o.grad[off + j] * o.data[off + j];
      for (int j = 0; j < c; ++j) pa.grad[off + j] += o.data[off + j] * (o.grad[off + j] - dot);
    }
  });
}

// diag(v) * A for A of shape m x n and v of length m.
template <typename T>
Tensor<T> scale_rows(const Tensor<T>& a, const Tensor<T>& v) {
  if (a.rank() != 2 || v.numel() != static_cast<std::size_t>(a.dim(0)))
    throw ShapeError("scale_rows: " + to_string(a.shape()) + " vs scale " + to_string(v.shape()));
  const int m = a.dim(0), n = a.dim(1);
  std::vector<T> out(a.numel());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i) * n + j] = a[static_cast<std::size_t>(i) * n + j] * v[i];
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, v}, [m, n](Node<T>& o) {
    auto& pa = *o.parents[0];
    auto& pv = *o.parents[1];
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        const std::size_t k = static_cast<std::size_t>(i) * n + j;
        if (pa.requires_grad) pa.grad[k] += o.grad[k] * pv.data[i];
        if (pv.requires_grad) pv.grad[i] += o.grad[k] * pa.data[k];
      }
  });
}

// Adds a per-column bias b (length n) to every row of A (m x n).
template <typename T>
Tensor<T> add_row_bias(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.numel() != static_cast<std::size_t>(a.dim(1)))
    throw ShapeError("add_row_bias: " + to_string(a.shape()) + " vs bias " + to_string(b.shape()));
  const int m = a.dim(0), n = a.dim(1);
  std::vector<T> out(a.data());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i) * n + j] += b[j];
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, b}, [m, n](Node<T>& o) {
    auto& pa = *o.parents[0];
    auto& pb = *o.parents[1];
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        const std::size_t k = static_cast<std::size_t>(i) * n + j;
        if (pa.requires_grad) pa.grad[k] += o.grad[k];
        if (pb.requires_grad) pb.grad[j] += o.grad[k];
      }
  });
}

// x[index] along the leading axis.
template <typename T>
Tensor<T> select(const Tensor<T>& x, int index) {
  if (x.rank() < 2 || index < 0 || index >= x.dim(0))
    throw ShapeError("select: index " + std::to_string(index) + " out of range for " + to_string(x.shape()));
  Shape s(x.shape().begin() + 1, x.shape().end());
  const std::size_t n = numel(s);
  const std::size_t off = n * static_cast<std::size_t>(index);
  std::vector<T> out(x.data().begin() + static_cast<std::ptrdiff_t>(off),
                     x.data().begin() + static_cast<std::ptrdiff_t>(off + n));
  return Tensor<T>::from_op(std::move(s), std::move(out), {x}, [off, n](Node<T>& o) {
    auto& px = *o.parents[0];
    for (std::size_t i = 0; i < n; ++i) px.grad[off + i] += o.grad[i];
  });
}

// Stacks same-shaped tensors along a new leading axis.
template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw ShapeError("stack: no inputs");
  for (const auto& x : xs) detail::require_same_shape(xs.front(), x, "stack");
  Shape s{static_cast<int>(xs.size())};
  s.insert(s.end(), xs.front().shape().begin(), xs.front().shape().end());
  const std::size_t n = xs.front().numel();
  std::vector<T> out;
  out.reserve(n * xs.size());
  for (const auto& x : xs) out.insert(out.end(), x.data().begin(), x.data().end());
  return Tensor<T>::from_op(std::move(s), std::move(out), xs, [n](Node<T>& o) {
    for (std::size_t k = 0; k < o.parents.size(); ++k) {
      auto& p = *o.parents[k];
      if (!p.requires_grad) continue;
      for (std::size_t i = 0; i < n; ++i) p.grad[i] += o.grad[k * n + i];
    }
  });
}

}  // namespace spin
