#pragma once

// Row-major GEMM kernels backed by Eigen. All dense products in the library
// (matmul, im2col convolutions, 1x1 convolutions) route through gemm() so
// equal problems give bit-identical results.

#ifndef EIGEN_DONT_PARALLELIZE
#define EIGEN_DONT_PARALLELIZE
#endif
#include <Eigen/Core>

namespace spin::detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Trans { kNo, kYes };

// C[m x n] (+)= op(A) * op(B), where op(A) is m x k and op(B) is k x n.
// A is stored as m x k (or k x m when transposed), likewise B.
template <typename T>
void gemm(Trans ta, Trans tb, int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
  using Map = Eigen::Map<RowMat<T>>;
  using CMap = Eigen::Map<const RowMat<T>>;
  Map C(c, m, n);
  if (!accumulate) C.setZero();
  if (ta == Trans::kNo && tb == Trans::kNo) {
    C.noalias() += CMap(a, m, k) * CMap(b, k, n);
  } else if (ta == Trans::kYes && tb == Trans::kNo) {
    C.noalias() += CMap(a, k, m).transpose() * CMap(b, k, n);
  } else if (ta == Trans::kNo && tb == Trans::kYes) {
    C.noalias() += CMap(a, m, k) * CMap(b, n, k).transpose();
  } else {
    C.noalias() += CMap(a, k, m).transpose() * CMap(b, n, k).transpose();
  }
}

}  // namespace spin::detail
