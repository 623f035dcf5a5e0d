#pragma once

#include <Eigen/Core>

namespace dseg::detail {

enum class Trans { no, yes };

/// Row-major C = op(A) * op(B) (beta == 0) or C += op(A) * op(B) (beta == 1).
/// lda/ldb/ldc are row strides of the stored (untransposed) matrices.
template <typename T>
void gemm(Trans ta, Trans tb, Eigen::Index m, Eigen::Index n, Eigen::Index k, const T* a,
          Eigen::Index lda, const T* b, Eigen::Index ldb, bool accumulate, T* c,
          Eigen::Index ldc) {
  using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Stride = Eigen::OuterStride<>;
  using ConstMap = Eigen::Map<const RowMat, Eigen::Unaligned, Stride>;
  using Map = Eigen::Map<RowMat, Eigen::Unaligned, Stride>;

  const ConstMap am(a, ta == Trans::yes ? k : m, ta == Trans::yes ? m : k, Stride(lda));
  const ConstMap bm(b, tb == Trans::yes ? n : k, tb == Trans::yes ? k : n, Stride(ldb));
  Map cm(c, m, n, Stride(ldc));

  auto run = [&](const auto& lhs, const auto& rhs) {
    if (accumulate) {
      cm.noalias() += lhs * rhs;
    } else {
      cm.noalias() = lhs * rhs;
    }
  };
  if (ta == Trans::no && tb == Trans::no) {
    run(am, bm);
  } else if (ta == Trans::yes && tb == Trans::no) {
    run(am.transpose(), bm);
  } else if (ta == Trans::no && tb == Trans::yes) {
    run(am, bm.transpose());
  } else {
    run(am.transpose(), bm.transpose());
  }
}

}  // namespace dseg::detail
