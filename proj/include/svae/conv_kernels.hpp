#pragma once

#include <cstdint>

namespace svae::kernels {

// Low-level dense kernels behind conv2d and conv2d_transposed. All matrices
// are row-major. Reduction order is part of the contract: every C element is
// produced by a single accumulation chain running over k (or the marked lane
// pattern for the NT variant), so results are bitwise reproducible and
// appending zero columns to A / zero rows to B leaves C exactly unchanged.

// C[M x N] = (or +=) A[M x K] * B[K x N], k ascending per element.
void gemm_nn(int M, int N, int K, const double* A, int lda, const double* B, int ldb,
             double* C, int ldc, bool accumulate);

// C[M x N] = (or +=) A[M x K] * B^T with B stored [N x K]. Each element is a
// dot product of two rows, accumulated in 8 fixed lanes combined in a fixed
// tree, then the remainder tail.
void gemm_nt(int M, int N, int K, const double* A, int lda, const double* B, int ldb,
             double* C, int ldc, bool accumulate);

void transpose(int M, int N, const double* A, int lda, double* AT, int ldat);

// im2col for one image: im [C,H,W] -> col [(C*k*k) x (OH*OW)] with
// row index (c*k + kh)*k + kw and ih = oh*stride - pad + kh. Out-of-range
// taps are zero.
void im2col(const double* im, int C, int H, int W, int k, int stride, int pad,
            int OH, int OW, double* col);

// Adjoint scatter: im[c,ih,iw] += col entries. Accumulation order per image
// element is fixed (kh, kw, oh, ow); parallelism is over channels only.
void col2im_add(const double* col, int C, int H, int W, int k, int stride, int pad,
                int OH, int OW, double* im);

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

inline int conv_transposed_out_dim(int in, int k, int stride, int pad, int out_pad) {
  return (in - 1) * stride - 2 * pad + k + out_pad;
}

}  // namespace svae::kernels
