#include "svae/conv_kernels.hpp"

#include <algorithm>
#include <cstring>

#include "svae/threading.hpp"

namespace svae::kernels {

namespace {

constexpr int kNT = 16;  // column tile, 2 AVX-512 vectors

// MR x kNT microkernel. acc arrays live in registers; the k loop is the only
// reduction and runs strictly ascending.
template <int MR>
inline void gemm_nn_tile(int K, const double* A, int lda, const double* B, int ldb,
                         double* C, int ldc, int n0, bool accumulate) {
  double acc[MR][kNT] = {};
  const double* a[MR];
  for (int r = 0; r < MR; ++r) a[r] = A + static_cast<size_t>(r) * lda;
  const double* brow = B + n0;
  for (int k = 0; k < K; ++k, brow += ldb) {
    double av[MR];
    for (int r = 0; r < MR; ++r) av[r] = a[r][k];
    for (int j = 0; j < kNT; ++j) {
      const double bj = brow[j];
      for (int r = 0; r < MR; ++r) acc[r][j] += av[r] * bj;
    }
  }
  for (int r = 0; r < MR; ++r) {
    double* crow = C + static_cast<size_t>(r) * ldc + n0;
    if (accumulate) {
      for (int j = 0; j < kNT; ++j) crow[j] += acc[r][j];
    } else {
      for (int j = 0; j < kNT; ++j) crow[j] = acc[r][j];
    }
  }
}

// Scalar edge: same ascending-k chain per element.
inline void gemm_nn_edge(int mb, int me, int nb, int ne, int K, const double* A, int lda,
                         const double* B, int ldb, double* C, int ldc, bool accumulate) {
  for (int m = mb; m < me; ++m) {
    const double* a = A + static_cast<size_t>(m) * lda;
    for (int n = nb; n < ne; ++n) {
      double acc = 0.0;
      const double* b = B + n;
      for (int k = 0; k < K; ++k) acc += a[k] * b[static_cast<size_t>(k) * ldb];
      double* c = C + static_cast<size_t>(m) * ldc + n;
      *c = accumulate ? *c + acc : acc;
    }
  }
}

void gemm_nn_range(int nb, int ne, int M, int K, const double* A, int lda, const double* B,
                   int ldb, double* C, int ldc, bool accumulate) {
  int n0 = nb;
  for (; n0 + kNT <= ne; n0 += kNT) {
    int m = 0;
    for (; m + 4 <= M; m += 4)
      gemm_nn_tile<4>(K, A + static_cast<size_t>(m) * lda, lda, B, ldb,
                      C + static_cast<size_t>(m) * ldc, ldc, n0, accumulate);
    for (; m < M; ++m)
      gemm_nn_tile<1>(K, A + static_cast<size_t>(m) * lda, lda, B, ldb,
                      C + static_cast<size_t>(m) * ldc, ldc, n0, accumulate);
  }
  if (n0 < ne) gemm_nn_edge(0, M, n0, ne, K, A, lda, B, ldb, C, ldc, accumulate);
}

}  // namespace

void gemm_nn(int M, int N, int K, const double* A, int lda, const double* B, int ldb,
             double* C, int ldc, bool accumulate) {
  if (M <= 0 || N <= 0) return;
  if (K <= 0) {
    if (!accumulate)
      for (int m = 0; m < M; ++m)
        std::memset(C + static_cast<size_t>(m) * ldc, 0, sizeof(double) * N);
    return;
  }
  // Split over columns; each thread owns a disjoint block of C.
  const int64_t flops_per_col = 2ll * M * K;
  const int64_t grain = std::max<int64_t>(kNT, 262144 / std::max<int64_t>(1, flops_per_col));
  threading::parallel_for(0, N, grain, [&](int64_t nb, int64_t ne) {
    gemm_nn_range(static_cast<int>(nb), static_cast<int>(ne), M, K, A, lda, B, ldb, C, ldc,
                  accumulate);
  });
}

namespace {

// Dot product of two rows with 8 fixed lanes.
inline double dot_lanes(const double* a, const double* b, int K) {
  double lane[8] = {};
  int k = 0;
  for (; k + 8 <= K; k += 8)
    for (int j = 0; j < 8; ++j) lane[j] += a[k + j] * b[k + j];
  double tail = 0.0;
  for (; k < K; ++k) tail += a[k] * b[k];
  return (((lane[0] + lane[4]) + (lane[1] + lane[5])) +
          ((lane[2] + lane[6]) + (lane[3] + lane[7]))) +
         tail;
}

// 1 row of A against 4 rows of B sharing the A loads.
inline void dot_lanes_x4(const double* a, const double* b0, const double* b1, const double* b2,
                         const double* b3, int K, double out[4]) {
  double lane[4][8] = {};
  int k = 0;
  for (; k + 8 <= K; k += 8) {
    for (int j = 0; j < 8; ++j) {
      const double av = a[k + j];
      lane[0][j] += av * b0[k + j];
      lane[1][j] += av * b1[k + j];
      lane[2][j] += av * b2[k + j];
      lane[3][j] += av * b3[k + j];
    }
  }
  double tail[4] = {};
  for (; k < K; ++k) {
    const double av = a[k];
    tail[0] += av * b0[k];
    tail[1] += av * b1[k];
    tail[2] += av * b2[k];
    tail[3] += av * b3[k];
  }
  for (int r = 0; r < 4; ++r)
    out[r] = (((lane[r][0] + lane[r][4]) + (lane[r][1] + lane[r][5])) +
              ((lane[r][2] + lane[r][6]) + (lane[r][3] + lane[r][7]))) +
             tail[r];
}

}  // namespace

void gemm_nt(int M, int N, int K, const double* A, int lda, const double* B, int ldb,
             double* C, int ldc, bool accumulate) {
  if (M <= 0 || N <= 0) return;
  const int64_t grain = std::max<int64_t>(1, 131072 / std::max<int64_t>(1, 2ll * N * K));
  threading::parallel_for(0, M, grain, [&](int64_t mb, int64_t me) {
    for (int64_t m = mb; m < me; ++m) {
      const double* a = A + static_cast<size_t>(m) * lda;
      double* crow = C + static_cast<size_t>(m) * ldc;
      int n = 0;
      for (; n + 4 <= N; n += 4) {
        const double* b = B + static_cast<size_t>(n) * ldb;
        double d[4];
        dot_lanes_x4(a, b, b + ldb, b + 2 * static_cast<size_t>(ldb),
                     b + 3 * static_cast<size_t>(ldb), K, d);
        for (int r = 0; r < 4; ++r)
          crow[n + r] = accumulate ? crow[n + r] + d[r] : d[r];
      }
      for (; n < N; ++n) {
        const double d = dot_lanes(a, B + static_cast<size_t>(n) * ldb, K);
        crow[n] = accumulate ? crow[n] + d : d;
      }
    }
  });
}

void transpose(int M, int N, const double* A, int lda, double* AT, int ldat) {
  for (int m = 0; m < M; ++m)
    for (int n = 0; n < N; ++n)
      AT[static_cast<size_t>(n) * ldat + m] = A[static_cast<size_t>(m) * lda + n];
}

void im2col(const double* im, int C, int H, int W, int k, int stride, int pad,
            int OH, int OW, double* col) {
  const int rows = C * k * k;
  const int64_t N = static_cast<int64_t>(OH) * OW;
  threading::parallel_for(0, rows, std::max<int64_t>(1, 4096 / std::max<int64_t>(1, N)),
                          [&](int64_t rb, int64_t re) {
    for (int64_t row = rb; row < re; ++row) {
      const int c = static_cast<int>(row) / (k * k);
      const int kh = (static_cast<int>(row) / k) % k;
      const int kw = static_cast<int>(row) % k;
      const double* src = im + static_cast<size_t>(c) * H * W;
      double* dst = col + static_cast<size_t>(row) * N;
      for (int oh = 0; oh < OH; ++oh) {
        const int ih = oh * stride - pad + kh;
        double* drow = dst + static_cast<size_t>(oh) * OW;
        if (ih < 0 || ih >= H) {
          std::memset(drow, 0, sizeof(double) * OW);
          continue;
        }
        const double* srow = src + static_cast<size_t>(ih) * W;
        for (int ow = 0; ow < OW; ++ow) {
          const int iw = ow * stride - pad + kw;
          drow[ow] = (iw >= 0 && iw < W) ? srow[iw] : 0.0;
        }
      }
    }
  });
}

void col2im_add(const double* col, int C, int H, int W, int k, int stride, int pad,
                int OH, int OW, double* im) {
  const int64_t N = static_cast<int64_t>(OH) * OW;
  threading::parallel_for(
      0, C, std::max<int64_t>(1, 8192 / std::max<int64_t>(1, N * k * k)),
      [&](int64_t cb, int64_t ce) {
        for (int64_t c = cb; c < ce; ++c) {
          double* dst = im + static_cast<size_t>(c) * H * W;
          for (int kh = 0; kh < k; ++kh) {
            for (int kw = 0; kw < k; ++kw) {
              const double* src =
                  col + ((static_cast<size_t>(c) * k + kh) * k + kw) * N;
              for (int oh = 0; oh < OH; ++oh) {
                const int ih = oh * stride - pad + kh;
                if (ih < 0 || ih >= H) continue;
                double* drow = dst + static_cast<size_t>(ih) * W;
                const double* srow = src + static_cast<size_t>(oh) * OW;
                for (int ow = 0; ow < OW; ++ow) {
                  const int iw = ow * stride - pad + kw;
                  if (iw >= 0 && iw < W) drow[iw] += srow[ow];
                }
              }
            }
          }
        }
      });
}

}  // namespace svae::kernels
