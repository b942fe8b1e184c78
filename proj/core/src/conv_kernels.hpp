#pragma once

// Internal convolution kernels: im2col/col2im plus a thin BLAS GEMM wrapper.
// BLAS is pinned to one thread so results are identical however many cores
// the host exposes; this file is not part of the installed API.

#include <cblas.h>

#include <cstring>
#include <mutex>
#include <vector>

extern "C" void openblas_set_num_threads(int);

namespace ecdepth::convk {

inline void pin_blas_threads() {
  static std::once_flag flag;
  std::call_once(flag, [] { openblas_set_num_threads(1); });
}

// C[m,n] (+)= A[m,k] * B[k,n], row-major; transa/transb flip A/B.
inline void gemm(int m, int n, int k, const float* a, bool transa, const float* b, bool transb,
                 float* c, bool accumulate) {
  pin_blas_threads();
  cblas_sgemm(CblasRowMajor, transa ? CblasTrans : CblasNoTrans,
              transb ? CblasTrans : CblasNoTrans, m, n, k, 1.0f, a, transa ? m : k, b,
              transb ? k : n, accumulate ? 1.0f : 0.0f, c, n);
}
inline void gemm(int m, int n, int k, const double* a, bool transa, const double* b, bool transb,
                 double* c, bool accumulate) {
  pin_blas_threads();
  cblas_dgemm(CblasRowMajor, transa ? CblasTrans : CblasNoTrans,
              transb ? CblasTrans : CblasNoTrans, m, n, k, 1.0, a, transa ? m : k, b,
              transb ? k : n, accumulate ? 1.0 : 0.0, c, n);
}

// One sample: x (Ci,H,W) -> cols (Ci*Kh*Kw, Ho*Wo), zero outside the image.
template <typename T>
void im2col(const T* x, int ci, int h, int w, int kh, int kw, int stride, int pad, int ho, int wo,
            T* cols) {
  for (int c = 0; c < ci; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        T* row = cols + ((static_cast<int64_t>(c) * kh + ky) * kw + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * stride - pad + ky;
          T* dst = row + static_cast<int64_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::memset(dst, 0, sizeof(T) * static_cast<size_t>(wo));
            continue;
          }
          const T* src = x + (static_cast<int64_t>(c) * h + iy) * w;
          int ox_lo = 0, ox_hi = wo;
          while (ox_lo < wo && ox_lo * stride - pad + kx < 0) ++ox_lo;
          while (ox_hi > ox_lo && (ox_hi - 1) * stride - pad + kx >= w) --ox_hi;
          for (int ox = 0; ox < ox_lo; ++ox) dst[ox] = T(0);
          const T* scol = src - pad + kx;
          for (int ox = ox_lo; ox < ox_hi; ++ox) dst[ox] = scol[ox * stride];
          for (int ox = ox_hi; ox < wo; ++ox) dst[ox] = T(0);
        }
      }
    }
  }
}

// Adjoint of im2col: scatter cols (Ci*Kh*Kw, Ho*Wo) back into gx (Ci,H,W).
template <typename T>
void col2im_accumulate(const T* cols, int ci, int h, int w, int kh, int kw, int stride, int pad,
                       int ho, int wo, T* gx) {
  for (int c = 0; c < ci; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const T* row = cols + ((static_cast<int64_t>(c) * kh + ky) * kw + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<int64_t>(oy) * wo;
          T* dst = gx + (static_cast<int64_t>(c) * h + iy) * w;
          int ox_lo = 0, ox_hi = wo;
          while (ox_lo < wo && ox_lo * stride - pad + kx < 0) ++ox_lo;
          while (ox_hi > ox_lo && (ox_hi - 1) * stride - pad + kx >= w) --ox_hi;
          T* dcol = dst - pad + kx;
          for (int ox = ox_lo; ox < ox_hi; ++ox) dcol[ox * stride] += src[ox];
        }
      }
    }
  }
}

}  // namespace ecdepth::convk
