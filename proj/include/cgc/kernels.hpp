#pragma once

#include <cstdint>

namespace cgc::kernels {

/// Caps the OpenMP thread count used by the kernels below. 1 forces
/// single-threaded execution (the CLI's --deterministic mode), 0 restores
/// the hardware default. Every kernel assigns each output element to
/// exactly one iteration and accumulates in a fixed order, so results are
/// bit-identical across thread counts either way; the cap exists so that
/// deterministic mode means what it says.
void set_max_threads(int n);
int max_threads();

struct Conv2dDims {
  int64_t n, c, h, w;    // input  [n, c, h, w]
  int64_t f, kh, kw;     // kernel [f, c, kh, kw]
  int64_t stride, pad;
  int64_t oh, ow;        // output [n, f, oh, ow]
};

// Cross-correlation with zero padding.
void conv2d_forward(const double* x, const double* k, double* y, const Conv2dDims& d);
// Adjoint of conv2d_forward in its first argument: gx[n,c,h,w] from g[n,f,oh,ow].
void conv2d_grad_input(const double* g, const double* k, double* gx, const Conv2dDims& d);
// Adjoint in the kernel argument: gk[f,c,kh,kw] from x and g.
void conv2d_grad_kernel(const double* x, const double* g, double* gk, const Conv2dDims& d);

// c[m,n] = a[m,k] * b[k,n]
void matmul(const double* a, const double* b, double* c,
            int64_t m, int64_t k, int64_t n);

// Pooling over the last two dims of a [lead, h, w] tensor, no padding.
void pool_avg_forward(const double* x, double* y, int64_t lead, int64_t h, int64_t w,
                      int64_t win, int64_t stride, int64_t oh, int64_t ow);
void pool_avg_adjoint(const double* g, double* gx, int64_t lead, int64_t h, int64_t w,
                      int64_t win, int64_t stride, int64_t oh, int64_t ow);
// argmax receives, per output element, the flat index into x of the first
// (raster-order) maximal element of its window.
void pool_max_forward(const double* x, double* y, int64_t* argmax, int64_t lead,
                      int64_t h, int64_t w, int64_t win, int64_t stride,
                      int64_t oh, int64_t ow);

// Corner-aligned bilinear interpolation over the last two dims of a
// [lead, ih, iw] tensor. Source corners map exactly onto target corners;
// a target dimension of 1 samples the source origin.
void resize_bilinear_forward(const double* x, double* y, int64_t lead,
                             int64_t ih, int64_t iw, int64_t oh, int64_t ow);
void resize_bilinear_adjoint(const double* g, double* gx, int64_t lead,
                             int64_t ih, int64_t iw, int64_t oh, int64_t ow);

/// Serial reference implementations. Written as the plainest possible loop
/// nests and kept for the kernel equivalence tests and the benchmark.
namespace ref {
void conv2d_forward(const double* x, const double* k, double* y, const Conv2dDims& d);
void conv2d_grad_input(const double* g, const double* k, double* gx, const Conv2dDims& d);
void conv2d_grad_kernel(const double* x, const double* g, double* gk, const Conv2dDims& d);
void matmul(const double* a, const double* b, double* c,
            int64_t m, int64_t k, int64_t n);
void pool_avg_forward(const double* x, double* y, int64_t lead, int64_t h, int64_t w,
                      int64_t win, int64_t stride, int64_t oh, int64_t ow);
void pool_avg_adjoint(const double* g, double* gx, int64_t lead, int64_t h, int64_t w,
                      int64_t win, int64_t stride, int64_t oh, int64_t ow);
void pool_max_forward(const double* x, double* y, int64_t* argmax, int64_t lead,
                      int64_t h, int64_t w, int64_t win, int64_t stride,
                      int64_t oh, int64_t ow);
void resize_bilinear_forward(const double* x, double* y, int64_t lead,
                             int64_t ih, int64_t iw, int64_t oh, int64_t ow);
void resize_bilinear_adjoint(const double* g, double* gx, int64_t lead,
                             int64_t ih, int64_t iw, int64_t oh, int64_t ow);
}  // namespace ref

}  // namespace cgc::kernels
