#pragma once

#include <cstddef>

namespace bayescope::kernels {

/// Worker cap for the OpenMP kernels, clamped by the BAYESCOPE_THREADS
/// environment variable when set. 1 selects the serial path.
int max_threads();
void set_max_threads(int n);

// Dense kernels. Each has a `_serial` reference implementation and an
// OpenMP-scheduled variant with identical loop bodies; threads own disjoint
// output elements and accumulate in the same order, so the two produce
// bitwise-identical results for any thread count. The unsuffixed names
// dispatch on max_threads(). All buffers are row-major.
//
// `accumulate` adds into the output instead of overwriting (used by the
// backward pass, whose gradient buffers start zeroed).

// c[m,n] = op(a) * op(b); ta/tb read a/b transposed (a stored [k,m], b [n,k]).
void matmul_serial(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n, bool ta, bool tb, bool accumulate);
void matmul_omp(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                std::size_t n, bool ta, bool tb, bool accumulate, int threads);
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool ta = false, bool tb = false, bool accumulate = false);

// Valid (no padding) 2-D convolution: x[h,w,ci], kern[kh,kw,ci,co] -> y[oh,ow,co]
// with oh = (h-kh)/stride + 1, ow = (w-kw)/stride + 1.
void conv2d_serial(const double* x, const double* kern, double* y, std::size_t h, std::size_t w,
                   std::size_t ci, std::size_t kh, std::size_t kw, std::size_t co,
                   std::size_t stride, bool accumulate);
void conv2d_omp(const double* x, const double* kern, double* y, std::size_t h, std::size_t w,
                std::size_t ci, std::size_t kh, std::size_t kw, std::size_t co,
                std::size_t stride, bool accumulate, int threads);
void conv2d(const double* x, const double* kern, double* y, std::size_t h, std::size_t w,
            std::size_t ci, std::size_t kh, std::size_t kw, std::size_t co, std::size_t stride,
            bool accumulate = false);

// Gradient w.r.t. the kernel: gk[kh,kw,ci,co] (+)= sum over output positions.
void conv2d_grad_kernel_serial(const double* x, const double* gy, double* gk, std::size_t h,
                               std::size_t w, std::size_t ci, std::size_t kh, std::size_t kw,
                               std::size_t co, std::size_t stride, bool accumulate);
void conv2d_grad_kernel_omp(const double* x, const double* gy, double* gk, std::size_t h,
                            std::size_t w, std::size_t ci, std::size_t kh, std::size_t kw,
                            std::size_t co, std::size_t stride, bool accumulate, int threads);
void conv2d_grad_kernel(const double* x, const double* gy, double* gk, std::size_t h,
                        std::size_t w, std::size_t ci, std::size_t kh, std::size_t kw,
                        std::size_t co, std::size_t stride, bool accumulate = false);

// Gradient w.r.t. the input, gather form: each input pixel sums the kernel
// taps that map it to a valid output position.
void conv2d_grad_input_serial(const double* kern, const double* gy, double* gx, std::size_t h,
                              std::size_t w, std::size_t ci, std::size_t kh, std::size_t kw,
                              std::size_t co, std::size_t stride, bool accumulate);
void conv2d_grad_input_omp(const double* kern, const double* gy, double* gx, std::size_t h,
                           std::size_t w, std::size_t ci, std::size_t kh, std::size_t kw,
                           std::size_t co, std::size_t stride, bool accumulate, int threads);
void conv2d_grad_input(const double* kern, const double* gy, double* gx, std::size_t h,
                       std::size_t w, std::size_t ci, std::size_t kh, std::size_t kw,
                       std::size_t co, std::size_t stride, bool accumulate = false);

// Non-overlapping mean pooling, floor semantics (trailing rows/cols that do
// not fill a window are dropped): x[h,w,c] -> y[h/win, w/win, c].
void avg_pool2d(const double* x, double* y, std::size_t h, std::size_t w, std::size_t c,
                std::size_t win);
void avg_pool2d_grad(const double* gy, double* gx, std::size_t h, std::size_t w, std::size_t c,
                     std::size_t win, bool accumulate = false);

}  // namespace bayescope::kernels
