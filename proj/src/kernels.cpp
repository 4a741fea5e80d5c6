#include "bayescope/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>

namespace bayescope::kernels {

namespace {

int env_thread_cap() {
    const char* v = std::getenv("BAYESCOPE_THREADS");
    if (v == nullptr) return 0;
    int n = std::atoi(v);
    return n > 0 ? n : 0;
}

std::atomic<int> g_max_threads{0};  // 0: unresolved

}  // namespace

int max_threads() {
    int n = g_max_threads.load(std::memory_order_relaxed);
    if (n == 0) {
        n = omp_get_max_threads();
        if (int cap = env_thread_cap(); cap > 0) n = std::min(n, cap);
        n = std::max(n, 1);
        g_max_threads.store(n, std::memory_order_relaxed);
    }
    return n;
}

void set_max_threads(int n) { g_max_threads.store(std::max(n, 1), std::memory_order_relaxed); }

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

namespace {

inline double mm_cell(const double* a, const double* b, std::size_t m, std::size_t k,
                      std::size_t n, bool ta, bool tb, std::size_t i, std::size_t j) {
    double acc = 0.0;
    for (std::size_t l = 0; l < k; ++l) {
        double av = ta ? a[l * m + i] : a[i * k + l];
        double bv = tb ? b[j * k + l] : b[l * n + j];
        acc += av * bv;
    }
    return acc;
}

}  // namespace

void matmul_serial(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n, bool ta, bool tb, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double v = mm_cell(a, b, m, k, n, ta, tb, i, j);
            c[i * n + j] = accumulate ? c[i * n + j] + v : v;
        }
}

void matmul_omp(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                std::size_t n, bool ta, bool tb, bool accumulate, int threads) {
#pragma omp parallel for collapse(2) schedule(static) num_threads(threads)
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double v = mm_cell(a, b, m, k, n, ta, tb, i, j);
            c[i * n + j] = accumulate ? c[i * n + j] + v : v;
        }
}

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool ta, bool tb, bool accumulate) {
    int t = max_threads();
    if (t <= 1 || m * n < 64)
        matmul_serial(a, b, c, m, k, n, ta, tb, accumulate);
    else
        matmul_omp(a, b, c, m, k, n, ta, tb, accumulate, t);
}

// ---------------------------------------------------------------------------
// conv2d forward
// ---------------------------------------------------------------------------

namespace {

inline double conv_cell(const double* x, const double* kern, std::size_t w, std::size_t ci,
                        std::size_t kh, std::size_t kw, std::size_t co, std::size_t stride,
                        std::size_t oy, std::size_t ox, std::size_t oc) {
    double acc = 0.0;
    for (std::size_t ky = 0; ky < kh; ++ky)
        for (std::size_t kx = 0; kx < kw; ++kx)
            for (std::size_t ic = 0; ic < ci; ++ic) {
                double xv = x[((oy * stride + ky) * w + (ox * stride + kx)) * ci + ic];
                double kv = kern[((ky * kw + kx) * ci + ic) * co + oc];
                acc += xv * kv;
            }
    return acc;
}

}  // namespace

void conv2d_serial(const double* x, const double* kern, double* y, std::size_t h, std::size_t w,
                   std::size_t ci, std::size_t kh, std::size_t kw, std::size_t co,
                   std::size_t stride, bool accumulate) {
    std::size_t oh = (h - kh) / stride + 1, ow = (w - kw) / stride + 1;
    for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox)
            for (std::size_t oc = 0; oc < co; ++oc) {
                double v = conv_cell(x, kern, w, ci, kh, kw, co, stride, oy, ox, oc);
                std::size_t idx = (oy * ow + ox) * co + oc;
                y[idx] = accumulate ? y[idx] + v : v;
            }
}

void conv2d_omp(const double* x, const double* kern, double* y, std::size_t h, std::size_t w,
                std::size_t ci, std::size_t kh, std::size_t kw, std::size_t co,
                std::size_t stride, bool accumulate, int threads) {
    std::size_t oh = (h - kh) / stride + 1, ow = (w - kw) / stride + 1;
#pragma omp parallel for collapse(2) schedule(static) num_threads(threads)
    for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox)
            for (std::size_t oc = 0; oc < co; ++oc) {
                double v = conv_cell(x, kern, w, ci, kh, kw, co, stride, oy, ox, oc);
                std::size_t idx = (oy * ow + ox) * co + oc;
                y[idx] = accumulate ? y[idx] + v : v;
            }
}

void conv2d(const double* x, const double* kern, double* y, std::size_t h, std::size_t w,
            std::size_t ci, std::size_t kh, std::size_t kw, std::size_t co, std::size_t stride,
            bool accumulate) {
    int t = max_threads();
    std::size_t oh = (h - kh) / stride + 1, ow = (w - kw) / stride + 1;
    if (t <= 1 || oh * ow < 16)
        conv2d_serial(x, kern, y, h, w, ci, kh, kw, co, stride, accumulate);
    else
        conv2d_omp(x, kern, y, h, w, ci, kh, kw, co, stride, accumulate, t);
}

// ---------------------------------------------------------------------------
// conv2d backward, kernel side
// ---------------------------------------------------------------------------

namespace {

inline double convgk_cell(const double* x, const double* gy, std::size_t w, std::size_t ci,
                          std::size_t co, std::size_t stride, std::size_t oh, std::size_t ow,
                          std::size_t ky, std::size_t kx, std::size_t ic, std::size_t oc) {
    double acc = 0.0;
    for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
            double xv = x[((oy * stride + ky) * w + (ox * stride + kx)) * ci + ic];
            acc += xv * gy[(oy * ow + ox) * co + oc];
        }
    return acc;
}

}  // namespace

void conv2d_grad_kernel_serial(const double* x, const double* gy, double* gk, std::size_t h,
                               std::size_t w, std::size_t ci, std::size_t kh, std::size_t kw,
                               std::size_t co, std::size_t stride, bool accumulate) {
    std::size_t oh = (h - kh) / stride + 1, ow = (w - kw) / stride + 1;
    for (std::size_t ky = 0; ky < kh; ++ky)
        for (std::size_t kx = 0; kx < kw; ++kx)
            for (std::size_t ic = 0; ic < ci; ++ic)
                for (std::size_t oc = 0; oc < co; ++oc) {
                    double v = convgk_cell(x, gy, w, ci, co, stride, oh, ow, ky, kx, ic, oc);
                    std::size_t idx = ((ky * kw + kx) * ci + ic) * co + oc;
                    gk[idx] = accumulate ? gk[idx] + v : v;
                }
}

void conv2d_grad_kernel_omp(const double* x, const double* gy, double* gk, std::size_t h,
                            std::size_t w, std::size_t ci, std::size_t kh, std::size_t kw,
                            std::size_t co, std::size_t stride, bool accumulate, int threads) {
    std::size_t oh = (h - kh) / stride + 1, ow = (w - kw) / stride + 1;
#pragma omp parallel for collapse(2) schedule(static) num_threads(threads)
    for (std::size_t ky = 0; ky < kh; ++ky)
        for (std::size_t kx = 0; kx < kw; ++kx)
            for (std::size_t ic = 0; ic < ci; ++ic)
                for (std::size_t oc = 0; oc < co; ++oc) {
                    double v = convgk_cell(x, gy, w, ci, co, stride, oh, ow, ky, kx, ic, oc);
                    std::size_t idx = ((ky * kw + kx) * ci + ic) * co + oc;
                    gk[idx] = accumulate ? gk[idx] + v : v;
                }
}

void conv2d_grad_kernel(const double* x, const double* gy, double* gk, std::size_t h,
                        std::size_t w, std::size_t ci, std::size_t kh, std::size_t kw,
                        std::size_t co, std::size_t stride, bool accumulate) {
    int t = max_threads();
    if (t <= 1 || kh * kw < 4)
        conv2d_grad_kernel_serial(x, gy, gk, h, w, ci, kh, kw, co, stride, accumulate);
    else
        conv2d_grad_kernel_omp(x, gy, gk, h, w, ci, kh, kw, co, stride, accumulate, t);
}

// ---------------------------------------------------------------------------
// conv2d backward, input side
// ---------------------------------------------------------------------------

namespace {

inline double convgx_cell(const double* kern, const double* gy, std::size_t ci, std::size_t kh,
                          std::size_t kw, std::size_t co, std::size_t stride, std::size_t oh,
                          std::size_t ow, std::size_t iy, std::size_t ix, std::size_t ic) {
    double acc = 0.0;
    for (std::size_t ky = 0; ky < kh; ++ky) {
        if (ky > iy) break;
        std::size_t ry = iy - ky;
        if (ry % stride != 0) continue;
        std::size_t oy = ry / stride;
        if (oy >= oh) continue;
        for (std::size_t kx = 0; kx < kw; ++kx) {
            if (kx > ix) break;
            std::size_t rx = ix - kx;
            if (rx % stride != 0) continue;
            std::size_t ox = rx / stride;
            if (ox >= ow) continue;
            for (std::size_t oc = 0; oc < co; ++oc)
                acc += kern[((ky * kw + kx) * ci + ic) * co + oc] * gy[(oy * ow + ox) * co + oc];
        }
    }
    return acc;
}

}  // namespace

void conv2d_grad_input_serial(const double* kern, const double* gy, double* gx, std::size_t h,
                              std::size_t w, std::size_t ci, std::size_t kh, std::size_t kw,
                              std::size_t co, std::size_t stride, bool accumulate) {
    std::size_t oh = (h - kh) / stride + 1, ow = (w - kw) / stride + 1;
    for (std::size_t iy = 0; iy < h; ++iy)
        for (std::size_t ix = 0; ix < w; ++ix)
            for (std::size_t ic = 0; ic < ci; ++ic) {
                double v = convgx_cell(kern, gy, ci, kh, kw, co, stride, oh, ow, iy, ix, ic);
                std::size_t idx = (iy * w + ix) * ci + ic;
                gx[idx] = accumulate ? gx[idx] + v : v;
            }
}

void conv2d_grad_input_omp(const double* kern, const double* gy, double* gx, std::size_t h,
                           std::size_t w, std::size_t ci, std::size_t kh, std::size_t kw,
                           std::size_t co, std::size_t stride, bool accumulate, int threads) {
    std::size_t oh = (h - kh) / stride + 1, ow = (w - kw) / stride + 1;
#pragma omp parallel for collapse(2) schedule(static) num_threads(threads)
    for (std::size_t iy = 0; iy < h; ++iy)
        for (std::size_t ix = 0; ix < w; ++ix)
            for (std::size_t ic = 0; ic < ci; ++ic) {
                double v = convgx_cell(kern, gy, ci, kh, kw, co, stride, oh, ow, iy, ix, ic);
                std::size_t idx = (iy * w + ix) * ci + ic;
                gx[idx] = accumulate ? gx[idx] + v : v;
            }
}

void conv2d_grad_input(const double* kern, const double* gy, double* gx, std::size_t h,
                       std::size_t w, std::size_t ci, std::size_t kh, std::size_t kw,
                       std::size_t co, std::size_t stride, bool accumulate) {
    int t = max_threads();
    if (t <= 1 || h * w < 64)
        conv2d_grad_input_serial(kern, gy, gx, h, w, ci, kh, kw, co, stride, accumulate);
    else
        conv2d_grad_input_omp(kern, gy, gx, h, w, ci, kh, kw, co, stride, accumulate, t);
}

// ---------------------------------------------------------------------------
// mean pooling
// ---------------------------------------------------------------------------

void avg_pool2d(const double* x, double* y, std::size_t h, std::size_t w, std::size_t c,
                std::size_t win) {
    std::size_t oh = h / win, ow = w / win;
    double inv = 1.0 / static_cast<double>(win * win);
    for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox)
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t dy = 0; dy < win; ++dy)
                    for (std::size_t dx = 0; dx < win; ++dx)
                        acc += x[((oy * win + dy) * w + (ox * win + dx)) * c + ch];
                y[(oy * ow + ox) * c + ch] = acc * inv;
            }
}

void avg_pool2d_grad(const double* gy, double* gx, std::size_t h, std::size_t w, std::size_t c,
                     std::size_t win, bool accumulate) {
    std::size_t oh = h / win, ow = w / win;
    double inv = 1.0 / static_cast<double>(win * win);
    for (std::size_t iy = 0; iy < h; ++iy)
        for (std::size_t ix = 0; ix < w; ++ix)
            for (std::size_t ch = 0; ch < c; ++ch) {
                std::size_t oy = iy / win, ox = ix / win;
                double v = (oy < oh && ox < ow) ? gy[(oy * ow + ox) * c + ch] * inv : 0.0;
                std::size_t idx = (iy * w + ix) * c + ch;
                gx[idx] = accumulate ? gx[idx] + v : v;
            }
}

}  // namespace bayescope::kernels
