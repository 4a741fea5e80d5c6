// Timing comparison between the serial reference kernels and the OpenMP
// versions. The OpenMP kernels assign each output element to exactly one
// thread with a fixed accumulation order, so besides speed this reports a
// bitwise-equality check of the two paths.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <vector>

#include "bayescope/kernels.hpp"
#include "bayescope/rng.hpp"
#include "bayescope/tensor.hpp"

using namespace bayescope;

namespace {

double time_of(int reps, const std::function<void()>& fn) {
    // One warmup rep, then best-of-reps wall time.
    fn();
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        auto t0 = std::chrono::steady_clock::now();
        fn();
        double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (dt < best) best = dt;
    }
    return best;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.same_shape(b) &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

void report(const char* name, double serial, double omp, bool identical) {
    std::printf("%-28s %10.3f ms %10.3f ms %7.2fx   %s\n", name, serial * 1e3, omp * 1e3,
                serial / omp, identical ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main() {
    const int threads = kernels::max_threads();
    std::printf("threads: %d\n", threads);
    std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

    RngStream rng(7);

    {
        const std::size_t m = 256, k = 256, n = 256;
        Tensor a = rng.uniform_tensor({m, k}, -1.0, 1.0);
        Tensor b = rng.uniform_tensor({k, n}, -1.0, 1.0);
        Tensor cs({m, n}), co({m, n});
        double ts = time_of(5, [&] { kernels::matmul_serial(a.data(), b.data(), cs.data(), m, k,
                                                            n, false, false, false); });
        double to = time_of(5, [&] { kernels::matmul_omp(a.data(), b.data(), co.data(), m, k, n,
                                                         false, false, false, threads); });
        report("matmul 256x256x256", ts, to, bitwise_equal(cs, co));
    }
    {
        const std::size_t m = 64, k = 4096, n = 64;
        Tensor a = rng.uniform_tensor({m, k}, -1.0, 1.0);
        Tensor b = rng.uniform_tensor({k, n}, -1.0, 1.0);
        Tensor cs({m, n}), co({m, n});
        double ts = time_of(5, [&] { kernels::matmul_serial(a.data(), b.data(), cs.data(), m, k,
                                                            n, false, false, false); });
        double to = time_of(5, [&] { kernels::matmul_omp(a.data(), b.data(), co.data(), m, k, n,
                                                         false, false, false, threads); });
        report("matmul 64x4096x64", ts, to, bitwise_equal(cs, co));
    }
    {
        const std::size_t h = 128, w = 128, ci = 8, co_ch = 16, kh = 3, kw = 3;
        const std::size_t oh = h - kh + 1, ow = w - kw + 1;
        Tensor x = rng.uniform_tensor({h, w, ci}, -1.0, 1.0);
        Tensor kern = rng.uniform_tensor({kh, kw, ci, co_ch}, -1.0, 1.0);
        Tensor ys({oh, ow, co_ch}), yo({oh, ow, co_ch});
        double ts = time_of(3, [&] {
            kernels::conv2d_serial(x.data(), kern.data(), ys.data(), h, w, ci, kh, kw, co_ch, 1,
                                   false);
        });
        double to = time_of(3, [&] {
            kernels::conv2d_omp(x.data(), kern.data(), yo.data(), h, w, ci, kh, kw, co_ch, 1,
                                false, threads);
        });
        report("conv2d 128x128x8 -> 16", ts, to, bitwise_equal(ys, yo));
    }
    {
        const std::size_t h = 128, w = 128, ci = 8, co_ch = 16, kh = 3, kw = 3;
        const std::size_t oh = h - kh + 1, ow = w - kw + 1;
        Tensor x = rng.uniform_tensor({h, w, ci}, -1.0, 1.0);
        Tensor gy = rng.uniform_tensor({oh, ow, co_ch}, -1.0, 1.0);
        Tensor gs({kh, kw, ci, co_ch}), go({kh, kw, ci, co_ch});
        double ts = time_of(3, [&] {
            kernels::conv2d_grad_kernel_serial(x.data(), gy.data(), gs.data(), h, w, ci, kh, kw,
                                               co_ch, 1, false);
        });
        double to = time_of(3, [&] {
            kernels::conv2d_grad_kernel_omp(x.data(), gy.data(), go.data(), h, w, ci, kh, kw,
                                            co_ch, 1, false, threads);
        });
        report("conv2d_grad_kernel 128x128", ts, to, bitwise_equal(gs, go));
    }
    return 0;
}
