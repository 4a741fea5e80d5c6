#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <vector>

#include "bayescope/kernels.hpp"
#include "bayescope/rng.hpp"
#include "bayescope/tensor.hpp"

using namespace bayescope;
namespace k = bayescope::kernels;

namespace {

// Index-arithmetic-free reference: resolves transposes via an accessor so a
// bug in the kernel's stride math can't be mirrored here.
std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b,
                                 std::size_t m, std::size_t kk, std::size_t n, bool ta, bool tb) {
    auto A = [&](std::size_t i, std::size_t j) { return ta ? a[j * m + i] : a[i * kk + j]; };
    auto B = [&](std::size_t i, std::size_t j) { return tb ? b[j * kk + i] : b[i * n + j]; };
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < kk; ++p) c[i * n + j] += A(i, p) * B(p, j);
    return c;
}

std::vector<double> random_vec(RngStream& rng, std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

}  // namespace

TEST_CASE("tensor shape/data contract") {
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.size() == 6);
    CHECK(t.ndim() == 2);
    CHECK(t.at(1, 2) == 6.0);
    CHECK(t.shape_str() == "[2x3]");

    CHECK_THROWS_AS(Tensor({2, 3}, {1, 2, 3}), DimensionError);
    CHECK_THROWS_AS(Tensor({2, 2}).item(), ContractError);
    CHECK(Tensor::scalar(4.5).item() == 4.5);

    Tensor z = Tensor::zeros({3});
    CHECK(z[0] == 0.0);
    CHECK(z.all_finite());
    z[1] = std::strtod("inf", nullptr);
    CHECK_FALSE(z.all_finite());

    CHECK(Tensor::full({2, 2}, 7.0)[3] == 7.0);
}

TEST_CASE("matmul hand values") {
    // [[1,2],[3,4]] * [[5,6],[7,8]] = [[19,22],[43,50]]
    std::vector<double> a{1, 2, 3, 4}, b{5, 6, 7, 8}, c(4, -1.0);
    k::matmul(a.data(), b.data(), c.data(), 2, 2, 2);
    CHECK(c == std::vector<double>{19, 22, 43, 50});

    // accumulate adds on top of existing output
    k::matmul(a.data(), b.data(), c.data(), 2, 2, 2, false, false, true);
    CHECK(c == std::vector<double>{38, 44, 86, 100});
}

TEST_CASE("matmul transpose flags against naive reference") {
    RngStream rng(71);
    const std::size_t m = 5, kk = 7, n = 3;
    for (bool ta : {false, true}) {
        for (bool tb : {false, true}) {
            CAPTURE(ta);
            CAPTURE(tb);
            std::vector<double> a = random_vec(rng, m * kk);
            std::vector<double> b = random_vec(rng, kk * n);
            std::vector<double> c(m * n, 0.0);
            k::matmul(a.data(), b.data(), c.data(), m, kk, n, ta, tb);
            std::vector<double> ref = naive_matmul(a, b, m, kk, n, ta, tb);
            for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("omp matmul is bitwise identical to serial for any thread count") {
    RngStream rng(72);
    for (auto [m, kk, n] : {std::tuple<std::size_t, std::size_t, std::size_t>{1, 1, 1},
                            {3, 17, 5},
                            {64, 2, 64},
                            {33, 9, 7}}) {
        std::vector<double> a = random_vec(rng, m * kk);
        std::vector<double> b = random_vec(rng, kk * n);
        std::vector<double> ref(m * n), got(m * n);
        k::matmul_serial(a.data(), b.data(), ref.data(), m, kk, n, false, false, false);
        for (int threads : {1, 2, 3, 8}) {
            CAPTURE(m);
            CAPTURE(threads);
            k::matmul_omp(a.data(), b.data(), got.data(), m, kk, n, false, false, false, threads);
            CHECK(got == ref);  // bitwise, not approx
        }
    }
}

TEST_CASE("conv2d all-ones and stride geometry") {
    // 3x3 ones conv 3x3 ones -> single 9
    std::vector<double> x(9, 1.0), kern(9, 1.0), y(1, 0.0);
    k::conv2d(x.data(), kern.data(), y.data(), 3, 3, 1, 3, 3, 1, 1);
    CHECK(y[0] == 9.0);

    // 5x5 input, 3x3 kernel, stride 2 -> 2x2 output; value = window sum
    std::vector<double> x5(25);
    for (std::size_t i = 0; i < 25; ++i) x5[i] = double(i);
    std::vector<double> y2(4, 0.0);
    k::conv2d(x5.data(), kern.data(), y2.data(), 5, 5, 1, 3, 3, 1, 2);
    auto window_sum = [&](std::size_t r0, std::size_t c0) {
        double s = 0;
        for (std::size_t r = r0; r < r0 + 3; ++r)
            for (std::size_t c = c0; c < c0 + 3; ++c) s += x5[r * 5 + c];
        return s;
    };
    CHECK(y2 == std::vector<double>{window_sum(0, 0), window_sum(0, 2), window_sum(2, 0),
                                    window_sum(2, 2)});
}

TEST_CASE("conv2d multichannel matches per-element definition") {
    RngStream rng(73);
    const std::size_t h = 6, w = 5, ci = 3, kh = 3, kw = 2, co = 4, stride = 1;
    const std::size_t oh = (h - kh) / stride + 1, ow = (w - kw) / stride + 1;
    std::vector<double> x = random_vec(rng, h * w * ci);
    std::vector<double> kern = random_vec(rng, kh * kw * ci * co);
    std::vector<double> y(oh * ow * co, 0.0);
    k::conv2d(x.data(), kern.data(), y.data(), h, w, ci, kh, kw, co, stride);

    for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t c = 0; c < ow; ++c)
            for (std::size_t o = 0; o < co; ++o) {
                double s = 0;
                for (std::size_t kr = 0; kr < kh; ++kr)
                    for (std::size_t kc = 0; kc < kw; ++kc)
                        for (std::size_t ic = 0; ic < ci; ++ic)
                            s += x[((r * stride + kr) * w + (c * stride + kc)) * ci + ic] *
                                 kern[((kr * kw + kc) * ci + ic) * co + o];
                CHECK(y[(r * ow + c) * co + o] == doctest::Approx(s).epsilon(1e-12));
            }
}

TEST_CASE("conv2d gradients match finite differences of the forward kernel") {
    RngStream rng(74);
    const std::size_t h = 6, w = 6, ci = 2, kh = 3, kw = 3, co = 2, stride = 1;
    const std::size_t oh = (h - kh) / stride + 1, ow = (w - kw) / stride + 1;
    std::vector<double> x = random_vec(rng, h * w * ci);
    std::vector<double> kern = random_vec(rng, kh * kw * ci * co);
    std::vector<double> gy = random_vec(rng, oh * ow * co);

    // loss = <y, gy>; d loss/d kern and d loss/d x by central differences
    auto loss = [&](const std::vector<double>& xx, const std::vector<double>& kk2) {
        std::vector<double> y(oh * ow * co, 0.0);
        k::conv2d(xx.data(), kk2.data(), y.data(), h, w, ci, kh, kw, co, stride);
        double s = 0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * gy[i];
        return s;
    };

    std::vector<double> gk(kern.size(), 0.0), gx(x.size(), 0.0);
    k::conv2d_grad_kernel(x.data(), gy.data(), gk.data(), h, w, ci, kh, kw, co, stride);
    k::conv2d_grad_input(kern.data(), gy.data(), gx.data(), h, w, ci, kh, kw, co, stride);

    const double step = 1e-6;
    for (std::size_t i = 0; i < kern.size(); i += 5) {
        std::vector<double> kp = kern, km = kern;
        kp[i] += step;
        km[i] -= step;
        CHECK(gk[i] == doctest::Approx((loss(x, kp) - loss(x, km)) / (2 * step)).epsilon(1e-6));
    }
    for (std::size_t i = 0; i < x.size(); i += 7) {
        std::vector<double> xp = x, xm = x;
        xp[i] += step;
        xm[i] -= step;
        CHECK(gx[i] == doctest::Approx((loss(xp, kern) - loss(xm, kern)) / (2 * step)).epsilon(1e-6));
    }
}

TEST_CASE("omp conv kernels bitwise match serial") {
    RngStream rng(75);
    const std::size_t h = 12, w = 10, ci = 3, kh = 3, kw = 3, co = 5, stride = 2;
    const std::size_t oh = (h - kh) / stride + 1, ow = (w - kw) / stride + 1;
    std::vector<double> x = random_vec(rng, h * w * ci);
    std::vector<double> kern = random_vec(rng, kh * kw * ci * co);
    std::vector<double> gy = random_vec(rng, oh * ow * co);

    std::vector<double> ref(oh * ow * co), got(ref.size());
    k::conv2d_serial(x.data(), kern.data(), ref.data(), h, w, ci, kh, kw, co, stride, false);
    std::vector<double> gk_ref(kern.size()), gk_got(kern.size());
    k::conv2d_grad_kernel_serial(x.data(), gy.data(), gk_ref.data(), h, w, ci, kh, kw, co, stride,
                                 false);
    std::vector<double> gx_ref(x.size()), gx_got(x.size());
    k::conv2d_grad_input_serial(kern.data(), gy.data(), gx_ref.data(), h, w, ci, kh, kw, co,
                                stride, false);

    for (int threads : {2, 4, 7}) {
        CAPTURE(threads);
        k::conv2d_omp(x.data(), kern.data(), got.data(), h, w, ci, kh, kw, co, stride, false,
                      threads);
        CHECK(got == ref);
        k::conv2d_grad_kernel_omp(x.data(), gy.data(), gk_got.data(), h, w, ci, kh, kw, co, stride,
                                  false, threads);
        CHECK(gk_got == gk_ref);
        k::conv2d_grad_input_omp(kern.data(), gy.data(), gx_got.data(), h, w, ci, kh, kw, co,
                                 stride, false, threads);
        CHECK(gx_got == gx_ref);
    }
}

TEST_CASE("avg_pool2d floor semantics and gradient") {
    // 5x5 single channel, window 2: trailing row/col dropped -> 2x2 output
    std::vector<double> x(25);
    for (std::size_t i = 0; i < 25; ++i) x[i] = double(i);
    std::vector<double> y(4, -1.0);
    k::avg_pool2d(x.data(), y.data(), 5, 5, 1, 2);
    CHECK(y[0] == (0 + 1 + 5 + 6) / 4.0);
    CHECK(y[1] == (2 + 3 + 7 + 8) / 4.0);
    CHECK(y[2] == (10 + 11 + 15 + 16) / 4.0);
    CHECK(y[3] == (12 + 13 + 17 + 18) / 4.0);

    // gradient spreads gy/win^2 into covered pixels, zero into dropped ones
    std::vector<double> gy{4, 8, 12, 16}, gx(25, 0.0);
    k::avg_pool2d_grad(gy.data(), gx.data(), 5, 5, 1, 2);
    CHECK(gx[0] == 1.0);
    CHECK(gx[6] == 1.0);
    CHECK(gx[2] == 2.0);
    CHECK(gx[4] == 0.0);   // dropped column
    CHECK(gx[20] == 0.0);  // dropped row
    double total = 0;
    for (double g : gx) total += g;
    CHECK(total == doctest::Approx(4.0 + 8 + 12 + 16).epsilon(1e-15));
}

TEST_CASE("thread cap control") {
    int before = k::max_threads();
    CHECK(before >= 1);
    k::set_max_threads(3);
    CHECK(k::max_threads() == 3);
    k::set_max_threads(0);  // values < 1 clamp to 1
    CHECK(k::max_threads() == 1);
    k::set_max_threads(before);
}
