#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bayescope/errors.hpp"
#include "bayescope/rng.hpp"
#include "bayescope/tape.hpp"
#include "support/gradcheck.hpp"

using namespace bayescope;
using gradcheck::max_rel_err;

namespace {

// Values away from kinks/poles so central differences are valid.
Tensor draw(RngStream& rng, const Shape& shape, double lo, double hi, double keep_out = 0.0) {
    Tensor t = rng.uniform_tensor(shape, lo, hi);
    if (keep_out > 0.0)
        for (std::size_t i = 0; i < t.size(); ++i)
            if (std::fabs(t[i]) < keep_out) t[i] = t[i] < 0 ? -keep_out : keep_out;
    return t;
}

// Weighted sum against a fixed random tensor, so upstream gradients are
// non-uniform.
ad::Node weighted(ad::Tape& tape, ad::Node x, std::uint64_t seed) {
    RngStream rng(seed);
    return ad::reduce_sum(ad::mul(x, tape.constant(rng.uniform_tensor(x.shape(), 0.5, 1.5))));
}

}  // namespace

TEST_CASE("elementwise binary ops match finite differences") {
    RngStream rng(11);
    for (int inst = 0; inst < 25; ++inst) {
        Tensor a = draw(rng, {2, 3}, -2.0, 2.0);
        Tensor b = draw(rng, {2, 3}, -2.0, 2.0, 0.3);  // also safe as divisor
        Tensor s = draw(rng, {1}, 0.4, 2.0);
        std::uint64_t w = 100 + inst;

        auto check = [&](std::vector<Tensor> leaves, gradcheck::GraphFn f) {
            CHECK(max_rel_err(std::move(leaves), f) < 1e-5);
        };
        check({a, b}, [&](ad::Tape& t, const std::vector<ad::Node>& n) {
            return weighted(t, ad::add(n[0], n[1]), w);
        });
        check({a, b}, [&](ad::Tape& t, const std::vector<ad::Node>& n) {
            return weighted(t, ad::sub(n[0], n[1]), w);
        });
        check({a, b}, [&](ad::Tape& t, const std::vector<ad::Node>& n) {
            return weighted(t, ad::mul(n[0], n[1]), w);
        });
        check({a, b}, [&](ad::Tape& t, const std::vector<ad::Node>& n) {
            return weighted(t, ad::div(n[0], n[1]), w);
        });
        // scalar and trailing-suffix broadcasts on both sides
        check({a, s}, [&](ad::Tape& t, const std::vector<ad::Node>& n) {
            return weighted(t, ad::mul(n[0], n[1]), w);
        });
        check({s, a}, [&](ad::Tape& t, const std::vector<ad::Node>& n) {
            return weighted(t, ad::div(n[0], n[1]), w);
        });
        Tensor row = draw(rng, {3}, -2.0, 2.0, 0.3);
        check({a, row}, [&](ad::Tape& t, const std::vector<ad::Node>& n) {
            return weighted(t, ad::add(n[0], n[1]), w);
        });
        check({a, row}, [&](ad::Tape& t, const std::vector<ad::Node>& n) {
            return weighted(t, ad::div(n[0], n[1]), w);
        });
    }
}

TEST_CASE("elementwise unary ops match finite differences") {
    RngStream rng(12);
    for (int inst = 0; inst < 25; ++inst) {
        std::uint64_t w = 200 + inst;
        auto check = [&](Tensor leaf, gradcheck::GraphFn f) {
            CHECK(max_rel_err({std::move(leaf)}, f) < 1e-5);
        };
        check(draw(rng, {2, 3}, -2.0, 2.0), [&](ad::Tape& t, const std::vector<ad::Node>& n) {
            return weighted(t, ad::exp(n[0]), w);
        });
        check(draw(rng, {2, 3}, 0.2, 3.0), [&](ad::Tape& t, const std::vector<ad::Node>& n) {
            return weighted(t, ad::log(n[0]), w);
        });
        check(draw(rng, {2, 3}, -2.0, 2.0), [&](ad::Tape& t, const std::vector<ad::Node>& n) {
            return weighted(t, ad::tanh(n[0]), w);
        });
        check(draw(rng, {2, 3}, -2.0, 2.0, 0.05),
              [&](ad::Tape& t, const std::vector<ad::Node>& n) {
                  return weighted(t, ad::relu(n[0]), w);
              });
        check(draw(rng, {2, 3}, -4.0, 4.0), [&](ad::Tape& t, const std::vector<ad::Node>& n) {
            return weighted(t, ad::softplus(n[0]), w);
        });
        check(draw(rng, {2, 3}, -2.0, 2.0), [&](ad::Tape& t, const std::vector<ad::Node>& n) {
            return weighted(t, ad::square(n[0]), w);
        });
        check(draw(rng, {2, 3}, -2.0, 2.0), [&](ad::Tape& t, const std::vector<ad::Node>& n) {
            return weighted(t, ad::affine(n[0], 1.7, -0.3), w);
        });
        // clamp probed strictly inside the range (FD is invalid at the pins)
        check(draw(rng, {2, 3}, -0.8, 0.8), [&](ad::Tape& t, const std::vector<ad::Node>& n) {
            return weighted(t, ad::clamp(n[0], -1.0, 1.0), w);
        });
    }
}

TEST_CASE("reductions and structural ops match finite differences") {
    RngStream rng(13);
    for (int inst = 0; inst < 25; ++inst) {
        std::uint64_t w = 300 + inst;
        CHECK(max_rel_err({draw(rng, {7}, -2.0, 2.0)},
                          [&](ad::Tape&, const std::vector<ad::Node>& n) {
                              return ad::reduce_sum(n[0]);
                          }) < 1e-5);
        CHECK(max_rel_err({draw(rng, {3, 4}, -2.0, 2.0)},
                          [&](ad::Tape&, const std::vector<ad::Node>& n) {
                              return ad::reduce_mean(n[0]);
                          }) < 1e-5);
        CHECK(max_rel_err({draw(rng, {2, 6}, -2.0, 2.0)},
                          [&](ad::Tape& t, const std::vector<ad::Node>& n) {
                              return weighted(t, ad::reshape(n[0], {3, 4}), w);
                          }) < 1e-5);
        CHECK(max_rel_err({draw(rng, {4, 2}, -2.0, 2.0)},
                          [&](ad::Tape& t, const std::vector<ad::Node>& n) {
                              return weighted(t, ad::select_column(n[0], inst % 2), w);
                          }) < 1e-5);
        CHECK(max_rel_err({draw(rng, {1, 4}, -2.0, 2.0), draw(rng, {1, 4}, -2.0, 2.0),
                           draw(rng, {1, 4}, -2.0, 2.0)},
                          [&](ad::Tape& t, const std::vector<ad::Node>& n) {
                              std::vector<ad::Node> rows(n.begin(), n.end());
                              return weighted(t, ad::concat_rows(rows), w);
                          }) < 1e-5);
    }
}

TEST_CASE("matmul gradient matches finite differences") {
    RngStream rng(14);
    for (int inst = 0; inst < 25; ++inst) {
        Tensor a = draw(rng, {2, 3}, -1.5, 1.5);
        Tensor b = draw(rng, {3, 4}, -1.5, 1.5);
        CHECK(max_rel_err({a, b}, [&](ad::Tape& t, const std::vector<ad::Node>& n) {
                  return weighted(t, ad::matmul(n[0], n[1]), 400 + inst);
              }) < 1e-5);
    }
}

TEST_CASE("grad of sum(a*b) w.r.t. a equals b") {
    RngStream rng(15);
    Tensor a = draw(rng, {3, 3}, -2.0, 2.0);
    Tensor b = draw(rng, {3, 3}, -2.0, 2.0);
    CHECK(max_rel_err({a, b}, [](ad::Tape&, const std::vector<ad::Node>& n) {
              return ad::reduce_sum(ad::mul(n[0], n[1]));
          }) < 1e-6);

    Tensor grad_a(Shape{3, 3});
    ad::Tape tape;
    ad::Node na = tape.param(a, &grad_a);
    tape.backward(ad::reduce_sum(ad::mul(na, tape.constant(b))));
    for (std::size_t i = 0; i < 9; ++i) CHECK(grad_a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("conv2d and avg_pool2d gradients match finite differences") {
    RngStream rng(16);
    for (int inst = 0; inst < 10; ++inst) {
        Tensor x = draw(rng, {6, 6, 2}, -1.0, 1.0);
        Tensor k = draw(rng, {3, 3, 2, 2}, -1.0, 1.0);
        const std::size_t stride = inst % 2 ? 1 : 2;
        CHECK(max_rel_err({x, k}, [&](ad::Tape& t, const std::vector<ad::Node>& n) {
                  return weighted(t, ad::conv2d(n[0], n[1], stride), 500 + inst);
              }) < 1e-5);
        CHECK(max_rel_err({x}, [&](ad::Tape& t, const std::vector<ad::Node>& n) {
                  return weighted(t, ad::avg_pool2d(n[0], 2), 600 + inst);
              }) < 1e-5);
        // floor semantics: 5x5 pooled by 2 drops the trailing row/column
        Tensor odd = draw(rng, {5, 5, 1}, -1.0, 1.0);
        CHECK(max_rel_err({odd}, [&](ad::Tape& t, const std::vector<ad::Node>& n) {
                  return weighted(t, ad::avg_pool2d(n[0], 2), 700 + inst);
              }) < 1e-5);
    }
}

TEST_CASE("softplus derivative at 1 is sigmoid(1)") {
    Tensor x = Tensor::scalar(1.0);
    Tensor grad(Shape{1});
    ad::Tape tape;
    ad::Node n = tape.param(x, &grad);
    tape.backward(ad::reduce_sum(ad::softplus(n)));
    CHECK(grad[0] == doctest::Approx(0.7310585786300049).epsilon(1e-12));
}

TEST_CASE("gradient accumulates linearly over composite losses") {
    RngStream rng(17);
    Tensor x = draw(rng, {2, 2}, 0.5, 2.0);
    auto grad_of = [&](auto build) {
        Tensor g(Shape{2, 2});
        ad::Tape tape;
        ad::Node n = tape.param(x, &g);
        tape.backward(build(n));
        return g;
    };
    Tensor gf = grad_of([](ad::Node n) { return ad::reduce_sum(ad::square(n)); });
    Tensor gg = grad_of([](ad::Node n) { return ad::reduce_sum(ad::log(n)); });
    Tensor gc = grad_of([](ad::Node n) {
        return ad::add(ad::mul(ad::reduce_sum(ad::square(n)), 2.0),
                       ad::mul(ad::reduce_sum(ad::log(n)), 3.0));
    });
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(gc[i] == doctest::Approx(2.0 * gf[i] + 3.0 * gg[i]).epsilon(1e-10));
}

TEST_CASE("params not reached by the loss get zero gradient") {
    Tensor used_g(Shape{2}), unused_g(Shape{2});
    ad::Tape tape;
    ad::Node used = tape.param(Tensor(Shape{2}, {1.0, 2.0}), &used_g);
    tape.param(Tensor(Shape{2}, {3.0, 4.0}), &unused_g);
    tape.backward(ad::reduce_sum(ad::square(used)));
    CHECK(used_g[0] == doctest::Approx(2.0));
    CHECK(unused_g[0] == 0.0);
    CHECK(unused_g[1] == 0.0);
}

TEST_CASE("sinks accumulate across backward calls until caller zeroes them") {
    Tensor g(Shape{1});
    Tensor x = Tensor::scalar(3.0);
    for (int pass = 0; pass < 2; ++pass) {
        ad::Tape tape;
        ad::Node n = tape.param(x, &g);
        tape.backward(ad::square(n));
    }
    CHECK(g[0] == doctest::Approx(12.0));  // 2 passes x d(x^2)/dx = 6
}

TEST_CASE("error paths") {
    ad::Tape tape;
    ad::Node a = tape.constant(Tensor(Shape{2, 3}, {1, 2, 3, 4, 5, 6}));
    ad::Node b = tape.constant(Tensor(Shape{3, 2}, {1, 2, 3, 4, 5, 6}));
    CHECK_THROWS_AS((void)ad::add(a, b), DimensionError);
    CHECK_THROWS_AS((void)ad::matmul(a, a), DimensionError);

    ad::Node zero = tape.constant(Tensor(Shape{2}, {1.0, 0.0}));
    CHECK_THROWS_AS((void)ad::div(a, zero), DimensionError);
    ad::Node z2 = tape.constant(Tensor(Shape{2, 3}, {1, 1, 0, 1, 1, 1}));
    CHECK_THROWS_AS((void)ad::div(a, z2), NumericError);
    ad::Node neg = tape.constant(Tensor(Shape{2}, {1.0, -1.0}));
    CHECK_THROWS_AS((void)ad::log(neg), NumericError);
    ad::Node big = tape.constant(Tensor(Shape{1}, {1000.0}));
    CHECK_THROWS_AS((void)ad::exp(big), NumericError);

    CHECK_THROWS_AS(tape.backward(a), ContractError);  // non-scalar loss

    Tensor img(Shape{2, 2, 1});
    Tensor kern(Shape{3, 3, 1, 1});
    ad::Node xi = tape.constant(img);
    ad::Node ki = tape.constant(kern);
    CHECK_THROWS_AS((void)ad::conv2d(xi, ki, 1), DimensionError);
}
