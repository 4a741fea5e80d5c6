#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "bayescope/infer.hpp"
#include "bayescope/kernels.hpp"

using namespace bayescope;

namespace {

Model make_model(Variant v, std::uint64_t seed = 7) {
    ModelSpec spec;
    spec.variant = v;
    spec.input_dim = 2;
    spec.seed = seed;
    return build(spec);
}

const Tensor kX({2}, {0.3, -1.1});

bool report_equal(const UncertaintyReport& a, const UncertaintyReport& b) {
    return a.mu_hat == b.mu_hat && a.epistemic_var == b.epistemic_var &&
           a.aleatoric_var == b.aleatoric_var && a.passes == b.passes &&
           a.aleatoric_learned == b.aleatoric_learned;
}

}  // namespace

TEST_CASE("summarize_passes: hand-computed decomposition") {
    UncertaintyReport r = summarize_passes({1.0, 2.0, 3.0}, {0.5, 0.5, 0.5}, true);
    CHECK(r.mu_hat == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(r.epistemic_var == doctest::Approx(2.0 / 3.0).epsilon(1e-15));  // population variance
    CHECK(r.aleatoric_var == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(r.passes == 3);
    CHECK(r.aleatoric_learned);
    CHECK(r.total_var() == r.epistemic_var + r.aleatoric_var);  // exact identity
}

TEST_CASE("summarize_passes is invariant to draw order") {
    std::vector<double> mus{0.3, -1.7, 2.9, 0.11, 5.0, -0.2};
    std::vector<double> vars{1.0, 0.25, 4.0, 0.5, 2.0, 0.125};
    UncertaintyReport base = summarize_passes(mus, vars, true);

    std::reverse(mus.begin(), mus.end());
    std::reverse(vars.begin(), vars.end());
    UncertaintyReport rev = summarize_passes(mus, vars, true);
    CHECK(report_equal(base, rev));

    std::rotate(mus.begin(), mus.begin() + 2, mus.end());
    std::rotate(vars.begin(), vars.begin() + 3, vars.end());
    UncertaintyReport rot = summarize_passes(mus, vars, true);
    CHECK(base.mu_hat == rot.mu_hat);
    CHECK(base.epistemic_var == rot.epistemic_var);
    CHECK(base.aleatoric_var == rot.aleatoric_var);
}

TEST_CASE("summarize_passes rejects bad draw lists") {
    CHECK_THROWS_AS(summarize_passes({}, {}, true), ContractError);
    CHECK_THROWS_AS(summarize_passes({1.0}, {1.0, 2.0}, true), ContractError);
}

TEST_CASE("deterministic variants: zero epistemic, aleatoric per head") {
    Model sig = make_model(Variant::cnn_sigma);
    UncertaintyReport r = predict(sig, kX, 20, 99);
    CHECK(r.epistemic_var == 0.0);
    CHECK(r.aleatoric_learned);
    CHECK(r.passes == 1);  // all passes identical; one is run

    RngStream rng(1);
    GaussianPrediction p = sig.predict_one(kX, Mode::mean, rng);
    REQUIRE(p.log_var.has_value());
    CHECK(r.aleatoric_var == std::exp(*p.log_var));
    CHECK(r.mu_hat == p.mu);

    // any passes count gives the same report
    CHECK(report_equal(predict(sig, kX, 1, 5), predict(sig, kX, 200, 6)));

    Model point = make_model(Variant::cnn);
    UncertaintyReport rp = predict(point, kX, 20, 99);
    CHECK(rp.epistemic_var == 0.0);
    CHECK(rp.aleatoric_var == 1.0);  // unit-variance placeholder
    CHECK_FALSE(rp.aleatoric_learned);
}

TEST_CASE("bayesian variants: sampling contract") {
    Model m = make_model(Variant::bcnn_sigma);

    UncertaintyReport one = predict(m, kX, 1, 42);
    CHECK(one.epistemic_var == 0.0);  // single draw: variance is zero by definition
    CHECK(one.passes == 1);

    UncertaintyReport a = predict(m, kX, 20, 42);
    UncertaintyReport b = predict(m, kX, 20, 42);
    UncertaintyReport c = predict(m, kX, 20, 43);
    CHECK(report_equal(a, b));
    CHECK(a.mu_hat != c.mu_hat);
    CHECK(a.epistemic_var > 0.0);
    CHECK(a.total_var() == a.epistemic_var + a.aleatoric_var);

    Model fixed = make_model(Variant::bcnn);
    UncertaintyReport rf = predict(fixed, kX, 20, 1);
    CHECK(rf.aleatoric_var == 1.0);
    CHECK_FALSE(rf.aleatoric_learned);
    CHECK(rf.epistemic_var > 0.0);

    CHECK_THROWS_AS(predict(m, kX, 0, 1), ConfigError);
}

TEST_CASE("more passes stabilize mu_hat") {
    Model m = make_model(Variant::bcnn_sigma, 3);
    auto spread = [&](std::size_t passes) {
        const int reps = 24;
        double sum = 0.0, sq = 0.0;
        for (int r = 0; r < reps; ++r) {
            double mu = predict(m, kX, passes, 1000 + r).mu_hat;
            sum += mu;
            sq += mu * mu;
        }
        double mean = sum / reps;
        return sq / reps - mean * mean;
    };
    CHECK(spread(2000) < spread(20));
}

TEST_CASE("batch prediction: derived per-sample streams") {
    Model m = make_model(Variant::bcnn_sigma);
    RngStream xr(11);
    Tensor X = xr.normal_tensor({16, 2});

    std::vector<UncertaintyReport> batch = predict_batch(m, X, 20, 7);
    REQUIRE(batch.size() == 16);

    // batch of one reproduces predict() under the same derived seed
    Tensor x0({2}, {X[0], X[1]});
    std::vector<UncertaintyReport> single = predict_batch(m, Tensor({1, 2}, {X[0], X[1]}), 20, 7);
    REQUIRE(single.size() == 1);
    UncertaintyReport direct = predict(m, x0, 20, RngStream::mix(7, 0xba7c'0000ULL));
    CHECK(report_equal(single[0], direct));
    CHECK(report_equal(single[0], batch[0]));

    // worker count must not change a single bit
    int saved = kernels::max_threads();
    kernels::set_max_threads(1);
    std::vector<UncertaintyReport> serial = predict_batch(m, X, 20, 7);
    kernels::set_max_threads(8);
    std::vector<UncertaintyReport> wide = predict_batch(m, X, 20, 7);
    kernels::set_max_threads(saved);
    REQUIRE(serial.size() == wide.size());
    for (std::size_t i = 0; i < serial.size(); ++i) {
        CHECK(report_equal(serial[i], wide[i]));
        CHECK(report_equal(serial[i], batch[i]));
    }

    CHECK(predict_batch(m, Tensor(), 20, 7).empty());
}
