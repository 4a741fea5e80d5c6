#include "bayescope/infer.hpp"

#include <algorithm>
#include <cmath>

#include "bayescope/errors.hpp"
#include "bayescope/kernels.hpp"
#include "bayescope/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bayescope {

UncertaintyReport summarize_passes(const std::vector<double>& mus,
                                   const std::vector<double>& vars,
                                   bool aleatoric_learned) {
    if (mus.empty() || mus.size() != vars.size())
        throw ContractError("summarize_passes: need equal, non-empty draw lists");
    const std::size_t t = mus.size();

    std::vector<double> m(mus), v(vars);
    std::sort(m.begin(), m.end());
    std::sort(v.begin(), v.end());

    double mu_sum = 0.0;
    for (double x : m) mu_sum += x;
    const double mu_hat = mu_sum / static_cast<double>(t);

    double sq_dev = 0.0;
    for (double x : m) sq_dev += (x - mu_hat) * (x - mu_hat);
    double var_sum = 0.0;
    for (double x : v) var_sum += x;

    UncertaintyReport rep;
    rep.mu_hat = mu_hat;
    rep.epistemic_var = sq_dev / static_cast<double>(t);
    rep.aleatoric_var = var_sum / static_cast<double>(t);
    rep.passes = t;
    rep.aleatoric_learned = aleatoric_learned;
    return rep;
}

UncertaintyReport predict(Model& model, const Tensor& input, std::size_t passes,
                          std::uint64_t seed) {
    if (passes == 0) throw ConfigError("predict: passes must be >= 1");
    const bool learned = model.sigma_head();

    if (!model.bayesian()) {
        // Point weights: every pass is identical, so run one and pin the
        // epistemic term to exactly zero.
        RngStream rng(seed);
        GaussianPrediction p = model.predict_one(input, Mode::mean, rng);
        UncertaintyReport rep;
        rep.mu_hat = p.mu;
        rep.epistemic_var = 0.0;
        rep.aleatoric_var = p.log_var ? std::exp(*p.log_var) : 1.0;
        rep.passes = 1;
        rep.aleatoric_learned = learned;
        return rep;
    }

    std::vector<double> mus(passes), vars(passes);
    for (std::size_t i = 0; i < passes; ++i) {
        RngStream rng(RngStream::derived(seed, i));
        GaussianPrediction p = model.predict_one(input, Mode::sample, rng);
        mus[i] = p.mu;
        vars[i] = p.log_var ? std::exp(*p.log_var) : 1.0;
    }
    return summarize_passes(mus, vars, learned);
}

std::vector<UncertaintyReport> predict_batch(Model& model, const Tensor& inputs,
                                             std::size_t passes, std::uint64_t seed) {
    if (inputs.empty()) return {};
    const std::size_t n = inputs.extent(0);
    std::vector<UncertaintyReport> out(n);
    const std::size_t row = n == 0 ? 0 : inputs.size() / n;
    Shape one_shape(inputs.shape().begin() + 1, inputs.shape().end());

    int threads = kernels::max_threads();
    if (n < 2) threads = 1;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
#endif
    for (std::size_t i = 0; i < n; ++i) {
        Tensor one(one_shape);
        std::copy(inputs.data() + i * row, inputs.data() + (i + 1) * row, one.data());
        out[i] = predict(model, one, passes, RngStream::mix(seed, 0xba7c'0000ULL + i));
    }
    return out;
}

}  // namespace bayescope
