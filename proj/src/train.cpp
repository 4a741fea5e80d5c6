#include "bayescope/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "bayescope/errors.hpp"
#include "bayescope/rng.hpp"

namespace bayescope {

TrainData gather_rows(const TrainData& data, const std::vector<std::size_t>& idx) {
    const Shape& fs = data.features.shape();
    std::size_t row = data.features.size() / fs[0];
    Shape out_shape = fs;
    out_shape[0] = idx.size();
    Tensor feats(out_shape);
    Tensor targs(Shape{idx.size(), 1});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= fs[0]) throw ContractError("gather_rows: index out of range");
        const double* src = data.features.data() + idx[i] * row;
        std::copy(src, src + row, feats.data() + i * row);
        targs[i] = data.targets[idx[i]];
    }
    return TrainData{std::move(feats), std::move(targs)};
}

void adam_step(Tensor& value, const Tensor& grad, AdamState& state, std::size_t t,
               const TrainConfig& cfg) {
    if (!value.same_shape(grad) || !value.same_shape(state.m))
        throw ContractError("adam_step: shape mismatch");
    if (t == 0) throw ContractError("adam_step: step count is 1-based");
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < value.size(); ++i) {
        double g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        double mhat = state.m[i] / bc1;
        double vhat = state.v[i] / bc2;
        value[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
}

AdamOptimizer::AdamOptimizer(std::vector<Param*> params, const TrainConfig& cfg)
    : params_(std::move(params)), cfg_(cfg) {
    states_.reserve(params_.size());
    for (Param* p : params_)
        states_.push_back(AdamState{Tensor(p->value.shape()), Tensor(p->value.shape())});
}

void AdamOptimizer::step() {
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i)
        adam_step(params_[i]->value, params_[i]->grad, states_[i], t_, cfg_);
}

void AdamOptimizer::zero_grads() {
    for (Param* p : params_) p->zero_grad();
}

TrainLog train(Model& model, const TrainData& data, const TrainConfig& cfg) {
    const std::size_t n = data.size();
    if (n == 0) throw ContractError("train: empty dataset");
    if (cfg.batch_size == 0) throw ConfigError("train: batch_size must be positive");
    if (data.features.extent(0) != n)
        throw DimensionError("train: features/targets row mismatch");

    const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
    const double kl_weight = model.bayesian() ? 1.0 / static_cast<double>(batches) : 0.0;

    // Output-scale warm start (0-epoch runs must leave the model untouched).
    if (cfg.epochs > 0) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += data.targets[i];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            var += (data.targets[i] - mean) * (data.targets[i] - mean);
        var /= static_cast<double>(n);
        model.set_output_bias(mean, std::log(std::max(var, 1e-8)));
    }

    AdamOptimizer opt(model.params(), cfg);
    RngStream shuffle_rng(RngStream::mix(cfg.seed, 0x5aff'1e01ULL));
    RngStream weight_rng(RngStream::mix(cfg.seed, 0xd7aa'0002ULL));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainLog log;
    log.epochs.reserve(cfg.epochs);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        // Fisher-Yates; bounded rejection-free via 64-bit multiply-shift.
        for (std::size_t i = n - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(
                (static_cast<unsigned __int128>(shuffle_rng.next_u64()) * (i + 1)) >> 64);
            std::swap(order[i], order[j]);
        }

        EpochStats stats;
        for (std::size_t b = 0; b < batches; ++b) {
            std::size_t lo = b * cfg.batch_size;
            std::size_t hi = std::min(lo + cfg.batch_size, n);
            std::vector<std::size_t> idx(order.begin() + lo, order.begin() + hi);
            TrainData batch = gather_rows(data, idx);

            ad::Tape tape;
            opt.zero_grads();
            LossTerms loss = model.loss_terms(tape, batch.features, batch.targets, Mode::sample,
                                              weight_rng, kl_weight);

            double total = loss.total.scalar();
            if (!std::isfinite(total)) throw DivergedError(epoch, b, "non-finite loss");

            tape.backward(loss.total);
            opt.step();

            stats.loss += total;
            stats.data_term += loss.data_term.scalar();
            if (loss.kl_term) stats.kl_term += loss.kl_term->scalar();
        }
        stats.loss /= static_cast<double>(batches);
        stats.data_term /= static_cast<double>(batches);
        stats.kl_term /= static_cast<double>(batches);
        stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log.epochs.push_back(stats);

        if (cfg.log_every > 0 && (epoch + 1) % cfg.log_every == 0) {
            std::fprintf(stderr, "epoch %zu/%zu loss=%.6f data=%.6f kl=%.6f\n", epoch + 1,
                         cfg.epochs, stats.loss, stats.data_term, stats.kl_term);
        }
    }
    return log;
}

}  // namespace bayescope
