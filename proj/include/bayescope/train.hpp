#pragma once

#include <cstdint>
#include <vector>

#include "bayescope/model.hpp"

namespace bayescope {

/// One sampled weight set per step (n = 1) is baked into the loop and is not
/// configurable.
struct TrainConfig {
    std::size_t epochs = 300;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    std::size_t log_every = 0;  // epochs between stderr progress lines; 0 = silent
};

struct EpochStats {
    double loss = 0.0;       // mean batch loss
    double data_term = 0.0;  // mean batch NLL / MSE term
    double kl_term = 0.0;    // mean weighted KL term
    double seconds = 0.0;    // wall time (excluded from deterministic outputs)
};

struct TrainLog {
    std::vector<EpochStats> epochs;
};

/// Feature/target pair ready for batching: features [n,d] or [n,h,w,c],
/// targets [n,1].
struct TrainData {
    Tensor features;
    Tensor targets;
    std::size_t size() const { return targets.size(); }
};

TrainData gather_rows(const TrainData& data, const std::vector<std::size_t>& idx);

struct AdamState {
    Tensor m;
    Tensor v;
};

/// Standard Adam update with bias correction; `t` is the 1-based step count.
void adam_step(Tensor& value, const Tensor& grad, AdamState& state, std::size_t t,
               const TrainConfig& cfg);

class AdamOptimizer {
  public:
    AdamOptimizer(std::vector<Param*> params, const TrainConfig& cfg);
    void step();        // consumes accumulated gradients
    void zero_grads();

  private:
    std::vector<Param*> params_;
    std::vector<AdamState> states_;
    TrainConfig cfg_;
    std::size_t t_ = 0;
};

/// Minimize the variational free energy (or the variant's degenerate form)
/// with Adam; minibatch KL weight is uniform 1/M with M batches per epoch.
/// Non-finite losses abort with DivergedError. The whole loop is a
/// deterministic function of (model seed, config seed, data).
TrainLog train(Model& model, const TrainData& data, const TrainConfig& cfg);

}  // namespace bayescope
