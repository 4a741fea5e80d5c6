#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "bayescope/tensor.hpp"
#include "bayescope/train.hpp"

namespace bayescope {

enum class FeatureMode { vector, image };

/// Synthetic "skeletal maturity" regression task. Each channel is a maturity
/// reading that tracks age linearly and then plateaus at its saturation
/// threshold (wrist at 18, clavicle at 24), with i.i.d. Gaussian feature
/// noise. Homoscedastic noise in feature space becomes heteroscedastic in
/// age space past saturation, which is the mechanism the uncertainty
/// experiments rely on.
struct GeneratorConfig {
    std::size_t n = 328;
    double age_lo = 13.0;
    double age_hi = 25.0;
    bool wrist = true;
    bool clavicle = false;
    double wrist_sat = 18.0;
    double clavicle_sat = 24.0;
    double k = 1.5;  // knee steepness
    double feature_noise_std = 0.05;
    FeatureMode mode = FeatureMode::vector;
    std::size_t image_size = 16;
    std::uint64_t seed = 0;

    std::size_t channel_count() const {
        return (wrist ? 1u : 0u) + (clavicle ? 1u : 0u);
    }
    void validate() const;  // throws ConfigError
};

struct SynthDataset {
    GeneratorConfig config;
    std::vector<double> ages;       // [n]
    Tensor features;                // [n,d] vector mode, [n,s,s,1] image mode
    Tensor truth_maturity;          // [n, channels], noise-free
    std::vector<double> noise_std;  // generative std per sample

    std::size_t size() const { return ages.size(); }
    TrainData to_train_data() const;
    SynthDataset subset(const std::vector<std::size_t>& idx) const;
};

/// m(a) = a - softplus(k*(a - sat))/k: identity for a << sat, flat at sat for
/// a >> sat, everywhere smooth and strictly increasing.
double maturity(double age, double sat, double k);

/// Ages uniform over [age_lo, age_hi]; per-sample derived streams make
/// generation order-free. Image mode renders a centered disk whose radius
/// grows with wrist maturity and a top bar whose length grows with clavicle
/// maturity, plus per-pixel noise.
SynthDataset generate(const GeneratorConfig& config);

/// Stratified split on one-year age bins: per-bin seeded shuffle, then
/// round(frac * bin_size) rows to train. Bins with fewer than two samples go
/// wholly to train.
std::pair<SynthDataset, SynthDataset> split(const SynthDataset& data, double train_frac,
                                            std::uint64_t seed);

}  // namespace bayescope
