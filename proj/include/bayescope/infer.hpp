#pragma once

#include <cstdint>
#include <vector>

#include "bayescope/model.hpp"

namespace bayescope {

/// Predictive summary for one input. The variance split is the standard
/// moment decomposition over weight draws:
///   epistemic = population variance of the per-pass means,
///   aleatoric = mean of the per-pass noise variances,
/// so total_var() == Var-of-means + mean-of-variances holds exactly.
struct UncertaintyReport {
    double mu_hat = 0.0;
    double epistemic_var = 0.0;
    double aleatoric_var = 0.0;
    std::size_t passes = 0;
    bool aleatoric_learned = false;  // false => unit variance placeholder
    double total_var() const { return epistemic_var + aleatoric_var; }
};

/// Collapse per-pass (mu, sigma^2) draws into one report. Draws are sorted
/// before accumulation so the result is invariant to pass ordering; this is
/// what makes multi-threaded batch prediction bitwise equal to serial.
UncertaintyReport summarize_passes(const std::vector<double>& mus,
                                   const std::vector<double>& vars,
                                   bool aleatoric_learned);

/// T stochastic forward passes through one input (deterministic variants
/// collapse to a single mean-mode pass with exactly zero epistemic variance).
/// The model is not mutated; the reference is non-const only because weight
/// draws register parameter handles.
UncertaintyReport predict(Model& model, const Tensor& input, std::size_t passes,
                          std::uint64_t seed);

/// Batch prediction; each sample gets an independent derived stream, so the
/// result is identical for any worker count.
std::vector<UncertaintyReport> predict_batch(Model& model, const Tensor& inputs,
                                             std::size_t passes, std::uint64_t seed);

}  // namespace bayescope
