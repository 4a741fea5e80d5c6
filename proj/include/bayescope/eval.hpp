#pragma once

#include <string>
#include <vector>

#include "bayescope/infer.hpp"

namespace bayescope {

struct MaeResult {
    double mean = 0.0;
    double std = 0.0;  // population std of absolute errors
};

struct ProfileBin {
    double age_lo = 0.0;  // bin covers [age_lo, age_lo + width)
    double mean_epistemic_var = 0.0;
    double mean_aleatoric_var = 0.0;
    std::size_t count = 0;
};

struct ScatterRow {
    double true_age = 0.0;
    double mu_hat = 0.0;
    double epistemic_std = 0.0;
    double aleatoric_std = 0.0;
};

struct EvalReport {
    std::string variant;
    MaeResult mae;
    double coverage_z1 = 0.0;
    double coverage_z2 = 0.0;
    std::vector<ProfileBin> profile;
};

/// Mean and population std of |mu_hat - y|.
MaeResult mae(const std::vector<UncertaintyReport>& preds, const std::vector<double>& targets);

/// Fraction of samples with |y - mu_hat| <= z * sqrt(total predictive variance).
double coverage(const std::vector<UncertaintyReport>& preds, const std::vector<double>& targets,
                double z);

/// Group by age bin (floor(age / width) * width) and average each variance
/// component; bins are returned in ascending age order, empty bins omitted.
std::vector<ProfileBin> uncertainty_profile(const std::vector<UncertaintyReport>& preds,
                                            const std::vector<double>& targets,
                                            double bin_width = 1.0);

std::vector<ScatterRow> scatter_data(const std::vector<UncertaintyReport>& preds,
                                     const std::vector<double>& targets);

EvalReport evaluate(const std::string& variant, const std::vector<UncertaintyReport>& preds,
                    const std::vector<double>& targets);

}  // namespace bayescope
