#include "bayescope/eval.hpp"

#include <cmath>
#include <map>

#include "bayescope/errors.hpp"

namespace bayescope {

namespace {

void check_lengths(const std::vector<UncertaintyReport>& preds,
                   const std::vector<double>& targets) {
    if (preds.empty() || preds.size() != targets.size())
        throw ContractError("evaluation: predictions and targets must be equal-length, non-empty");
}

}  // namespace

MaeResult mae(const std::vector<UncertaintyReport>& preds, const std::vector<double>& targets) {
    check_lengths(preds, targets);
    const std::size_t n = preds.size();
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += std::fabs(preds[i].mu_hat - targets[i]);
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double e = std::fabs(preds[i].mu_hat - targets[i]) - mean;
        sq += e * e;
    }
    return MaeResult{mean, std::sqrt(sq / static_cast<double>(n))};
}

double coverage(const std::vector<UncertaintyReport>& preds, const std::vector<double>& targets,
                double z) {
    check_lengths(preds, targets);
    if (!(z > 0.0)) throw ContractError("coverage: z must be positive");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (std::fabs(targets[i] - preds[i].mu_hat) <= z * std::sqrt(preds[i].total_var())) ++hit;
    return static_cast<double>(hit) / static_cast<double>(preds.size());
}

std::vector<ProfileBin> uncertainty_profile(const std::vector<UncertaintyReport>& preds,
                                            const std::vector<double>& targets,
                                            double bin_width) {
    check_lengths(preds, targets);
    if (!(bin_width > 0.0)) throw ContractError("uncertainty_profile: bin width must be positive");
    std::map<long, ProfileBin> bins;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        long key = static_cast<long>(std::floor(targets[i] / bin_width));
        ProfileBin& b = bins[key];
        b.age_lo = static_cast<double>(key) * bin_width;
        b.mean_epistemic_var += preds[i].epistemic_var;
        b.mean_aleatoric_var += preds[i].aleatoric_var;
        b.count += 1;
    }
    std::vector<ProfileBin> out;
    out.reserve(bins.size());
    for (auto& [key, b] : bins) {
        b.mean_epistemic_var /= static_cast<double>(b.count);
        b.mean_aleatoric_var /= static_cast<double>(b.count);
        out.push_back(b);
    }
    return out;
}

std::vector<ScatterRow> scatter_data(const std::vector<UncertaintyReport>& preds,
                                     const std::vector<double>& targets) {
    check_lengths(preds, targets);
    std::vector<ScatterRow> rows(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i)
        rows[i] = ScatterRow{targets[i], preds[i].mu_hat, std::sqrt(preds[i].epistemic_var),
                             std::sqrt(preds[i].aleatoric_var)};
    return rows;
}

EvalReport evaluate(const std::string& variant, const std::vector<UncertaintyReport>& preds,
                    const std::vector<double>& targets) {
    EvalReport rep;
    rep.variant = variant;
    rep.mae = mae(preds, targets);
    rep.coverage_z1 = coverage(preds, targets, 1.0);
    rep.coverage_z2 = coverage(preds, targets, 2.0);
    rep.profile = uncertainty_profile(preds, targets, 1.0);
    return rep;
}

}  // namespace bayescope
