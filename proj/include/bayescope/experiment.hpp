#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bayescope/serialize.hpp"

namespace bayescope {

/// One config fully determines every output file. Sub-seeds (data, split,
/// per-variant init/train/predict) are derived from the composite seed and
/// never set directly.
struct ExperimentConfig {
    GeneratorConfig generator;
    Variant variant = Variant::bcnn_sigma;
    double prior_sigma = 1.0;
    TrainConfig train;
    // Bayesian variants use a separate epoch budget (0 = same as train.epochs).
    // The KL term anneals the weight noise an order of magnitude slower than
    // Adam fits the mean, so bcnn/bcnn_sigma need far longer schedules than
    // the deterministic variants, which overfit their σ̂ heads well before that.
    std::size_t epochs_bayesian = 0;
    std::size_t passes = 20;
    double train_frac = 0.7;
    std::uint64_t seed = 1;

    std::uint64_t data_seed() const;
    std::uint64_t split_seed() const;
    std::uint64_t init_seed(Variant v) const;
    std::uint64_t train_seed(Variant v) const;
    std::uint64_t predict_seed(Variant v) const;

    ModelSpec model_spec(Variant v) const;
    TrainConfig train_for(Variant v) const;  // applies epochs_bayesian and the variant's train seed

    static ExperimentConfig from_json(const io::json& j);  // strict: unknown keys rejected
    io::json to_json() const;                              // canonical form (all fields)
    std::string config_hash() const;
};

/// Everything one trained variant produced on its test split.
struct VariantOutcome {
    std::string variant;
    EvalReport report;
    double mean_epistemic_var = 0.0;
    double mean_aleatoric_young = 0.0;  // ages in [13, 17]
    double mean_aleatoric_old = 0.0;    // ages in [20, 24]
    double aleatoric_ratio = 0.0;       // old / young
};

/// Train `variant` on the config's train split and evaluate on the test
/// split. When `out_dir` is non-empty, writes checkpoint.json, trainlog.csv,
/// predictions.csv, report.json, scatter.csv, profile.csv into it.
VariantOutcome run_variant(const ExperimentConfig& cfg, Variant variant,
                           const SynthDataset& train_set, const SynthDataset& test_set,
                           const std::filesystem::path& out_dir);

struct SuiteResult {
    std::vector<VariantOutcome> rows;  // fixed order: cnn, cnn_sigma, bcnn, bcnn_sigma
    std::filesystem::path summary_path;
};

/// Built-in experiment definitions: `both_channels` (wrist + clavicle
/// features) and `wrist_only` (the saturation setup). Throws ConfigError on
/// unknown names.
ExperimentConfig suite_config(const std::string& suite, std::uint64_t seed);

/// generate -> split -> per-variant train/predict/evaluate -> summary.csv.
/// `parallel` caps concurrent variant workers; results are identical for any
/// worker count.
SuiteResult run_suite(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                      std::size_t parallel = 1);

// Subcommand bodies (shared by the binary and the in-process CLI tests).
void cmd_generate(const std::filesystem::path& config_path, const std::filesystem::path& out_dir);
void cmd_train(const std::filesystem::path& config_path, const std::filesystem::path& out_dir);
void cmd_predict(const std::filesystem::path& checkpoint_path,
                 const std::filesystem::path& data_path, std::size_t passes, std::uint64_t seed,
                 const std::filesystem::path& out_dir);
void cmd_evaluate(const std::filesystem::path& predictions_path, const std::string& variant_label,
                  const std::filesystem::path& out_dir);
void cmd_repro(const std::string& suite, std::uint64_t seed, const std::filesystem::path& out_dir,
               std::size_t parallel);

/// Full argv-level entry point; maps error classes to exit codes
/// (0 ok, 2 config, 3 numeric divergence, 4 I/O).
int run_cli(int argc, const char* const* argv);

}  // namespace bayescope
