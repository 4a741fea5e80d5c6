#include "bayescope/experiment.hpp"

#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "bayescope/errors.hpp"
#include "bayescope/infer.hpp"
#include "bayescope/kernels.hpp"
#include "bayescope/rng.hpp"

namespace bayescope {

namespace fs = std::filesystem;
using io::json;
using io::PredictionTable;

namespace {

// Seed-derivation tags; distinct constants keep every stream independent.
constexpr std::uint64_t kTagData = 0xda7a'0001ULL;
constexpr std::uint64_t kTagSplit = 0x5b11'0002ULL;
constexpr std::uint64_t kTagInit = 0x1d17'0000ULL;
constexpr std::uint64_t kTagTrain = 0x7a31'0000ULL;
constexpr std::uint64_t kTagPredict = 0x9e01'0000ULL;

std::uint64_t variant_tag(std::uint64_t base, Variant v) {
    return base + static_cast<std::uint64_t>(v);
}

void reject_unknown_keys(const json& j, std::initializer_list<const char*> known,
                         const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) ok = true;
        if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::uint64_t ExperimentConfig::data_seed() const { return RngStream::mix(seed, kTagData); }
std::uint64_t ExperimentConfig::split_seed() const { return RngStream::mix(seed, kTagSplit); }
std::uint64_t ExperimentConfig::init_seed(Variant v) const {
    return RngStream::mix(seed, variant_tag(kTagInit, v));
}
std::uint64_t ExperimentConfig::train_seed(Variant v) const {
    return RngStream::mix(seed, variant_tag(kTagTrain, v));
}
std::uint64_t ExperimentConfig::predict_seed(Variant v) const {
    return RngStream::mix(seed, variant_tag(kTagPredict, v));
}

TrainConfig ExperimentConfig::train_for(Variant v) const {
    TrainConfig tc = train;
    tc.seed = train_seed(v);
    if (epochs_bayesian > 0 && variant_is_bayesian(v)) tc.epochs = epochs_bayesian;
    return tc;
}

ModelSpec ExperimentConfig::model_spec(Variant v) const {
    ModelSpec spec;
    spec.variant = v;
    spec.input = generator.mode == FeatureMode::vector ? InputKind::vector : InputKind::image;
    spec.input_dim = generator.channel_count();
    spec.image_size = generator.image_size;
    spec.image_channels = 1;
    spec.prior.sigma_p = prior_sigma;
    spec.seed = init_seed(v);
    return spec;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
    reject_unknown_keys(j, {"seed", "passes", "train_frac", "generator", "model", "train"},
                        "experiment config");
    ExperimentConfig cfg;
    maybe(j, "seed", cfg.seed);
    maybe(j, "passes", cfg.passes);
    maybe(j, "train_frac", cfg.train_frac);

    if (j.contains("generator")) {
        const json& g = j.at("generator");
        reject_unknown_keys(g,
                            {"n", "age_lo", "age_hi", "channels", "wrist_sat", "clavicle_sat",
                             "k", "feature_noise_std", "mode", "image_size"},
                            "generator");
        maybe(g, "n", cfg.generator.n);
        maybe(g, "age_lo", cfg.generator.age_lo);
        maybe(g, "age_hi", cfg.generator.age_hi);
        if (g.contains("channels")) {
            cfg.generator.wrist = cfg.generator.clavicle = false;
            for (const json& c : g.at("channels")) {
                const std::string name = c.get<std::string>();
                if (name == "wrist")
                    cfg.generator.wrist = true;
                else if (name == "clavicle")
                    cfg.generator.clavicle = true;
                else
                    throw ConfigError("unknown channel '" + name + "'");
            }
        }
        maybe(g, "wrist_sat", cfg.generator.wrist_sat);
        maybe(g, "clavicle_sat", cfg.generator.clavicle_sat);
        maybe(g, "k", cfg.generator.k);
        maybe(g, "feature_noise_std", cfg.generator.feature_noise_std);
        if (g.contains("mode")) {
            const std::string mode = g.at("mode").get<std::string>();
            if (mode == "vector")
                cfg.generator.mode = FeatureMode::vector;
            else if (mode == "image")
                cfg.generator.mode = FeatureMode::image;
            else
                throw ConfigError("unknown generator mode '" + mode + "'");
        }
        maybe(g, "image_size", cfg.generator.image_size);
    }

    if (j.contains("model")) {
        const json& m = j.at("model");
        reject_unknown_keys(m, {"variant", "prior_sigma"}, "model");
        if (m.contains("variant")) cfg.variant = variant_from_name(m.at("variant").get<std::string>());
        maybe(m, "prior_sigma", cfg.prior_sigma);
    }

    if (j.contains("train")) {
        const json& t = j.at("train");
        reject_unknown_keys(t,
                            {"epochs", "epochs_bayesian", "batch_size", "learning_rate", "beta1",
                             "beta2", "adam_eps", "log_every"},
                            "train");
        maybe(t, "epochs", cfg.train.epochs);
        maybe(t, "epochs_bayesian", cfg.epochs_bayesian);
        maybe(t, "batch_size", cfg.train.batch_size);
        maybe(t, "learning_rate", cfg.train.learning_rate);
        maybe(t, "beta1", cfg.train.beta1);
        maybe(t, "beta2", cfg.train.beta2);
        maybe(t, "adam_eps", cfg.train.adam_eps);
        maybe(t, "log_every", cfg.train.log_every);
    }

    if (!(cfg.train_frac > 0.0 && cfg.train_frac < 1.0))
        throw ConfigError("train_frac must be in (0,1)");
    if (cfg.passes == 0) throw ConfigError("passes must be >= 1");
    if (!(cfg.train.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (cfg.train.batch_size == 0) throw ConfigError("batch_size must be >= 1");
    cfg.generator.validate();
    return cfg;
}

json ExperimentConfig::to_json() const {
    json channels = json::array();
    if (generator.wrist) channels.push_back("wrist");
    if (generator.clavicle) channels.push_back("clavicle");
    return json{
        {"seed", seed},
        {"passes", passes},
        {"train_frac", train_frac},
        {"generator",
         {{"n", generator.n},
          {"age_lo", generator.age_lo},
          {"age_hi", generator.age_hi},
          {"channels", channels},
          {"wrist_sat", generator.wrist_sat},
          {"clavicle_sat", generator.clavicle_sat},
          {"k", generator.k},
          {"feature_noise_std", generator.feature_noise_std},
          {"mode", generator.mode == FeatureMode::vector ? "vector" : "image"},
          {"image_size", generator.image_size}}},
        {"model", {{"variant", variant_name(variant)}, {"prior_sigma", prior_sigma}}},
        {"train",
         {{"epochs", train.epochs},
          {"epochs_bayesian", epochs_bayesian},
          {"batch_size", train.batch_size},
          {"learning_rate", train.learning_rate},
          {"beta1", train.beta1},
          {"beta2", train.beta2},
          {"adam_eps", train.adam_eps},
          {"log_every", train.log_every}}}};
}

std::string ExperimentConfig::config_hash() const { return io::hash_hex(to_json().dump()); }

namespace {

ExperimentConfig load_config(const fs::path& path) {
    json j = json::parse(io::read_file(path), nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path.string());
    return ExperimentConfig::from_json(j);
}

std::string dataset_filename(const GeneratorConfig& g, const std::string& stem) {
    return stem + (g.mode == FeatureMode::vector ? ".csv" : ".bin");
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const ExperimentConfig& cfg, const std::vector<std::string>& outputs) {
    json j{{"command", command},
           {"config", cfg.to_json()},
           {"config_hash", cfg.config_hash()},
           {"outputs", outputs}};
    io::write_file_atomic(out_dir / "manifest.json", j.dump(2) + "\n");
}

double band_mean_aleatoric(const PredictionTable& t, double lo, double hi) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < t.ages.size(); ++i)
        if (t.ages[i] >= lo && t.ages[i] <= hi) {
            sum += t.preds[i].aleatoric_var;
            ++count;
        }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

VariantOutcome summarize_outcome(const std::string& name, const PredictionTable& table) {
    VariantOutcome out;
    out.variant = name;
    out.report = evaluate(name, table.preds, table.ages);
    double ep = 0.0;
    for (const UncertaintyReport& p : table.preds) ep += p.epistemic_var;
    out.mean_epistemic_var = ep / static_cast<double>(table.preds.size());
    out.mean_aleatoric_young = band_mean_aleatoric(table, 13.0, 17.0);
    out.mean_aleatoric_old = band_mean_aleatoric(table, 20.0, 24.0);
    out.aleatoric_ratio = out.mean_aleatoric_young > 0.0
                              ? out.mean_aleatoric_old / out.mean_aleatoric_young
                              : 0.0;
    return out;
}

}  // namespace

VariantOutcome run_variant(const ExperimentConfig& cfg, Variant variant,
                           const SynthDataset& train_set, const SynthDataset& test_set,
                           const fs::path& out_dir) {
    ModelSpec ms = cfg.model_spec(variant);
    fit_input_stats(ms, train_set.features);
    Model model = build(ms);
    TrainConfig tc = cfg.train_for(variant);
    TrainLog log = train(model, train_set.to_train_data(), tc);

    PredictionTable table;
    table.preds = predict_batch(model, test_set.features, cfg.passes, cfg.predict_seed(variant));
    table.ages = test_set.ages;
    VariantOutcome out = summarize_outcome(variant_name(variant), table);

    if (!out_dir.empty()) {
        io::save_checkpoint(out_dir / "checkpoint.json", model, tc.seed, log);
        io::write_trainlog_csv(out_dir / "trainlog.csv", log);
        io::write_predictions_csv(out_dir / "predictions.csv", table);
        io::write_eval_report(out_dir / "report.json", out.report);
        io::write_scatter_csv(out_dir / "scatter.csv", scatter_data(table.preds, table.ages));
        io::write_profile_csv(out_dir / "profile.csv",
                              uncertainty_profile(table.preds, table.ages));
    }
    return out;
}

ExperimentConfig suite_config(const std::string& suite, std::uint64_t seed) {
    ExperimentConfig cfg;
    cfg.seed = seed;
    cfg.generator.wrist = true;
    // Feature noise 0.25 keeps the post-saturation inversion genuinely ambiguous
    // (wrist residual std > 2 y past age 20) without drowning the pre-saturation
    // signal; clavicle saturation at 24.5 leaves that channel informative across
    // the full age range so fusing it recovers the old ages.
    cfg.generator.feature_noise_std = 0.25;
    cfg.generator.clavicle_sat = 24.5;
    // Deterministic heads overfit their σ̂ long before the Bayesian variants'
    // weight noise anneals, hence the split budget.
    cfg.train.epochs = 1500;
    cfg.epochs_bayesian = 12000;
    cfg.train.batch_size = 32;
    if (suite == "both_channels") {
        cfg.generator.clavicle = true;
        cfg.prior_sigma = 0.3;
    } else if (suite == "wrist_only") {
        cfg.generator.clavicle = false;
        // The wider prior matters here: at 0.3 the posterior cannot push σ̂ low
        // enough on the young range and the saturation contrast flattens out.
        cfg.prior_sigma = 0.5;
    } else {
        throw ConfigError("unknown suite '" + suite + "' (both_channels, wrist_only)");
    }
    return cfg;
}

namespace {

// The composite seed drives every stream; generator.seed is never taken from
// the config directly (it is not even a config key).
SynthDataset generate_for(const ExperimentConfig& cfg) {
    GeneratorConfig g = cfg.generator;
    g.seed = cfg.data_seed();
    return generate(g);
}

}  // namespace

SuiteResult run_suite(const ExperimentConfig& cfg, const fs::path& out_dir, std::size_t parallel) {
    if (parallel == 0) throw ConfigError("parallel must be >= 1");
    SynthDataset data = generate_for(cfg);
    auto [train_set, test_set] = split(data, cfg.train_frac, cfg.split_seed());

    std::vector<std::string> outputs;
    if (!out_dir.empty()) {
        const std::string name = dataset_filename(cfg.generator, "dataset");
        io::write_dataset(out_dir / name, data);
        io::write_dataset(out_dir / dataset_filename(cfg.generator, "train"), train_set);
        io::write_dataset(out_dir / dataset_filename(cfg.generator, "test"), test_set);
        outputs = {name, dataset_filename(cfg.generator, "train"),
                   dataset_filename(cfg.generator, "test")};
    }

    const Variant order[] = {Variant::cnn, Variant::cnn_sigma, Variant::bcnn,
                             Variant::bcnn_sigma};
    SuiteResult result;
    result.rows.resize(4);

    std::exception_ptr failure;
    std::mutex failure_mu;
    for (std::size_t base = 0; base < 4; base += parallel) {
        std::vector<std::thread> workers;
        for (std::size_t i = base; i < std::min<std::size_t>(4, base + parallel); ++i) {
            workers.emplace_back([&, i] {
                try {
                    fs::path vdir =
                        out_dir.empty() ? fs::path() : out_dir / variant_name(order[i]);
                    result.rows[i] = run_variant(cfg, order[i], train_set, test_set, vdir);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mu);
                    if (!failure) failure = std::current_exception();
                }
            });
        }
        for (auto& w : workers) w.join();
        if (failure) std::rethrow_exception(failure);
    }

    if (!out_dir.empty()) {
        std::string csv =
            "variant,mae,mae_std,coverage_z1,coverage_z2,mean_epistemic_var,"
            "mean_aleatoric_13_17,mean_aleatoric_20_24,aleatoric_ratio\n";
        for (const VariantOutcome& row : result.rows) {
            csv += row.variant;
            csv += ',' + io::format_double(row.report.mae.mean);
            csv += ',' + io::format_double(row.report.mae.std);
            csv += ',' + io::format_double(row.report.coverage_z1);
            csv += ',' + io::format_double(row.report.coverage_z2);
            csv += ',' + io::format_double(row.mean_epistemic_var);
            csv += ',' + io::format_double(row.mean_aleatoric_young);
            csv += ',' + io::format_double(row.mean_aleatoric_old);
            csv += ',' + io::format_double(row.aleatoric_ratio);
            csv += '\n';
        }
        result.summary_path = out_dir / "summary.csv";
        io::write_file_atomic(result.summary_path, csv);
        for (const Variant v : order)
            for (const char* f :
                 {"checkpoint.json", "trainlog.csv", "predictions.csv", "report.json",
                  "scatter.csv", "profile.csv"})
                outputs.push_back(variant_name(v) + "/" + f);
        outputs.push_back("summary.csv");
        write_manifest(out_dir, "repro", cfg, outputs);
    }
    return result;
}

void cmd_generate(const fs::path& config_path, const fs::path& out_dir) {
    ExperimentConfig cfg = load_config(config_path);
    SynthDataset data = generate_for(cfg);
    const std::string name = dataset_filename(cfg.generator, "dataset");
    io::write_dataset(out_dir / name, data);
    write_manifest(out_dir, "generate", cfg, {name});
}

void cmd_train(const fs::path& config_path, const fs::path& out_dir) {
    ExperimentConfig cfg = load_config(config_path);
    SynthDataset data = generate_for(cfg);
    auto [train_set, test_set] = split(data, cfg.train_frac, cfg.split_seed());

    ModelSpec ms = cfg.model_spec(cfg.variant);
    fit_input_stats(ms, train_set.features);
    Model model = build(ms);
    TrainConfig tc = cfg.train_for(cfg.variant);
    TrainLog log = train(model, train_set.to_train_data(), tc);

    const std::string train_name = dataset_filename(cfg.generator, "train");
    const std::string test_name = dataset_filename(cfg.generator, "test");
    io::write_dataset(out_dir / train_name, train_set);
    io::write_dataset(out_dir / test_name, test_set);
    io::save_checkpoint(out_dir / "checkpoint.json", model, tc.seed, log);
    io::write_trainlog_csv(out_dir / "trainlog.csv", log);
    write_manifest(out_dir, "train", cfg,
                   {train_name, test_name, "checkpoint.json", "trainlog.csv"});
}

void cmd_predict(const fs::path& checkpoint_path, const fs::path& data_path, std::size_t passes,
                 std::uint64_t seed, const fs::path& out_dir) {
    if (passes == 0) throw ConfigError("passes must be >= 1");
    Model model = io::load_checkpoint(checkpoint_path);
    SynthDataset data = io::read_dataset(data_path);
    if (model.spec().input == InputKind::vector) {
        if (data.features.ndim() != 2 || data.features.extent(1) != model.spec().input_dim)
            throw ConfigError("dataset feature width does not match the checkpoint's input");
    } else if (data.features.ndim() != 4 ||
               data.features.extent(1) != model.spec().image_size) {
        throw ConfigError("dataset image size does not match the checkpoint's input");
    }

    PredictionTable table;
    table.preds = predict_batch(model, data.features, passes, seed);
    table.ages = data.ages;
    io::write_predictions_csv(out_dir / "predictions.csv", table);
}

void cmd_evaluate(const fs::path& predictions_path, const std::string& variant_label,
                  const fs::path& out_dir) {
    PredictionTable table = io::read_predictions_csv(predictions_path);
    EvalReport report = evaluate(variant_label, table.preds, table.ages);
    io::write_eval_report(out_dir / "report.json", report);
    io::write_scatter_csv(out_dir / "scatter.csv", scatter_data(table.preds, table.ages));
    io::write_profile_csv(out_dir / "profile.csv", uncertainty_profile(table.preds, table.ages));
}

void cmd_repro(const std::string& suite, std::uint64_t seed, const fs::path& out_dir,
               std::size_t parallel) {
    run_suite(suite_config(suite, seed), out_dir / suite, parallel);
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Uncertainty-aware age regression on synthetic maturity data"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out";
    std::string checkpoint_path, data_path, predictions_path;
    std::string suite, variant_label = "unlabeled";
    std::size_t passes = 20, parallel = 1;
    std::uint64_t seed = 1;

    CLI::App* gen = app.add_subcommand("generate", "Write a synthetic dataset");
    gen->add_option("--config", config_path, "Experiment config JSON")->required();
    gen->add_option("--out", out_dir, "Output directory");

    CLI::App* trn = app.add_subcommand("train", "Train the configured variant");
    trn->add_option("--config", config_path, "Experiment config JSON")->required();
    trn->add_option("--out", out_dir, "Output directory");

    CLI::App* prd = app.add_subcommand("predict", "Run stochastic forward passes");
    prd->add_option("--checkpoint", checkpoint_path, "Checkpoint JSON")->required();
    prd->add_option("--data", data_path, "Dataset file")->required();
    prd->add_option("--passes", passes, "Forward passes per sample");
    prd->add_option("--seed", seed, "Prediction seed");
    prd->add_option("--out", out_dir, "Output directory");

    CLI::App* evl = app.add_subcommand("evaluate", "Score a predictions file");
    evl->add_option("--predictions", predictions_path, "predictions.csv")->required();
    evl->add_option("--variant", variant_label, "Variant label for the report");
    evl->add_option("--out", out_dir, "Output directory");

    CLI::App* rep = app.add_subcommand("repro", "Full four-variant experiment");
    rep->add_option("suite", suite, "both_channels or wrist_only")->required();
    rep->add_option("--seed", seed, "Composite experiment seed");
    rep->add_option("--out", out_dir, "Output directory");
    rep->add_option("--parallel", parallel, "Concurrent variant workers");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) cmd_generate(config_path, out_dir);
        if (trn->parsed()) cmd_train(config_path, out_dir);
        if (prd->parsed()) cmd_predict(checkpoint_path, data_path, passes, seed, out_dir);
        if (evl->parsed()) cmd_evaluate(predictions_path, variant_label, out_dir);
        if (rep->parsed()) cmd_repro(suite, seed, out_dir, parallel);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 3;
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

}  // namespace bayescope
