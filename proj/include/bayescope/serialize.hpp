#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "bayescope/eval.hpp"
#include "bayescope/model.hpp"
#include "bayescope/synth.hpp"

namespace bayescope::io {

using json = nlohmann::json;

// Number formatting. Text tables use shortest-round-trip decimal (%.17g is
// exact for doubles); checkpoints use hex-float (%a) so the bitwise
// round-trip guarantee is visibly exact.
std::string format_double(double x);
std::string format_hex(double x);
double parse_double(const std::string& s);  // accepts both encodings

std::uint64_t fnv1a64(const std::string& s);
std::string hash_hex(const std::string& s);

std::string read_file(const std::filesystem::path& path);

/// Write to `<path>.tmp` then rename: a crashed run can never leave a
/// partial file at the final path.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

// --- datasets ---------------------------------------------------------

// Vector mode: CSV with one row per sample
//   (sample_id, age, feature_<channel>..., truth_<channel>..., noise_std).
void write_dataset_csv(const std::filesystem::path& path, const SynthDataset& data);
SynthDataset read_dataset_csv(const std::filesystem::path& path);

// Image mode: little-endian binary container (see README for layout):
//   magic "BAYIMG01"; u32 n, h, w, c, truth_channels, reserved;
//   f64 pixels [n*h*w*c]; f64 ages [n]; f64 truth [n*tc]; f64 noise_std [n].
void write_image_container(const std::filesystem::path& path, const SynthDataset& data);
SynthDataset read_image_container(const std::filesystem::path& path);

void write_dataset(const std::filesystem::path& path, const SynthDataset& data);
SynthDataset read_dataset(const std::filesystem::path& path);

// --- tabular outputs --------------------------------------------------

struct PredictionTable {
    std::vector<UncertaintyReport> preds;
    std::vector<double> ages;
};

// CSV columns: sample_id, true_age, mu_hat, epistemic_var, aleatoric_var,
// total_var, passes, aleatoric_learned. total_var is emitted as the exact
// sum of the two components.
void write_predictions_csv(const std::filesystem::path& path, const PredictionTable& table);
PredictionTable read_predictions_csv(const std::filesystem::path& path);

void write_scatter_csv(const std::filesystem::path& path, const std::vector<ScatterRow>& rows);
void write_profile_csv(const std::filesystem::path& path, const std::vector<ProfileBin>& bins);

// CSV columns: epoch, loss, data_term, kl_term. Wall time stays in memory
// only; every file a command writes must be byte-stable across reruns.
void write_trainlog_csv(const std::filesystem::path& path, const TrainLog& log);

json eval_report_to_json(const EvalReport& report);
void write_eval_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_eval_report(const std::filesystem::path& path);

// --- model checkpoints ------------------------------------------------

json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const json& j);

struct TrainSummary {
    std::size_t epochs = 0;
    double final_loss = 0.0;
    double final_data_term = 0.0;
    double final_kl_term = 0.0;
};

struct Checkpoint {
    int format_version = 1;
    ModelSpec spec;
    std::uint64_t train_seed = 0;
    TrainSummary summary;
};

void save_checkpoint(const std::filesystem::path& path, Model& model, std::uint64_t train_seed,
                     const TrainLog& log);

/// Rebuilds the model from the stored spec and overwrites every parameter
/// with the stored hex-float values; forward outputs are bitwise identical
/// to the saved model's.
Model load_checkpoint(const std::filesystem::path& path, Checkpoint* meta = nullptr);

}  // namespace bayescope::io
