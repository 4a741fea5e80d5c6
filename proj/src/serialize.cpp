#include "bayescope/serialize.hpp"

#include <bit>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "bayescope/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary container layout assumes a little-endian host");

namespace bayescope::io {

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string format_hex(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%a", x);
    return buf;
}

double parse_double(const std::string& s) {
    const char* begin = s.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin) throw IoError("malformed number: '" + s + "'");
    return v;
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hash_hex(const std::string& s) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(s)));
    return buf;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (!in.good() && !in.eof()) throw IoError("read failed: " + path.string());
    return std::move(ss).str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out.good()) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed: " + path.string() + ": " + ec.message());
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw IoError("missing CSV column: " + name);
    }
    bool has_column(const std::string& name) const {
        for (const auto& h : header)
            if (h == name) return true;
        return false;
    }
};

CsvTable read_csv(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty CSV: " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    t.header = split_csv_line(line);
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != t.header.size())
            throw IoError("ragged CSV row in " + path.string());
        t.rows.push_back(std::move(cells));
    }
    return t;
}

void append_raw(std::string& buf, const void* p, std::size_t bytes) {
    buf.append(static_cast<const char*>(p), bytes);
}

class RawReader {
  public:
    explicit RawReader(const std::string& buf) : buf_(buf) {}
    void read(void* p, std::size_t bytes) {
        if (pos_ + bytes > buf_.size()) throw IoError("truncated binary container");
        std::memcpy(p, buf_.data() + pos_, bytes);
        pos_ += bytes;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        read(&v, 4);
        return v;
    }
    bool exhausted() const { return pos_ == buf_.size(); }

  private:
    const std::string& buf_;
    std::size_t pos_ = 0;
};

}  // namespace

void write_dataset_csv(const std::filesystem::path& path, const SynthDataset& data) {
    if (data.config.mode != FeatureMode::vector)
        throw ContractError("write_dataset_csv: vector-mode datasets only");
    std::string out = "sample_id,age";
    if (data.config.wrist) out += ",feature_wrist";
    if (data.config.clavicle) out += ",feature_clavicle";
    if (data.config.wrist) out += ",truth_wrist";
    if (data.config.clavicle) out += ",truth_clavicle";
    out += ",noise_std\n";
    const std::size_t d = data.config.channel_count();
    for (std::size_t i = 0; i < data.size(); ++i) {
        out += std::to_string(i);
        out += ',' + format_double(data.ages[i]);
        for (std::size_t j = 0; j < d; ++j) out += ',' + format_double(data.features.at(i, j));
        for (std::size_t j = 0; j < d; ++j)
            out += ',' + format_double(data.truth_maturity.at(i, j));
        out += ',' + format_double(data.noise_std[i]);
        out += '\n';
    }
    write_file_atomic(path, out);
}

SynthDataset read_dataset_csv(const std::filesystem::path& path) {
    CsvTable t = read_csv(path);
    SynthDataset data;
    data.config.mode = FeatureMode::vector;
    data.config.wrist = t.has_column("feature_wrist");
    data.config.clavicle = t.has_column("feature_clavicle");
    if (data.config.channel_count() == 0) throw IoError("dataset has no feature columns");

    const std::size_t n = t.rows.size();
    if (n == 0) throw IoError("dataset CSV has no rows");
    const std::size_t d = data.config.channel_count();
    data.config.n = n;
    data.ages.resize(n);
    data.noise_std.resize(n);
    data.features = Tensor(Shape{n, d});
    data.truth_maturity = Tensor(Shape{n, d});

    const std::size_t c_age = t.column("age");
    const std::size_t c_noise = t.column("noise_std");
    std::vector<std::size_t> c_feat, c_truth;
    if (data.config.wrist) {
        c_feat.push_back(t.column("feature_wrist"));
        c_truth.push_back(t.column("truth_wrist"));
    }
    if (data.config.clavicle) {
        c_feat.push_back(t.column("feature_clavicle"));
        c_truth.push_back(t.column("truth_clavicle"));
    }
    for (std::size_t i = 0; i < n; ++i) {
        data.ages[i] = parse_double(t.rows[i][c_age]);
        data.noise_std[i] = parse_double(t.rows[i][c_noise]);
        for (std::size_t j = 0; j < d; ++j) {
            data.features.at(i, j) = parse_double(t.rows[i][c_feat[j]]);
            data.truth_maturity.at(i, j) = parse_double(t.rows[i][c_truth[j]]);
        }
    }
    return data;
}

void write_image_container(const std::filesystem::path& path, const SynthDataset& data) {
    if (data.config.mode != FeatureMode::image)
        throw ContractError("write_image_container: image-mode datasets only");
    const std::uint32_t n = static_cast<std::uint32_t>(data.size());
    const std::uint32_t h = static_cast<std::uint32_t>(data.features.extent(1));
    const std::uint32_t w = static_cast<std::uint32_t>(data.features.extent(2));
    const std::uint32_t c = static_cast<std::uint32_t>(data.features.extent(3));
    const std::uint32_t tc = static_cast<std::uint32_t>(data.truth_maturity.extent(1));
    const std::uint32_t reserved = 0;

    std::string buf;
    buf.reserve(32 + 8 * (data.features.size() + n * (2 + tc)));
    buf.append("BAYIMG01", 8);
    for (std::uint32_t v : {n, h, w, c, tc, reserved}) append_raw(buf, &v, 4);
    append_raw(buf, data.features.data(), 8 * data.features.size());
    append_raw(buf, data.ages.data(), 8 * n);
    append_raw(buf, data.truth_maturity.data(), 8 * data.truth_maturity.size());
    append_raw(buf, data.noise_std.data(), 8 * n);
    write_file_atomic(path, buf);
}

SynthDataset read_image_container(const std::filesystem::path& path) {
    const std::string buf = read_file(path);
    RawReader r(buf);
    char magic[8];
    r.read(magic, 8);
    if (std::memcmp(magic, "BAYIMG01", 8) != 0)
        throw IoError("not an image container: " + path.string());
    const std::uint32_t n = r.u32(), h = r.u32(), w = r.u32(), c = r.u32();
    const std::uint32_t tc = r.u32();
    (void)r.u32();  // reserved
    if (n == 0 || h == 0 || w == 0 || c == 0 || tc == 0)
        throw IoError("degenerate container dims: " + path.string());

    SynthDataset data;
    data.config.mode = FeatureMode::image;
    data.config.n = n;
    data.config.image_size = h;
    data.config.wrist = tc >= 1;
    data.config.clavicle = tc >= 2;
    data.features = Tensor(Shape{n, h, w, c});
    data.ages.resize(n);
    data.truth_maturity = Tensor(Shape{n, tc});
    data.noise_std.resize(n);
    r.read(data.features.data(), 8 * data.features.size());
    r.read(data.ages.data(), 8 * n);
    r.read(data.truth_maturity.data(), 8 * data.truth_maturity.size());
    r.read(data.noise_std.data(), 8 * n);
    if (!r.exhausted()) throw IoError("trailing bytes in container: " + path.string());
    return data;
}

void write_dataset(const std::filesystem::path& path, const SynthDataset& data) {
    if (data.config.mode == FeatureMode::vector)
        write_dataset_csv(path, data);
    else
        write_image_container(path, data);
}

SynthDataset read_dataset(const std::filesystem::path& path) {
    return path.extension() == ".csv" ? read_dataset_csv(path) : read_image_container(path);
}

void write_predictions_csv(const std::filesystem::path& path, const PredictionTable& table) {
    if (table.preds.size() != table.ages.size())
        throw ContractError("write_predictions_csv: length mismatch");
    std::string out =
        "sample_id,true_age,mu_hat,epistemic_var,aleatoric_var,total_var,passes,"
        "aleatoric_learned\n";
    for (std::size_t i = 0; i < table.preds.size(); ++i) {
        const UncertaintyReport& p = table.preds[i];
        out += std::to_string(i);
        out += ',' + format_double(table.ages[i]);
        out += ',' + format_double(p.mu_hat);
        out += ',' + format_double(p.epistemic_var);
        out += ',' + format_double(p.aleatoric_var);
        out += ',' + format_double(p.total_var());
        out += ',' + std::to_string(p.passes);
        out += ',' + std::string(p.aleatoric_learned ? "1" : "0");
        out += '\n';
    }
    write_file_atomic(path, out);
}

PredictionTable read_predictions_csv(const std::filesystem::path& path) {
    CsvTable t = read_csv(path);
    PredictionTable table;
    const std::size_t c_age = t.column("true_age");
    const std::size_t c_mu = t.column("mu_hat");
    const std::size_t c_ep = t.column("epistemic_var");
    const std::size_t c_al = t.column("aleatoric_var");
    const std::size_t c_tot = t.column("total_var");
    const std::size_t c_passes = t.column("passes");
    const std::size_t c_learned = t.column("aleatoric_learned");
    for (const auto& row : t.rows) {
        UncertaintyReport p;
        p.mu_hat = parse_double(row[c_mu]);
        p.epistemic_var = parse_double(row[c_ep]);
        p.aleatoric_var = parse_double(row[c_al]);
        p.passes = static_cast<std::size_t>(std::stoull(row[c_passes]));
        p.aleatoric_learned = row[c_learned] == "1";
        const double total = parse_double(row[c_tot]);
        if (total != p.epistemic_var + p.aleatoric_var)
            throw IoError("prediction row violates the variance decomposition identity");
        table.preds.push_back(p);
        table.ages.push_back(parse_double(row[c_age]));
    }
    return table;
}

void write_scatter_csv(const std::filesystem::path& path, const std::vector<ScatterRow>& rows) {
    std::string out = "true_age,mu_hat,epistemic_std,aleatoric_std\n";
    for (const ScatterRow& r : rows) {
        out += format_double(r.true_age);
        out += ',' + format_double(r.mu_hat);
        out += ',' + format_double(r.epistemic_std);
        out += ',' + format_double(r.aleatoric_std);
        out += '\n';
    }
    write_file_atomic(path, out);
}

void write_profile_csv(const std::filesystem::path& path, const std::vector<ProfileBin>& bins) {
    std::string out = "age_lo,mean_epistemic_var,mean_aleatoric_var,count\n";
    for (const ProfileBin& b : bins) {
        out += format_double(b.age_lo);
        out += ',' + format_double(b.mean_epistemic_var);
        out += ',' + format_double(b.mean_aleatoric_var);
        out += ',' + std::to_string(b.count);
        out += '\n';
    }
    write_file_atomic(path, out);
}

void write_trainlog_csv(const std::filesystem::path& path, const TrainLog& log) {
    std::string out = "epoch,loss,data_term,kl_term\n";
    for (std::size_t e = 0; e < log.epochs.size(); ++e) {
        out += std::to_string(e);
        out += ',' + format_double(log.epochs[e].loss);
        out += ',' + format_double(log.epochs[e].data_term);
        out += ',' + format_double(log.epochs[e].kl_term);
        out += '\n';
    }
    write_file_atomic(path, out);
}

json eval_report_to_json(const EvalReport& report) {
    json profile = json::array();
    for (const ProfileBin& b : report.profile)
        profile.push_back({{"age_lo", b.age_lo},
                           {"mean_epistemic_var", b.mean_epistemic_var},
                           {"mean_aleatoric_var", b.mean_aleatoric_var},
                           {"count", b.count}});
    return json{{"variant", report.variant},
                {"mae", report.mae.mean},
                {"mae_std", report.mae.std},
                {"coverage_z1", report.coverage_z1},
                {"coverage_z2", report.coverage_z2},
                {"profile", profile}};
}

void write_eval_report(const std::filesystem::path& path, const EvalReport& report) {
    write_file_atomic(path, eval_report_to_json(report).dump(2) + "\n");
}

EvalReport read_eval_report(const std::filesystem::path& path) {
    json j = json::parse(read_file(path), nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw IoError("malformed report JSON: " + path.string());
    EvalReport rep;
    rep.variant = j.at("variant").get<std::string>();
    rep.mae.mean = j.at("mae").get<double>();
    rep.mae.std = j.at("mae_std").get<double>();
    rep.coverage_z1 = j.at("coverage_z1").get<double>();
    rep.coverage_z2 = j.at("coverage_z2").get<double>();
    for (const json& b : j.at("profile"))
        rep.profile.push_back(ProfileBin{b.at("age_lo").get<double>(),
                                         b.at("mean_epistemic_var").get<double>(),
                                         b.at("mean_aleatoric_var").get<double>(),
                                         b.at("count").get<std::size_t>()});
    return rep;
}

json spec_to_json(const ModelSpec& spec) {
    return json{{"variant", variant_name(spec.variant)},
                {"input", input_kind_name(spec.input)},
                {"input_dim", spec.input_dim},
                {"image_size", spec.image_size},
                {"image_channels", spec.image_channels},
                {"prior_sigma", spec.prior.sigma_p},
                {"seed", spec.seed},
                {"input_shift", spec.input_shift},
                {"input_scale", spec.input_scale}};
}

ModelSpec spec_from_json(const json& j) {
    ModelSpec spec;
    spec.variant = variant_from_name(j.at("variant").get<std::string>());
    spec.input = input_kind_from_name(j.at("input").get<std::string>());
    spec.input_dim = j.at("input_dim").get<std::size_t>();
    spec.image_size = j.at("image_size").get<std::size_t>();
    spec.image_channels = j.at("image_channels").get<std::size_t>();
    spec.prior.sigma_p = j.at("prior_sigma").get<double>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.input_shift = j.at("input_shift").get<std::vector<double>>();
    spec.input_scale = j.at("input_scale").get<std::vector<double>>();
    return spec;
}

void save_checkpoint(const std::filesystem::path& path, Model& model, std::uint64_t train_seed,
                     const TrainLog& log) {
    json params = json::object();
    for (Param* p : model.params()) {
        json data = json::array();
        for (std::size_t i = 0; i < p->value.size(); ++i)
            data.push_back(format_hex(p->value[i]));
        json shape = json::array();
        for (std::size_t e : p->value.shape()) shape.push_back(e);
        params[p->name] = json{{"shape", shape}, {"data", std::move(data)}};
    }
    json summary = json::object();
    summary["epochs"] = log.epochs.size();
    const EpochStats last = log.epochs.empty() ? EpochStats{} : log.epochs.back();
    summary["final_loss"] = format_hex(last.loss);
    summary["final_data_term"] = format_hex(last.data_term);
    summary["final_kl_term"] = format_hex(last.kl_term);

    json j{{"format_version", 1},
           {"spec", spec_to_json(model.spec())},
           {"train_seed", train_seed},
           {"train_summary", summary},
           {"params", std::move(params)}};
    write_file_atomic(path, j.dump(1) + "\n");
}

Model load_checkpoint(const std::filesystem::path& path, Checkpoint* meta) {
    json j = json::parse(read_file(path), nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw IoError("malformed checkpoint JSON: " + path.string());
    if (j.at("format_version").get<int>() != 1)
        throw IoError("unsupported checkpoint version in " + path.string());

    Model model = build(spec_from_json(j.at("spec")));
    const json& params = j.at("params");
    for (Param* p : model.params()) {
        if (!params.contains(p->name))
            throw IoError("checkpoint missing parameter " + p->name);
        const json& entry = params.at(p->name);
        const json& shape = entry.at("shape");
        if (shape.size() != p->value.ndim())
            throw IoError("checkpoint shape mismatch for " + p->name);
        for (std::size_t d = 0; d < p->value.ndim(); ++d)
            if (shape[d].get<std::size_t>() != p->value.extent(d))
                throw IoError("checkpoint shape mismatch for " + p->name);
        const json& data = entry.at("data");
        if (data.size() != p->value.size())
            throw IoError("checkpoint size mismatch for " + p->name);
        for (std::size_t i = 0; i < p->value.size(); ++i)
            p->value[i] = parse_double(data[i].get<std::string>());
    }

    if (meta) {
        meta->format_version = 1;
        meta->spec = model.spec();
        meta->train_seed = j.at("train_seed").get<std::uint64_t>();
        const json& s = j.at("train_summary");
        meta->summary.epochs = s.at("epochs").get<std::size_t>();
        meta->summary.final_loss = parse_double(s.at("final_loss").get<std::string>());
        meta->summary.final_data_term = parse_double(s.at("final_data_term").get<std::string>());
        meta->summary.final_kl_term = parse_double(s.at("final_kl_term").get<std::string>());
    }
    return model;
}

}  // namespace bayescope::io
