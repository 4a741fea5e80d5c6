#include "bayescope/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "bayescope/errors.hpp"
#include "bayescope/prob.hpp"
#include "bayescope/rng.hpp"

namespace bayescope {

void GeneratorConfig::validate() const {
    if (n < 2) throw ConfigError("generator: n must be >= 2");
    if (!(age_lo < age_hi)) throw ConfigError("generator: age range must be non-empty");
    if (channel_count() == 0) throw ConfigError("generator: at least one channel required");
    if (wrist && !(age_lo < wrist_sat && wrist_sat < age_hi))
        throw ConfigError("generator: wrist saturation must lie inside the age range");
    if (clavicle && !(age_lo < clavicle_sat && clavicle_sat < age_hi))
        throw ConfigError("generator: clavicle saturation must lie inside the age range");
    if (!(k > 0.0)) throw ConfigError("generator: steepness must be positive");
    if (feature_noise_std < 0.0) throw ConfigError("generator: noise std must be >= 0");
    if (mode == FeatureMode::image && image_size < 8)
        throw ConfigError("generator: image size must be >= 8");
}

double maturity(double age, double sat, double k) {
    return age - prob::softplus(k * (age - sat)) / k;
}

TrainData SynthDataset::to_train_data() const {
    Tensor targets(Shape{size(), 1});
    std::copy(ages.begin(), ages.end(), targets.data());
    return TrainData{features, std::move(targets)};
}

SynthDataset SynthDataset::subset(const std::vector<std::size_t>& idx) const {
    SynthDataset out;
    out.config = config;
    out.config.n = idx.size();
    if (idx.empty()) return out;  // all-singleton-bin splits leave test empty
    out.ages.resize(idx.size());
    out.noise_std.resize(idx.size());

    Shape fs = features.shape();
    const std::size_t frow = features.size() / fs[0];
    fs[0] = idx.size();
    out.features = Tensor(fs);
    const std::size_t trow = truth_maturity.extent(1);
    out.truth_maturity = Tensor(Shape{idx.size(), trow});

    for (std::size_t i = 0; i < idx.size(); ++i) {
        const std::size_t s = idx[i];
        if (s >= size()) throw ContractError("subset: index out of range");
        out.ages[i] = ages[s];
        out.noise_std[i] = noise_std[s];
        std::copy(features.data() + s * frow, features.data() + (s + 1) * frow,
                  out.features.data() + i * frow);
        std::copy(truth_maturity.data() + s * trow, truth_maturity.data() + (s + 1) * trow,
                  out.truth_maturity.data() + i * trow);
    }
    return out;
}

namespace {

// Maturity normalized to [0,1] over the configured age range; drives the
// rendered shape sizes so image content saturates exactly when the vector
// features do.
double norm_maturity(double m, double sat, double k, const GeneratorConfig& cfg) {
    double lo = maturity(cfg.age_lo, sat, k);
    double hi = maturity(cfg.age_hi, sat, k);
    return (m - lo) / (hi - lo);
}

void render_image(double* px, std::size_t s, double wrist_norm, double clavicle_norm,
                  bool wrist, bool clavicle) {
    const double c = (static_cast<double>(s) - 1.0) / 2.0;
    if (wrist) {
        // Radius span keeps the disk clear of the clavicle bar rows.
        const double r = (0.10 + 0.22 * wrist_norm) * static_cast<double>(s);
        for (std::size_t i = 0; i < s; ++i)
            for (std::size_t j = 0; j < s; ++j) {
                double di = static_cast<double>(i) - c;
                double dj = static_cast<double>(j) - c;
                if (di * di + dj * dj <= r * r) px[i * s + j] += 1.0;
            }
    }
    if (clavicle) {
        const std::size_t len =
            1 + static_cast<std::size_t>(std::lround(clavicle_norm * static_cast<double>(s - 2)));
        for (std::size_t i = 0; i < 2 && i < s; ++i)
            for (std::size_t j = 0; j < len && j < s; ++j) px[i * s + j] += 1.0;
    }
}

}  // namespace

SynthDataset generate(const GeneratorConfig& config) {
    config.validate();
    const std::size_t n = config.n;
    const std::size_t d = config.channel_count();
    const std::size_t s = config.image_size;

    SynthDataset out;
    out.config = config;
    out.ages.resize(n);
    out.noise_std.assign(n, config.feature_noise_std);
    out.truth_maturity = Tensor(Shape{n, d});
    out.features = config.mode == FeatureMode::vector ? Tensor(Shape{n, d})
                                                      : Tensor(Shape{n, s, s, 1});

    for (std::size_t i = 0; i < n; ++i) {
        RngStream rng(RngStream::derived(config.seed, i));
        const double age = config.age_lo + rng.uniform() * (config.age_hi - config.age_lo);
        out.ages[i] = age;

        double m_wrist = 0.0, m_clav = 0.0;
        std::size_t ch = 0;
        if (config.wrist) {
            m_wrist = maturity(age, config.wrist_sat, config.k);
            out.truth_maturity.at(i, ch++) = m_wrist;
        }
        if (config.clavicle) {
            m_clav = maturity(age, config.clavicle_sat, config.k);
            out.truth_maturity.at(i, ch++) = m_clav;
        }

        if (config.mode == FeatureMode::vector) {
            for (std::size_t j = 0; j < d; ++j)
                out.features.at(i, j) =
                    out.truth_maturity.at(i, j) + rng.normal() * config.feature_noise_std;
        } else {
            double* px = out.features.data() + i * s * s;
            render_image(px, s,
                         config.wrist ? norm_maturity(m_wrist, config.wrist_sat, config.k, config)
                                      : 0.0,
                         config.clavicle
                             ? norm_maturity(m_clav, config.clavicle_sat, config.k, config)
                             : 0.0,
                         config.wrist, config.clavicle);
            for (std::size_t p = 0; p < s * s; ++p)
                px[p] += rng.normal() * config.feature_noise_std;
        }
    }
    return out;
}

std::pair<SynthDataset, SynthDataset> split(const SynthDataset& data, double train_frac,
                                            std::uint64_t seed) {
    if (!(train_frac > 0.0 && train_frac < 1.0))
        throw ConfigError("split: train_frac must be in (0,1)");

    std::map<long, std::vector<std::size_t>> bins;
    for (std::size_t i = 0; i < data.size(); ++i)
        bins[static_cast<long>(std::floor(data.ages[i]))].push_back(i);

    std::vector<std::size_t> train_idx, test_idx;
    RngStream rng(RngStream::mix(seed, 0x5e7a'17ULL));
    for (auto& [key, idx] : bins) {
        for (std::size_t i = idx.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(
                (static_cast<unsigned __int128>(rng.next_u64()) * (i + 1)) >> 64);
            std::swap(idx[i], idx[j]);
        }
        std::size_t take = idx.size() < 2
                               ? idx.size()
                               : static_cast<std::size_t>(std::llround(
                                     train_frac * static_cast<double>(idx.size())));
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < take ? train_idx : test_idx).push_back(idx[i]);
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    return {data.subset(train_idx), data.subset(test_idx)};
}

}  // namespace bayescope
