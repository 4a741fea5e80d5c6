#include "bayescope/model.hpp"

#include <cmath>
#include <utility>

#include "bayescope/errors.hpp"

namespace bayescope {

bool variant_is_bayesian(Variant v) { return v == Variant::bcnn || v == Variant::bcnn_sigma; }

bool variant_has_sigma_head(Variant v) {
    return v == Variant::cnn_sigma || v == Variant::bcnn_sigma;
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::cnn: return "cnn";
        case Variant::cnn_sigma: return "cnn_sigma";
        case Variant::bcnn: return "bcnn";
        case Variant::bcnn_sigma: return "bcnn_sigma";
    }
    throw ContractError("unknown variant");
}

Variant variant_from_name(const std::string& name) {
    if (name == "cnn") return Variant::cnn;
    if (name == "cnn_sigma") return Variant::cnn_sigma;
    if (name == "bcnn") return Variant::bcnn;
    if (name == "bcnn_sigma") return Variant::bcnn_sigma;
    throw ConfigError("unknown model variant '" + name + "'");
}

std::string input_kind_name(InputKind k) {
    return k == InputKind::vector ? "vector" : "image";
}

InputKind input_kind_from_name(const std::string& name) {
    if (name == "vector") return InputKind::vector;
    if (name == "image") return InputKind::image;
    throw ConfigError("unknown input kind '" + name + "'");
}

Model::Model(ModelSpec spec, std::vector<Stage> stages)
    : spec_(std::move(spec)), stages_(std::move(stages)) {
    if (stages_.empty()) throw ConfigError("model needs at least one stage");
}

namespace {

Tensor slice_sample(const Tensor& X, std::size_t b) {
    // [B, rest...] -> [rest...]
    Shape rest(X.shape().begin() + 1, X.shape().end());
    std::size_t n = shape_numel(rest);
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = X[b * n + i];
    return Tensor(std::move(rest), std::move(data));
}

}  // namespace

Tensor Model::standardize_input(const Tensor& X) const {
    if (spec_.input_shift.empty()) return X;
    // Inputs are data, not parameters: transform before graph entry. The
    // trailing axis is the feature (vector) / channel (image) axis.
    const std::size_t c = spec_.input_shift.size();
    Tensor out = X;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::size_t j = i % c;
        out[i] = (out[i] - spec_.input_shift[j]) / spec_.input_scale[j];
    }
    return out;
}

ad::Node Model::apply_stages(ad::Tape& tape, const std::vector<PassWeights>& weights,
                             ad::Node x) const {
    for (std::size_t s = 0; s < stages_.size(); ++s) {
        x = stages_[s].layer->apply(tape, weights[s], x);
        if (stages_[s].pool_after) x = ad::avg_pool2d(x, 2);
        if (stages_[s].flatten_after) x = ad::reshape(x, {1, x.value().size()});
    }
    return x;
}

ForwardResult Model::forward(ad::Tape& tape, const Tensor& X, Mode mode, RngStream& rng) {
    if (spec_.input == InputKind::vector) {
        if (X.ndim() != 2 || X.extent(1) != spec_.input_dim)
            throw DimensionError("forward: expected [B," + std::to_string(spec_.input_dim) +
                                 "] input, got " + X.shape_str());
    } else {
        if (X.ndim() != 4 || X.extent(1) != spec_.image_size || X.extent(2) != spec_.image_size ||
            X.extent(3) != spec_.image_channels)
            throw DimensionError("forward: expected [B," + std::to_string(spec_.image_size) +
                                 "," + std::to_string(spec_.image_size) + "," +
                                 std::to_string(spec_.image_channels) + "] input, got " +
                                 X.shape_str());
    }

    const Tensor Xs = standardize_input(X);

    // One weight draw per pass, shared across the batch.
    std::vector<PassWeights> weights;
    weights.reserve(stages_.size());
    std::optional<ad::Node> kl;
    for (auto& stage : stages_) {
        weights.push_back(stage.layer->draw(tape, mode, rng));
        if (weights.back().kl) kl = kl ? ad::add(*kl, *weights.back().kl) : *weights.back().kl;
    }

    ad::Node head;
    if (spec_.input == InputKind::vector) {
        head = apply_stages(tape, weights, tape.constant(Xs));
    } else {
        std::size_t batch = Xs.extent(0);
        std::vector<ad::Node> rows;
        rows.reserve(batch);
        for (std::size_t b = 0; b < batch; ++b)
            rows.push_back(apply_stages(tape, weights, tape.constant(slice_sample(Xs, b))));
        head = ad::concat_rows(rows);
    }

    ForwardResult out{ad::select_column(head, 0), std::nullopt,
                      kl ? *kl : tape.constant(Tensor::scalar(0.0))};
    if (sigma_head())
        out.log_var = ad::clamp(ad::select_column(head, 1), prob::kLogVarMin, prob::kLogVarMax);
    return out;
}

LossTerms Model::loss_terms(ad::Tape& tape, const Tensor& X, const Tensor& y, Mode mode,
                            RngStream& rng, double kl_weight) {
    if (y.size() == 0) throw ContractError("loss: empty batch");
    ForwardResult f = forward(tape, X, mode, rng);
    if (y.size() != f.mu.value().size())
        throw DimensionError("loss: target count does not match batch");
    ad::Node yn = tape.constant(y);

    ad::Node data = [&] {
        switch (spec_.variant) {
            case Variant::cnn:
                return ad::reduce_mean(ad::square(ad::sub(f.mu, yn)));
            case Variant::cnn_sigma:
                return prob::gaussian_nll(yn, f.mu, *f.log_var);
            case Variant::bcnn:
                // Point head trained as a fixed unit-variance Gaussian.
                return prob::gaussian_nll(yn, f.mu, tape.constant(Tensor::scalar(0.0)));
            case Variant::bcnn_sigma:
                return prob::gaussian_nll(yn, f.mu, *f.log_var);
        }
        throw ContractError("unknown variant");
    }();

    LossTerms terms{data, data, std::nullopt};
    if (bayesian() && kl_weight > 0.0) {
        terms.kl_term = ad::mul(f.kl, kl_weight);
        terms.total = prob::elbo_loss(data, f.kl, kl_weight);
    }
    return terms;
}

ad::Node Model::loss(ad::Tape& tape, const Tensor& X, const Tensor& y, Mode mode, RngStream& rng,
                     double kl_weight) {
    return loss_terms(tape, X, y, mode, rng, kl_weight).total;
}

GaussianPrediction Model::predict_one(const Tensor& x, Mode mode, RngStream& rng) {
    Shape batched{1};
    for (std::size_t e : x.shape()) batched.push_back(e);
    Tensor X(batched, std::vector<double>(x.data(), x.data() + x.size()));

    ad::Tape tape;
    ForwardResult f = forward(tape, X, mode, rng);
    GaussianPrediction pred;
    pred.mu = f.mu.value()[0];
    if (f.log_var) pred.log_var = f.log_var->value()[0];
    return pred;
}

std::vector<Param*> Model::params() {
    std::vector<Param*> out;
    for (auto& stage : stages_)
        for (Param* p : stage.layer->params()) out.push_back(p);
    return out;
}

std::size_t Model::param_count() {
    std::size_t n = 0;
    for (Param* p : params()) n += p->value.size();
    return n;
}

void Model::set_output_bias(double mu, double log_var) {
    for (Param* p : stages_.back().layer->params()) {
        if (p->name.ends_with(".b") || p->name.ends_with(".b_mu")) {
            p->value[0] = mu;
            if (p->value.size() >= 2) p->value[1] = log_var;
            return;
        }
    }
    throw ContractError("set_output_bias: head has no bias parameter");
}

Model build(const ModelSpec& spec) {
    if (spec.input == InputKind::vector && spec.input_dim == 0)
        throw ConfigError("vector input needs input_dim >= 1");
    if (spec.input == InputKind::image && spec.image_size < 8)
        throw ConfigError("image input needs image_size >= 8");
    if (spec.input_shift.size() != spec.input_scale.size())
        throw ConfigError("input_shift and input_scale lengths differ");
    if (!spec.input_shift.empty()) {
        const std::size_t want =
            spec.input == InputKind::vector ? spec.input_dim : spec.image_channels;
        if (spec.input_shift.size() != want)
            throw ConfigError("input normalization length does not match the feature axis");
        for (double s : spec.input_scale)
            if (!(s > 0.0)) throw ConfigError("input_scale entries must be positive");
    }

    RngStream init(spec.seed);
    bool bayes = variant_is_bayesian(spec.variant);
    std::size_t head_out = variant_has_sigma_head(spec.variant) ? 2 : 1;

    auto dense = [&](const std::string& name, std::size_t in, std::size_t out,
                     Activation act) -> std::unique_ptr<Layer> {
        if (bayes)
            return std::make_unique<VariationalDenseLayer>(name, in, out, act, spec.prior, init);
        return std::make_unique<DenseLayer>(name, in, out, act, init);
    };
    auto conv = [&](const std::string& name, std::size_t ci, std::size_t co)
        -> std::unique_ptr<Layer> {
        if (bayes)
            return std::make_unique<VariationalConv2dLayer>(name, 3, 3, ci, co, 1,
                                                            Activation::relu, spec.prior, init);
        return std::make_unique<Conv2dLayer>(name, 3, 3, ci, co, 1, Activation::relu, init);
    };

    std::vector<Model::Stage> stages;
    if (spec.input == InputKind::vector) {
        stages.push_back({dense("dense0", spec.input_dim, 64, Activation::relu), false, false});
        stages.push_back({dense("dense1", 64, 64, Activation::relu), false, false});
        stages.push_back({dense("head", 64, head_out, Activation::identity), false, false});
    } else {
        std::size_t s = spec.image_size;
        std::size_t s1 = (s - 3 + 1) / 2;        // conv 3x3 then 2x2 pool
        std::size_t s2 = (s1 - 3 + 1) / 2;
        std::size_t flat = s2 * s2 * 16;
        stages.push_back({conv("conv0", spec.image_channels, 8), true, false});
        stages.push_back({conv("conv1", 8, 16), true, true});
        stages.push_back({dense("dense2", flat, 32, Activation::relu), false, false});
        stages.push_back({dense("head", 32, head_out, Activation::identity), false, false});
    }
    return Model(spec, std::move(stages));
}

void fit_input_stats(ModelSpec& spec, const Tensor& features) {
    if (features.size() == 0) throw ContractError("fit_input_stats: empty features");
    const std::size_t c = features.extent(features.ndim() - 1);
    const std::size_t rows = features.size() / c;
    std::vector<double> mean(c, 0.0), scale(c, 0.0);
    for (std::size_t i = 0; i < features.size(); ++i) mean[i % c] += features[i];
    for (double& m : mean) m /= static_cast<double>(rows);
    for (std::size_t i = 0; i < features.size(); ++i) {
        const double r = features[i] - mean[i % c];
        scale[i % c] += r * r;
    }
    for (double& s : scale)
        s = std::max(std::sqrt(s / static_cast<double>(rows)), 1e-8);
    spec.input_shift = std::move(mean);
    spec.input_scale = std::move(scale);
}

}  // namespace bayescope
