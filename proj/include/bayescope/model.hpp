#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bayescope/layers.hpp"

namespace bayescope {

/// The 2x2 model matrix: {deterministic, Bayesian} x {point head, Gaussian head}.
enum class Variant { cnn, cnn_sigma, bcnn, bcnn_sigma };

enum class InputKind { vector, image };

bool variant_is_bayesian(Variant v);
bool variant_has_sigma_head(Variant v);
std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);
std::string input_kind_name(InputKind k);
InputKind input_kind_from_name(const std::string& name);

struct ModelSpec {
    Variant variant = Variant::bcnn_sigma;
    InputKind input = InputKind::vector;
    std::size_t input_dim = 2;       // vector pathway feature count
    std::size_t image_size = 16;     // image pathway side length
    std::size_t image_channels = 1;
    prob::PriorSpec prior;
    std::uint64_t seed = 0;
    // Per-feature (vector) / per-channel (image) input standardization,
    // fitted on the training split and baked into the checkpoint so raw
    // features stay the interchange format. Empty = identity.
    std::vector<double> input_shift;
    std::vector<double> input_scale;
};

/// One pass's head output for a single sample. log_var is absent for the
/// point-head (non-sigma) variants; when present it is already clamped to
/// [kLogVarMin, kLogVarMax].
struct GaussianPrediction {
    double mu = 0.0;
    std::optional<double> log_var;
};

struct ForwardResult {
    ad::Node mu;                      // [B,1]
    std::optional<ad::Node> log_var;  // [B,1], sigma variants only
    ad::Node kl;                      // scalar; constant 0 for deterministic variants
};

struct LossTerms {
    ad::Node total;
    ad::Node data_term;               // NLL sum (MSE mean for plain cnn)
    std::optional<ad::Node> kl_term;  // kl_weight * KL as it enters the loss
};

class Model {
  public:
    /// One network stage: a layer optionally followed by 2x2 mean pooling
    /// and/or flattening to a [1,n] row (image pathway plumbing).
    struct Stage {
        std::unique_ptr<Layer> layer;
        bool pool_after = false;
        bool flatten_after = false;
    };

    Model(ModelSpec spec, std::vector<Stage> stages);

    /// Batched forward pass. X is [B,d] for vector input or [B,h,w,c] for
    /// image input; one weight draw is shared by the whole batch.
    ForwardResult forward(ad::Tape& tape, const Tensor& X, Mode mode, RngStream& rng);

    /// Per-variant training loss on one batch (spec of each term in LossTerms).
    LossTerms loss_terms(ad::Tape& tape, const Tensor& X, const Tensor& y, Mode mode,
                         RngStream& rng, double kl_weight);
    ad::Node loss(ad::Tape& tape, const Tensor& X, const Tensor& y, Mode mode, RngStream& rng,
                  double kl_weight);

    /// Single-sample forward on a private tape; x is [d] or [h,w,c].
    GaussianPrediction predict_one(const Tensor& x, Mode mode, RngStream& rng);

    std::vector<Param*> params();
    std::size_t param_count();

    /// Sets the head bias so an untrained forward pass outputs `mu` (and,
    /// for sigma heads, `log_var`). Training warm-starts the output scale
    /// this way; without it the first steps see residuals the size of the
    /// target range, which stalls the heteroscedastic likelihood.
    void set_output_bias(double mu, double log_var);

    const ModelSpec& spec() const { return spec_; }
    bool bayesian() const { return variant_is_bayesian(spec_.variant); }
    bool sigma_head() const { return variant_has_sigma_head(spec_.variant); }

  private:
    Tensor standardize_input(const Tensor& X) const;
    ad::Node apply_stages(ad::Tape& tape, const std::vector<PassWeights>& weights,
                          ad::Node x) const;

    ModelSpec spec_;
    std::vector<Stage> stages_;
};

/// Standard architectures. Vector input: dense 64 -> dense 64 -> head.
/// Image input: conv 3x3x8 -> 2x2 mean-pool -> conv 3x3x16 -> 2x2 mean-pool
/// -> flatten -> dense 32 -> head. ReLU activations, identity head with 1
/// (point) or 2 (mu, log sigma^2) outputs.
Model build(const ModelSpec& spec);

/// Fills input_shift/input_scale with the mean/std of `features` along its
/// trailing axis (std floored at 1e-8 for constant columns). Call with the
/// training features before build(); raw-scale inputs condition the
/// likelihood losses badly enough to stall them.
void fit_input_stats(ModelSpec& spec, const Tensor& features);

}  // namespace bayescope
