#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bayescope/prob.hpp"
#include "bayescope/rng.hpp"
#include "bayescope/tape.hpp"

namespace bayescope {

enum class Activation { relu, tanh, identity };

/// Weight-handling mode for one forward pass. `sample` draws fresh noise for
/// every variational weight; `mean` evaluates at eps = 0, which is
/// deterministic and reproducible.
enum class Mode { sample, mean };

/// Trainable array: value plus gradient accumulator of the same shape.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param() = default;
    Param(std::string name, Tensor v)
        : name(std::move(name)), value(std::move(v)), grad(Tensor::zeros(value.shape())) {}
    void zero_grad() { grad.fill(0.0); }
};

/// Weights materialized on a tape for one forward pass. Bayesian models draw
/// each batch's single weight sample here (n = 1 sampled weight set per
/// step); `kl` is the sample's Monte-Carlo KL contribution.
struct PassWeights {
    std::vector<ad::Node> nodes;
    std::optional<ad::Node> kl;
};

class Layer {
  public:
    virtual ~Layer() = default;

    /// Enter this layer's weights on the tape. Called once per pass so that a
    /// whole batch shares one weight draw.
    virtual PassWeights draw(ad::Tape& tape, Mode mode, RngStream& rng) = 0;

    /// Apply the layer to `x` using previously drawn weights.
    virtual ad::Node apply(ad::Tape& tape, const PassWeights& weights, ad::Node x) const = 0;

    virtual std::vector<Param*> params() = 0;
    virtual bool variational() const { return false; }
};

ad::Node apply_activation(ad::Node x, Activation act);

// Initialization: He-uniform weights (bound sqrt(6/fan_in)), zero biases.
// Variational layers start every rho at softplus_inv(0.05), i.e. an initial
// posterior sigma of 0.05 so early training tracks the deterministic net.
inline constexpr double kInitPosteriorSigma = 0.05;

class DenseLayer final : public Layer {
  public:
    DenseLayer(std::string name, std::size_t in, std::size_t out, Activation act,
               RngStream& init_rng);

    PassWeights draw(ad::Tape& tape, Mode mode, RngStream& rng) override;
    ad::Node apply(ad::Tape& tape, const PassWeights& weights, ad::Node x) const override;
    std::vector<Param*> params() override { return {&w_, &b_}; }

    Param w_, b_;
    Activation act_;
};

class VariationalDenseLayer final : public Layer {
  public:
    VariationalDenseLayer(std::string name, std::size_t in, std::size_t out, Activation act,
                          prob::PriorSpec prior, RngStream& init_rng);

    PassWeights draw(ad::Tape& tape, Mode mode, RngStream& rng) override;
    ad::Node apply(ad::Tape& tape, const PassWeights& weights, ad::Node x) const override;
    std::vector<Param*> params() override { return {&w_mu_, &w_rho_, &b_mu_, &b_rho_}; }
    bool variational() const override { return true; }

    Param w_mu_, w_rho_, b_mu_, b_rho_;
    Activation act_;
    prob::PriorSpec prior_;
};

class Conv2dLayer final : public Layer {
  public:
    Conv2dLayer(std::string name, std::size_t kh, std::size_t kw, std::size_t ci, std::size_t co,
                std::size_t stride, Activation act, RngStream& init_rng);

    PassWeights draw(ad::Tape& tape, Mode mode, RngStream& rng) override;
    ad::Node apply(ad::Tape& tape, const PassWeights& weights, ad::Node x) const override;
    std::vector<Param*> params() override { return {&k_, &b_}; }

    Param k_, b_;
    std::size_t stride_;
    Activation act_;
};

class VariationalConv2dLayer final : public Layer {
  public:
    VariationalConv2dLayer(std::string name, std::size_t kh, std::size_t kw, std::size_t ci,
                           std::size_t co, std::size_t stride, Activation act,
                           prob::PriorSpec prior, RngStream& init_rng);

    PassWeights draw(ad::Tape& tape, Mode mode, RngStream& rng) override;
    ad::Node apply(ad::Tape& tape, const PassWeights& weights, ad::Node x) const override;
    std::vector<Param*> params() override { return {&k_mu_, &k_rho_, &b_mu_, &b_rho_}; }
    bool variational() const override { return true; }

    Param k_mu_, k_rho_, b_mu_, b_rho_;
    std::size_t stride_;
    Activation act_;
    prob::PriorSpec prior_;
};

}  // namespace bayescope
