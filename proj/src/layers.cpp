#include "bayescope/layers.hpp"

#include <cmath>

#include "bayescope/errors.hpp"

namespace bayescope {

namespace {

Tensor he_uniform(const Shape& shape, std::size_t fan_in, RngStream& rng) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    return rng.uniform_tensor(shape, -bound, bound);
}

// One reparameterized draw for a (mu, rho) pair: registers both params on the
// tape, draws eps per element (or zeros in mean mode) and reports the pair's
// KL contribution.
struct VariationalDraw {
    ad::Node omega;
    ad::Node kl;
};

VariationalDraw draw_variational(ad::Tape& tape, Param& mu, Param& rho,
                                 const prob::PriorSpec& prior, Mode mode, RngStream& rng) {
    ad::Node mu_n = tape.param(mu.value, &mu.grad);
    ad::Node rho_n = tape.param(rho.value, &rho.grad);
    Tensor eps = mode == Mode::sample ? rng.normal_tensor(mu.value.shape())
                                      : Tensor::zeros(mu.value.shape());
    ad::Node omega = prob::reparameterize(mu_n, rho_n, tape.constant(std::move(eps)));
    ad::Node kl = prob::mc_kl_term(omega, mu_n, rho_n, prior);
    return {omega, kl};
}

}  // namespace

ad::Node apply_activation(ad::Node x, Activation act) {
    switch (act) {
        case Activation::relu: return ad::relu(x);
        case Activation::tanh: return ad::tanh(x);
        case Activation::identity: return x;
    }
    throw ContractError("unknown activation");
}

// --- DenseLayer -----------------------------------------------------------

DenseLayer::DenseLayer(std::string name, std::size_t in, std::size_t out, Activation act,
                       RngStream& init_rng)
    : w_(name + ".w", he_uniform({in, out}, in, init_rng)),
      b_(name + ".b", Tensor::zeros({out})),
      act_(act) {}

PassWeights DenseLayer::draw(ad::Tape& tape, Mode, RngStream&) {
    return {{tape.param(w_.value, &w_.grad), tape.param(b_.value, &b_.grad)}, std::nullopt};
}

ad::Node DenseLayer::apply(ad::Tape&, const PassWeights& weights, ad::Node x) const {
    return apply_activation(ad::add(ad::matmul(x, weights.nodes[0]), weights.nodes[1]), act_);
}

// --- VariationalDenseLayer --------------------------------------------------

VariationalDenseLayer::VariationalDenseLayer(std::string name, std::size_t in, std::size_t out,
                                             Activation act, prob::PriorSpec prior,
                                             RngStream& init_rng)
    : w_mu_(name + ".w_mu", he_uniform({in, out}, in, init_rng)),
      w_rho_(name + ".w_rho", Tensor::full({in, out}, prob::softplus_inv(kInitPosteriorSigma))),
      b_mu_(name + ".b_mu", Tensor::zeros({out})),
      b_rho_(name + ".b_rho", Tensor::full({out}, prob::softplus_inv(kInitPosteriorSigma))),
      act_(act),
      prior_(prior) {}

PassWeights VariationalDenseLayer::draw(ad::Tape& tape, Mode mode, RngStream& rng) {
    VariationalDraw w = draw_variational(tape, w_mu_, w_rho_, prior_, mode, rng);
    VariationalDraw b = draw_variational(tape, b_mu_, b_rho_, prior_, mode, rng);
    return {{w.omega, b.omega}, ad::add(w.kl, b.kl)};
}

ad::Node VariationalDenseLayer::apply(ad::Tape&, const PassWeights& weights, ad::Node x) const {
    return apply_activation(ad::add(ad::matmul(x, weights.nodes[0]), weights.nodes[1]), act_);
}

// --- Conv2dLayer ------------------------------------------------------------

Conv2dLayer::Conv2dLayer(std::string name, std::size_t kh, std::size_t kw, std::size_t ci,
                         std::size_t co, std::size_t stride, Activation act, RngStream& init_rng)
    : k_(name + ".k", he_uniform({kh, kw, ci, co}, kh * kw * ci, init_rng)),
      b_(name + ".b", Tensor::zeros({co})),
      stride_(stride),
      act_(act) {}

PassWeights Conv2dLayer::draw(ad::Tape& tape, Mode, RngStream&) {
    return {{tape.param(k_.value, &k_.grad), tape.param(b_.value, &b_.grad)}, std::nullopt};
}

ad::Node Conv2dLayer::apply(ad::Tape&, const PassWeights& weights, ad::Node x) const {
    // bias [co] broadcasts over the trailing channel axis of [oh,ow,co]
    return apply_activation(ad::add(ad::conv2d(x, weights.nodes[0], stride_), weights.nodes[1]),
                            act_);
}

// --- VariationalConv2dLayer ---------------------------------------------------

VariationalConv2dLayer::VariationalConv2dLayer(std::string name, std::size_t kh, std::size_t kw,
                                               std::size_t ci, std::size_t co, std::size_t stride,
                                               Activation act, prob::PriorSpec prior,
                                               RngStream& init_rng)
    : k_mu_(name + ".k_mu", he_uniform({kh, kw, ci, co}, kh * kw * ci, init_rng)),
      k_rho_(name + ".k_rho",
             Tensor::full({kh, kw, ci, co}, prob::softplus_inv(kInitPosteriorSigma))),
      b_mu_(name + ".b_mu", Tensor::zeros({co})),
      b_rho_(name + ".b_rho", Tensor::full({co}, prob::softplus_inv(kInitPosteriorSigma))),
      stride_(stride),
      act_(act),
      prior_(prior) {}

PassWeights VariationalConv2dLayer::draw(ad::Tape& tape, Mode mode, RngStream& rng) {
    VariationalDraw k = draw_variational(tape, k_mu_, k_rho_, prior_, mode, rng);
    VariationalDraw b = draw_variational(tape, b_mu_, b_rho_, prior_, mode, rng);
    return {{k.omega, b.omega}, ad::add(k.kl, b.kl)};
}

ad::Node VariationalConv2dLayer::apply(ad::Tape&, const PassWeights& weights, ad::Node x) const {
    return apply_activation(ad::add(ad::conv2d(x, weights.nodes[0], stride_), weights.nodes[1]),
                            act_);
}

}  // namespace bayescope
