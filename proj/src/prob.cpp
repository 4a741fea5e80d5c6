#include "bayescope/prob.hpp"

#include <cmath>
#include <numbers>

#include "bayescope/errors.hpp"

namespace bayescope::prob {

namespace {
constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5*log(2*pi)
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double softplus_inv(double y) {
    if (y <= 0.0) throw ContractError("softplus_inv: argument must be positive");
    // log(e^y - 1), stable for small y via expm1.
    return std::log(std::expm1(y));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

double gaussian_log_pdf(double x, double mu, double log_var) {
    double d = x - mu;
    return -kHalfLog2Pi - 0.5 * log_var - 0.5 * d * d / std::exp(log_var);
}

double gaussian_nll(double y, const GaussianParams& pred) {
    return -gaussian_log_pdf(y, pred.mu, pred.log_var);
}

double gaussian_kl_closed_form(double mu_q, double sigma_q, double mu_p, double sigma_p) {
    double dm = mu_q - mu_p;
    return std::log(sigma_p / sigma_q) +
           (sigma_q * sigma_q + dm * dm) / (2.0 * sigma_p * sigma_p) - 0.5;
}

ad::Node gaussian_log_pdf(ad::Node x, ad::Node mu, ad::Node log_var) {
    ad::Node d = ad::sub(x, mu);
    ad::Node quad = ad::div(ad::square(d), ad::exp(log_var));
    // -1/2 log(2pi) - 1/2 log_var - 1/2 (x-mu)^2 / exp(log_var)
    return ad::sub(ad::affine(ad::mul(log_var, -0.5), 1.0, -kHalfLog2Pi), ad::mul(quad, 0.5));
}

ad::Node reparameterize(ad::Node mu, ad::Node rho, ad::Node eps) {
    if (!(mu.shape() == rho.shape()) || !(mu.shape() == eps.shape()))
        throw DimensionError("reparameterize: mu/rho/eps shapes must agree");
    return ad::add(mu, ad::mul(ad::softplus(rho), eps));
}

ad::Node mc_kl_term(ad::Node omega, ad::Node mu, ad::Node rho, const PriorSpec& prior) {
    if (prior.sigma_p <= 0.0) throw ConfigError("prior sigma_p must be positive");
    ad::Node log_var_q = ad::mul(ad::log(ad::softplus(rho)), 2.0);
    ad::Node log_q = gaussian_log_pdf(omega, mu, log_var_q);

    ad::Tape* t = omega.tape();
    double log_var_p = 2.0 * std::log(prior.sigma_p);
    ad::Node zero = t->constant(Tensor::scalar(0.0));
    ad::Node lvp = t->constant(Tensor::scalar(log_var_p));
    ad::Node log_p = gaussian_log_pdf(omega, zero, lvp);

    return ad::reduce_sum(ad::sub(log_q, log_p));
}

ad::Node gaussian_nll(ad::Node y, ad::Node mu, ad::Node log_var) {
    return ad::neg(ad::reduce_sum(gaussian_log_pdf(y, mu, log_var)));
}

ad::Node elbo_loss(ad::Node batch_nll, ad::Node kl, double kl_weight) {
    if (!(kl_weight > 0.0 && kl_weight <= 1.0))
        throw ContractError("elbo_loss: kl_weight must be in (0, 1]");
    return ad::add(batch_nll, ad::mul(kl, kl_weight));
}

}  // namespace bayescope::prob
