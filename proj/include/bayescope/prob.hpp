#pragma once

#include "bayescope/tape.hpp"

namespace bayescope::prob {

/// Parameters of one predictive Gaussian: mean and log variance.
struct GaussianParams {
    double mu = 0.0;
    double log_var = 0.0;
};

/// Zero-mean Gaussian prior over every weight; sigma_p is experiment
/// configuration, never a claimed value.
struct PriorSpec {
    double sigma_p = 1.0;
};

// Predictive log-variance head outputs are clamped to this range before
// exponentiation so early training cannot blow up the likelihood term.
inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

// Scalar forms (evaluation, tests).
double gaussian_log_pdf(double x, double mu, double log_var);
double gaussian_nll(double y, const GaussianParams& pred);

/// Closed-form KL(N(mu_q, sigma_q^2) || N(mu_p, sigma_p^2)). Used only as a
/// test oracle for the Monte-Carlo estimate; the training loss never calls it.
double gaussian_kl_closed_form(double mu_q, double sigma_q, double mu_p, double sigma_p);

// Graph forms. Shapes must be equal or broadcast-compatible.
ad::Node gaussian_log_pdf(ad::Node x, ad::Node mu, ad::Node log_var);

/// Reparameterized weight draw: omega = mu + softplus(rho) * eps, with eps a
/// standard-normal constant drawn by the caller. Differentiable in mu and rho.
ad::Node reparameterize(ad::Node mu, ad::Node rho, ad::Node eps);

/// Single-sample Monte-Carlo KL contribution of one weight array:
/// sum(log q(omega | mu, softplus(rho)^2) - log p(omega | 0, sigma_p^2)).
ad::Node mc_kl_term(ad::Node omega, ad::Node mu, ad::Node rho, const PriorSpec& prior);

/// Negative Gaussian log likelihood summed over all elements.
ad::Node gaussian_nll(ad::Node y, ad::Node mu, ad::Node log_var);

/// batch_nll + kl_weight * kl; kl_weight must lie in (0, 1].
ad::Node elbo_loss(ad::Node batch_nll, ad::Node kl, double kl_weight);

double softplus(double x);
double softplus_inv(double y);  // y > 0
double sigmoid(double x);

}  // namespace bayescope::prob
