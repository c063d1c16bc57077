#pragma once

#include "drbsde/stats.hpp"

#include <array>
#include <string>
#include <vector>

namespace drbsde {

// One price column. Missing observations split the series into contiguous
// segments; transitions are only formed inside a segment.
struct PriceSeries {
    std::string label;
    double dt = 1.0 / 52.0;  // years between observations
    std::vector<std::vector<double>> segments;

    std::size_t observations() const;
    std::size_t transitions() const;
    // ConfigError unless dt > 0, values are finite and there are >= 30 observations.
    void validate() const;
    static PriceSeries from_values(std::string label, std::vector<double> values, double dt = 1.0 / 52.0);
};

struct OUScalar {
    double kappa = 0.0;
    double mu = 0.0;
    double sigma = 0.0;
};

enum class LikelihoodForm {
    exact,       // sum -1/2 [log(2 pi s^2 dt) + r^2 / (s^2 dt)]
    as_printed,  // same with r^2 / (2 s^2 dt) inside the bracket
};

std::string to_string(LikelihoodForm f);
LikelihoodForm likelihood_form_from_string(const std::string& name);

// Gaussian log-likelihood of the Euler transitions X_{i+1} | X_i with mean
// X_i + kappa (mu - X_i) dt and variance sigma^2 dt.
double ou_loglik(const OUScalar& p, const PriceSeries& series, LikelihoodForm form = LikelihoodForm::exact);

struct OUFitResult {
    std::string label;
    LikelihoodForm form = LikelihoodForm::exact;
    OUScalar params;                 // closed-form maximizer
    std::array<double, 3> std_errors{};  // asymptotic, for (kappa, mu, sigma)
    double loglik = 0.0;
    OUScalar quasi_newton;           // independent BFGS maximization of ou_loglik
    double quasi_newton_loglik = 0.0;
    double optimizer_gap = 0.0;      // |loglik - quasi_newton_loglik| / |loglik|
    std::size_t observations = 0;
    std::size_t transitions = 0;
    std::vector<std::string> warnings;

    // Filled by residual_diagnostics.
    std::vector<double> residuals;
    stats::KsResult ks;
    std::vector<double> acf;
    std::vector<std::pair<double, double>> qq;
};

// Regression of X_{i+1} on X_i: slope a gives kappa = (1 - a) / dt, intercept b
// gives mu = b / (kappa dt), the residual variance gives sigma. A BFGS run on the
// likelihood, started away from the optimum, must reach the same value.
OUFitResult fit_mle(const PriceSeries& series, LikelihoodForm form = LikelihoodForm::exact);

// Standardized residuals (X_{i+1} - X_i - kappa (mu - X_i) dt) / (sigma sqrt(dt)),
// K-S test against N(0, 1), ACF to max_lag and normal Q-Q pairs.
void residual_diagnostics(OUFitResult& fit, const PriceSeries& series, int max_lag = 20);

// CSV with header `date,<label1>,...`, ISO-8601 dates at a uniform spacing and
// one price column per series; empty cells are missing values.
std::vector<PriceSeries> read_price_csv(const std::string& path, double dt = 1.0 / 52.0);

}  // namespace drbsde
