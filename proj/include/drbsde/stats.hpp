#pragma once

#include <span>
#include <utility>
#include <vector>

namespace drbsde::stats {

double mean(std::span<const double> x);
// Sample standard deviation (n - 1 denominator).
double stddev(std::span<const double> x);
double median(std::vector<double> x);

double normal_cdf(double x);
double normal_quantile(double p);

// Asymptotic Kolmogorov survival function 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2),
// summed until a term falls below 1e-10 of the running total.
double kolmogorov_survival(double lambda);

struct KsResult {
    double statistic = 0.0;
    double pvalue = 1.0;
};

// One-sample test against N(0, 1).
KsResult ks_normal(std::span<const double> sample);
// Two-sample test; p-value from the asymptotic law with n_eff = n m / (n + m).
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

// Sample autocorrelation at lags 0..max_lag (acf[0] = 1).
std::vector<double> acf(std::span<const double> x, int max_lag);

// (theoretical, empirical) normal quantile pairs with Blom positions
// (i - 0.375) / (n + 0.25).
std::vector<std::pair<double, double>> normal_qq(std::span<const double> sample);

}  // namespace drbsde::stats
