#include "drbsde/stats.hpp"

#include "drbsde/error.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace drbsde::stats {

double mean(std::span<const double> x) {
    if (x.empty()) return 0.0;
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double stddev(std::span<const double> x) {
    if (x.size() < 2) return 0.0;
    const double m = mean(x);
    double s = 0.0;
    for (const double v : x) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(x.size() - 1));
}

double median(std::vector<double> x) {
    if (x.empty()) return 0.0;
    std::sort(x.begin(), x.end());
    const std::size_t n = x.size();
    return n % 2 == 1 ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("normal_quantile: p must lie in (0, 1)");
    return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), p);
}

double kolmogorov_survival(double lambda) {
    if (lambda <= 0.0) return 1.0;
    // For small lambda the alternating series converges slowly and its value is 1
    // to double precision.
    if (lambda < 0.2) return 1.0;
    double sum = 0.0;
    for (int k = 1; k < 1000; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 == 1 ? term : -term);
        if (term <= 1e-10 * std::abs(sum)) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_normal(std::span<const double> sample) {
    if (sample.empty()) throw ConfigError("ks_normal: empty sample");
    std::vector<double> s(sample.begin(), sample.end());
    std::sort(s.begin(), s.end());
    const double n = static_cast<double>(s.size());
    double d = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double f = normal_cdf(s[i]);
        d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
    }
    return {d, kolmogorov_survival(std::sqrt(n) * d)};
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw ConfigError("ks_two_sample: empty sample");
    std::vector<double> x(a.begin(), a.end());
    std::vector<double> y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const double n = static_cast<double>(x.size());
    const double m = static_cast<double>(y.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    while (i < x.size() && j < y.size()) {
        const double v = std::min(x[i], y[j]);
        while (i < x.size() && x[i] == v) ++i;
        while (j < y.size() && y[j] == v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
    }
    const double ne = n * m / (n + m);
    return {d, kolmogorov_survival(std::sqrt(ne) * d)};
}

std::vector<double> acf(std::span<const double> x, int max_lag) {
    const std::size_t n = x.size();
    if (n < 2 || max_lag < 0) throw ConfigError("acf: need at least two observations");
    const double m = mean(x);
    double c0 = 0.0;
    for (const double v : x) c0 += (v - m) * (v - m);
    std::vector<double> out(static_cast<std::size_t>(max_lag) + 1, 0.0);
    out[0] = 1.0;
    if (c0 == 0.0) return out;
    for (int k = 1; k <= max_lag && static_cast<std::size_t>(k) < n; ++k) {
        double ck = 0.0;
        for (std::size_t t = 0; t + static_cast<std::size_t>(k) < n; ++t) ck += (x[t] - m) * (x[t + static_cast<std::size_t>(k)] - m);
        out[static_cast<std::size_t>(k)] = ck / c0;
    }
    return out;
}

std::vector<std::pair<double, double>> normal_qq(std::span<const double> sample) {
    std::vector<double> s(sample.begin(), sample.end());
    std::sort(s.begin(), s.end());
    const double n = static_cast<double>(s.size());
    std::vector<std::pair<double, double>> out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double p = (static_cast<double>(i) + 1.0 - 0.375) / (n + 0.25);
        out.emplace_back(normal_quantile(p), s[i]);
    }
    return out;
}

}  // namespace drbsde::stats
