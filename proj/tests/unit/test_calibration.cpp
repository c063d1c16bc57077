#include "doctest.h"

#include "drbsde/calibration.hpp"
#include "drbsde/error.hpp"
#include "drbsde/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace drbsde;

namespace {

// Euler-discretized OU, the model the likelihood is written for.
std::vector<double> euler_ou(double kappa, double mu, double sigma, double dt, int n, std::uint64_t seed, double x0) {
    const Philox rng(seed);
    std::vector<double> x(static_cast<std::size_t>(n));
    x[0] = x0;
    for (int i = 1; i < n; ++i) {
        const double z = rng.normal_pair(static_cast<std::uint64_t>(i), 0)[0];
        x[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i) - 1] +
                                         kappa * (mu - x[static_cast<std::size_t>(i) - 1]) * dt + sigma * std::sqrt(dt) * z;
    }
    return x;
}

std::string temp_file(const std::string& name, const std::string& content) {
    const auto p = std::filesystem::temp_directory_path() / name;
    std::ofstream(p) << content;
    return p.string();
}

}  // namespace

TEST_CASE("closed-form fit equals least squares and the numerical optimizer") {
    const double dt = 1.0 / 52.0;
    const std::vector<double> x = euler_ou(30.0, 90.0, 200.0, dt, 400, 3, 90.0);
    const PriceSeries s = PriceSeries::from_values("test", x, dt);
    const OUFitResult fit = fit_mle(s);

    // Independent: solve [x_i 1] [a b]^T = x_{i+1} by QR.
    const int n = static_cast<int>(x.size()) - 1;
    Eigen::MatrixXd A(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        A(i, 0) = x[static_cast<std::size_t>(i)];
        A(i, 1) = 1.0;
        y[i] = x[static_cast<std::size_t>(i) + 1];
    }
    const Eigen::Vector2d ab = A.colPivHouseholderQr().solve(y);
    const double rss = (A * ab - y).squaredNorm();
    CHECK(fit.params.kappa == doctest::Approx((1.0 - ab[0]) / dt).epsilon(1e-9));
    CHECK(fit.params.mu == doctest::Approx(ab[1] / (1.0 - ab[0])).epsilon(1e-9));
    CHECK(fit.params.sigma == doctest::Approx(std::sqrt(rss / n / dt)).epsilon(1e-9));

    CHECK(fit.optimizer_gap <= 1e-6);
    CHECK(fit.quasi_newton.kappa == doctest::Approx(fit.params.kappa).epsilon(1e-3));
    CHECK(fit.loglik == doctest::Approx(ou_loglik(fit.params, s)));
    CHECK(fit.observations == 400);
    CHECK(fit.transitions == 399);
    for (double se : fit.std_errors) CHECK(se > 0.0);

    // The closed form is a maximum.
    for (int k = 0; k < 3; ++k) {
        for (double f : {0.97, 1.03}) {
            OUScalar q = fit.params;
            (k == 0 ? q.kappa : k == 1 ? q.mu : q.sigma) *= f;
            CHECK(ou_loglik(q, s) < fit.loglik);
        }
    }
}

TEST_CASE("the printed likelihood form halves the variance") {
    const std::vector<double> x = euler_ou(20.0, 0.0, 1.0, 0.01, 300, 9, 0.0);
    const PriceSeries s = PriceSeries::from_values("x", x, 0.01);
    const OUFitResult exact = fit_mle(s, LikelihoodForm::exact);
    const OUFitResult printed = fit_mle(s, LikelihoodForm::as_printed);
    CHECK(printed.params.sigma == doctest::Approx(exact.params.sigma / std::sqrt(2.0)));
    CHECK(printed.params.kappa == doctest::Approx(exact.params.kappa));
    CHECK(printed.optimizer_gap <= 1e-6);
    CHECK(likelihood_form_from_string(to_string(LikelihoodForm::as_printed)) == LikelihoodForm::as_printed);
}

TEST_CASE("synthetic parameters are recovered") {
    int inside = 0;
    for (std::uint64_t r = 0; r < 10; ++r) {
        const std::vector<double> x = euler_ou(25.0, 100.0, 200.0, 1.0 / 52.0, 520, 100 + r, 100.0);
        const OUFitResult fit = fit_mle(PriceSeries::from_values("x", x));
        const bool ok = std::abs(fit.params.kappa - 25.0) < 3 * fit.std_errors[0] &&
                        std::abs(fit.params.mu - 100.0) < 3 * fit.std_errors[1] &&
                        std::abs(fit.params.sigma - 200.0) < 3 * fit.std_errors[2];
        inside += ok ? 1 : 0;
    }
    CHECK(inside >= 8);
}

TEST_CASE("residual diagnostics") {
    const std::vector<double> x = euler_ou(25.0, 100.0, 200.0, 1.0 / 52.0, 1000, 5, 100.0);
    const PriceSeries s = PriceSeries::from_values("x", x);
    OUFitResult fit = fit_mle(s);
    residual_diagnostics(fit, s, 10);
    CHECK(fit.residuals.size() == 999);
    CHECK(fit.acf.size() == 11);
    CHECK(fit.qq.size() == 999);
    CHECK(fit.ks.pvalue > 0.01);
    double m = 0.0;
    for (double r : fit.residuals) m += r;
    CHECK(std::abs(m / 999.0) < 0.15);
}

TEST_CASE("degenerate series") {
    CHECK_THROWS_AS(fit_mle(PriceSeries::from_values("c", std::vector<double>(50, 3.0))), NumericalError);
    CHECK_THROWS_AS(PriceSeries::from_values("short", std::vector<double>(10, 1.0)).validate(), ConfigError);
    // A random walk has no mean reversion; the fit still returns with a warning or kappa near 0.
    std::vector<double> rw = euler_ou(0.0, 0.0, 1.0, 1.0, 200, 3, 0.0);
    const OUFitResult fit = fit_mle(PriceSeries::from_values("rw", rw, 1.0));
    CHECK(std::isfinite(fit.params.kappa));
}

TEST_CASE("price CSV parsing") {
    std::string csv = "date,Alpha,Beta\n";
    char line[128];
    for (int i = 0; i < 40; ++i) {
        // Weekly dates starting 2020-01-06.
        const int day = 6 + 7 * i;
        int m = 1, d = day;
        const int len[] = {31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
        while (d > len[m - 1]) d -= len[m++ - 1];
        if (i == 20) std::snprintf(line, sizeof line, "2020-%02d-%02d,%d,NA\n", m, d, 50 + (i * 7) % 11);
        else std::snprintf(line, sizeof line, "2020-%02d-%02d,%d,%d.5\n", m, d, 50 + (i * 7) % 11, 60 + (i * 5) % 13);
        csv += line;
    }
    const auto series = read_price_csv(temp_file("drbsde_prices.csv", csv));
    REQUIRE(series.size() == 2);
    CHECK(series[0].label == "Alpha");
    CHECK(series[0].observations() == 40);
    CHECK(series[0].transitions() == 39);
    CHECK(series[1].segments.size() == 2);
    CHECK(series[1].observations() == 39);
    CHECK(series[1].transitions() == 37);
    CHECK(series[0].dt == doctest::Approx(1.0 / 52.0));

    CHECK_THROWS_AS(read_price_csv(temp_file("drbsde_nohdr.csv", "2020-01-06,1,2\n2020-01-13,1,2\n")), ConfigError);
    CHECK_THROWS_AS(read_price_csv(temp_file("drbsde_ragged.csv", "date,a\n2020-01-06,1\n2020-01-13,1,2\n")), ConfigError);
    CHECK_THROWS_AS(read_price_csv(temp_file("drbsde_gap.csv", "date,a\n2020-01-06,1\n2020-01-13,2\n2020-01-27,3\n")),
                    ConfigError);
    CHECK_THROWS_AS(read_price_csv("/nonexistent/prices.csv"), IoError);
    try {
        read_price_csv(temp_file("drbsde_bad.csv", "date,a\n2020-01-06,1\n2020-01-13,abc\n"));
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        CHECK(what.find("row 3") != std::string::npos);
        CHECK(what.find("'a'") != std::string::npos);
    }
}
