#include "drbsde/calibration.hpp"

#include "drbsde/error.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <Eigen/Dense>

#include <chrono>
#include <cstdio>
#include <optional>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace drbsde {

namespace {

// Pooled transition pairs (X_i, X_{i+1}) over all segments.
struct Transitions {
    std::vector<double> x;
    std::vector<double> y;
};

Transitions transitions_of(const PriceSeries& s) {
    Transitions t;
    for (const auto& seg : s.segments) {
        for (std::size_t i = 0; i + 1 < seg.size(); ++i) {
            t.x.push_back(seg[i]);
            t.y.push_back(seg[i + 1]);
        }
    }
    return t;
}

double quad_factor(LikelihoodForm f) { return f == LikelihoodForm::exact ? 1.0 : 0.5; }

// Negative mean log-likelihood in a well-scaled parameterization:
// r = (y - x) + u0 (x - xbar) / sx - u1, noise sd = exp(u2).
struct Objective {
    const Transitions* tr;
    double xbar;
    double sx;
    double c;
};

double nll(const gsl_vector* u, void* params) {
    const auto* o = static_cast<const Objective*>(params);
    const double u0 = gsl_vector_get(u, 0);
    const double u1 = gsl_vector_get(u, 1);
    const double u2 = gsl_vector_get(u, 2);
    const double inv_var = std::exp(-2.0 * u2);
    double s = 0.0;
    const std::size_t n = o->tr->x.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double x = o->tr->x[i];
        const double r = (o->tr->y[i] - x) + u0 * (x - o->xbar) / o->sx - u1;
        s += r * r;
    }
    return u2 + 0.5 * std::log(2.0 * std::numbers::pi) + 0.5 * o->c * inv_var * s / static_cast<double>(n);
}

void nll_grad(const gsl_vector* u, void* params, gsl_vector* g) {
    const auto* o = static_cast<const Objective*>(params);
    const double u0 = gsl_vector_get(u, 0);
    const double u1 = gsl_vector_get(u, 1);
    const double u2 = gsl_vector_get(u, 2);
    const double inv_var = std::exp(-2.0 * u2);
    double g0 = 0.0;
    double g1 = 0.0;
    double ss = 0.0;
    const std::size_t n = o->tr->x.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double x = o->tr->x[i];
        const double z = (x - o->xbar) / o->sx;
        const double r = (o->tr->y[i] - x) + u0 * z - u1;
        g0 += r * z;
        g1 -= r;
        ss += r * r;
    }
    const double dn = static_cast<double>(n);
    gsl_vector_set(g, 0, o->c * inv_var * g0 / dn);
    gsl_vector_set(g, 1, o->c * inv_var * g1 / dn);
    gsl_vector_set(g, 2, 1.0 - o->c * inv_var * ss / dn);
}

void nll_fdf(const gsl_vector* u, void* params, double* f, gsl_vector* g) {
    *f = nll(u, params);
    nll_grad(u, params, g);
}

OUScalar quasi_newton_fit(const Transitions& tr, double dt, LikelihoodForm form) {
    const std::size_t n = tr.x.size();
    double xbar = 0.0;
    for (const double v : tr.x) xbar += v;
    xbar /= static_cast<double>(n);
    double sx = 0.0;
    double sd = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += (tr.x[i] - xbar) * (tr.x[i] - xbar);
        sd += (tr.y[i] - tr.x[i]) * (tr.y[i] - tr.x[i]);
    }
    sx = std::sqrt(sx / static_cast<double>(n));
    sd = std::sqrt(sd / static_cast<double>(n));
    Objective obj{&tr, xbar, sx, quad_factor(form)};

    gsl_multimin_function_fdf fn;
    fn.n = 3;
    fn.f = &nll;
    fn.df = &nll_grad;
    fn.fdf = &nll_fdf;
    fn.params = &obj;

    // Start from "half the distance reverts per step, no drift, raw step noise",
    // deliberately away from the regression solution.
    gsl_vector* u = gsl_vector_alloc(3);
    gsl_vector_set(u, 0, 0.5 * sx);
    gsl_vector_set(u, 1, 0.0);
    gsl_vector_set(u, 2, std::log(std::max(sd, 1e-300)));
    gsl_multimin_fdfminimizer* m = gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, 3);
    gsl_multimin_fdfminimizer_set(m, &fn, u, 0.1, 0.1);
    int status = GSL_CONTINUE;
    for (int iter = 0; iter < 1000 && status == GSL_CONTINUE; ++iter) {
        if (gsl_multimin_fdfminimizer_iterate(m) != GSL_SUCCESS) break;
        status = gsl_multimin_test_gradient(m->gradient, 1e-10);
    }
    const double u0 = gsl_vector_get(m->x, 0);
    const double u1 = gsl_vector_get(m->x, 1);
    const double u2 = gsl_vector_get(m->x, 2);
    gsl_multimin_fdfminimizer_free(m);
    gsl_vector_free(u);

    // Back to (kappa, mu, sigma): X_{i+1} - X_i = -k dt X_i + k mu dt + noise.
    const double kdt = u0 / sx;
    const double intercept = u1 + kdt * xbar;
    OUScalar p;
    p.kappa = kdt / dt;
    p.mu = intercept / kdt;
    p.sigma = std::exp(u2) / std::sqrt(dt);
    return p;
}

std::array<double, 3> asymptotic_std_errors(const OUScalar& p, const PriceSeries& s, LikelihoodForm form) {
    const std::array<double, 3> base{p.kappa, p.mu, p.sigma};
    std::array<double, 3> h{};
    for (int i = 0; i < 3; ++i) h[static_cast<std::size_t>(i)] = 1e-4 * std::max(std::abs(base[static_cast<std::size_t>(i)]), 1e-3);
    const auto f = [&](std::array<double, 3> v) { return ou_loglik({v[0], v[1], v[2]}, s, form); };
    Eigen::Matrix3d H;
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = i; j < 3; ++j) {
            auto pp = base, pm = base, mp = base, mm = base;
            pp[i] += h[i];
            pp[j] += h[j];
            pm[i] += h[i];
            pm[j] -= h[j];
            mp[i] -= h[i];
            mp[j] += h[j];
            mm[i] -= h[i];
            mm[j] -= h[j];
            const double v = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h[i] * h[j]);
            H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
            H(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
        }
    }
    const Eigen::Matrix3d cov = (-H).inverse();
    std::array<double, 3> se{};
    for (Eigen::Index i = 0; i < 3; ++i) se[static_cast<std::size_t>(i)] = std::sqrt(std::max(cov(i, i), 0.0));
    return se;
}

std::chrono::sys_days parse_date(const std::string& text, std::size_t row) {
    int y = 0;
    unsigned m = 0;
    unsigned d = 0;
    char tail = 0;
    if (std::sscanf(text.c_str(), "%d-%u-%u%c", &y, &m, &d, &tail) != 3) {
        throw ConfigError("price CSV row " + std::to_string(row) + ": date '" + text + "' is not YYYY-MM-DD");
    }
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) throw ConfigError("price CSV row " + std::to_string(row) + ": invalid date '" + text + "'");
    return std::chrono::sys_days{ymd};
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

std::size_t PriceSeries::observations() const {
    std::size_t n = 0;
    for (const auto& s : segments) n += s.size();
    return n;
}

std::size_t PriceSeries::transitions() const {
    std::size_t n = 0;
    for (const auto& s : segments) n += s.empty() ? 0 : s.size() - 1;
    return n;
}

void PriceSeries::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("series '" + label + "': dt must be positive");
    for (const auto& seg : segments) {
        for (const double v : seg) {
            if (!std::isfinite(v)) throw ConfigError("series '" + label + "': non-finite value");
        }
    }
    if (observations() < 30) {
        throw ConfigError("series '" + label + "': at least 30 observations are required, found " +
                          std::to_string(observations()));
    }
}

PriceSeries PriceSeries::from_values(std::string label, std::vector<double> values, double dt) {
    PriceSeries s;
    s.label = std::move(label);
    s.dt = dt;
    s.segments.push_back(std::move(values));
    return s;
}

std::string to_string(LikelihoodForm f) { return f == LikelihoodForm::exact ? "exact" : "as_printed"; }

LikelihoodForm likelihood_form_from_string(const std::string& name) {
    if (name == "exact") return LikelihoodForm::exact;
    if (name == "as_printed") return LikelihoodForm::as_printed;
    throw ConfigError("unknown likelihood form '" + name + "' (expected exact or as_printed)");
}

double ou_loglik(const OUScalar& p, const PriceSeries& series, LikelihoodForm form) {
    if (!(p.sigma > 0.0)) throw ConfigError("ou_loglik: sigma must be positive");
    if (!(series.dt > 0.0)) throw ConfigError("ou_loglik: dt must be positive");
    const double var = p.sigma * p.sigma * series.dt;
    const double c = quad_factor(form);
    const double log_norm = std::log(2.0 * std::numbers::pi * var);
    double ll = 0.0;
    for (const auto& seg : series.segments) {
        for (std::size_t i = 0; i + 1 < seg.size(); ++i) {
            const double r = seg[i + 1] - (seg[i] + p.kappa * (p.mu - seg[i]) * series.dt);
            ll += -0.5 * (log_norm + c * r * r / var);
        }
    }
    return ll;
}

OUFitResult fit_mle(const PriceSeries& series, LikelihoodForm form) {
    series.validate();
    const Transitions tr = transitions_of(series);
    const std::size_t n = tr.x.size();
    if (n < 3) throw ConfigError("series '" + series.label + "': fewer than 3 transitions");
    const double dn = static_cast<double>(n);
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += tr.x[i];
        my += tr.y[i];
    }
    mx /= dn;
    my /= dn;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (tr.x[i] - mx) * (tr.x[i] - mx);
        sxy += (tr.x[i] - mx) * (tr.y[i] - my);
    }
    if (!(sxx > 1e-14 * std::max(1.0, mx * mx) * dn)) {
        throw NumericalError("series '" + series.label + "': regressor is constant, parameters are not identified");
    }
    const double a = sxy / sxx;
    const double b = my - a * mx;
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = tr.y[i] - (a * tr.x[i] + b);
        rss += r * r;
    }
    const double dt = series.dt;

    OUFitResult fit;
    fit.label = series.label;
    fit.form = form;
    fit.observations = series.observations();
    fit.transitions = n;
    fit.params.kappa = (1.0 - a) / dt;
    fit.params.mu = b / (1.0 - a);
    // The printed form puts an extra 1/2 on the quadratic term, which halves the
    // maximizing variance.
    fit.params.sigma = std::sqrt(quad_factor(form) * rss / dn / dt);
    if (!(fit.params.kappa > 0.0)) fit.warnings.push_back("kappa <= 0: the fitted process is mean-averting");
    if (!(fit.params.sigma > 1e-12 * std::max(1.0, std::abs(mx)))) {
        fit.warnings.push_back("sigma is numerically zero: the series is deterministic");
        fit.params.sigma = std::max(fit.params.sigma, 1e-300);
        fit.loglik = ou_loglik(fit.params, series, form);
        fit.quasi_newton = fit.params;
        fit.quasi_newton_loglik = fit.loglik;
        return fit;
    }
    fit.loglik = ou_loglik(fit.params, series, form);

    fit.quasi_newton = quasi_newton_fit(tr, dt, form);
    fit.quasi_newton_loglik = ou_loglik(fit.quasi_newton, series, form);
    fit.optimizer_gap = std::abs(fit.loglik - fit.quasi_newton_loglik) / std::max(std::abs(fit.loglik), 1e-300);
    if (fit.optimizer_gap > 1e-6) {
        fit.warnings.push_back("closed-form and quasi-Newton log-likelihoods differ by " + std::to_string(fit.optimizer_gap));
    }
    fit.std_errors = asymptotic_std_errors(fit.params, series, form);
    return fit;
}

void residual_diagnostics(OUFitResult& fit, const PriceSeries& series, int max_lag) {
    const Transitions tr = transitions_of(series);
    if (tr.x.size() < 8) throw ConfigError("series '" + series.label + "': fewer than 8 residuals");
    const double dt = series.dt;
    const double scale = fit.params.sigma * std::sqrt(dt);
    fit.residuals.resize(tr.x.size());
    for (std::size_t i = 0; i < tr.x.size(); ++i) {
        fit.residuals[i] = (tr.y[i] - tr.x[i] - fit.params.kappa * (fit.params.mu - tr.x[i]) * dt) / scale;
    }
    fit.ks = stats::ks_normal(fit.residuals);
    fit.acf = stats::acf(fit.residuals, max_lag);
    fit.qq = stats::normal_qq(fit.residuals);
}

std::vector<PriceSeries> read_price_csv(const std::string& path, double dt) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open price CSV '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("price CSV '" + path + "' is empty");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
    const auto header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "date") {
        throw ConfigError("price CSV '" + path + "': missing header, first line must be `date,<label>,...`");
    }
    const std::size_t cols = header.size() - 1;
    for (std::size_t c = 1; c < header.size(); ++c) {
        if (header[c].empty()) throw ConfigError("price CSV header: column " + std::to_string(c + 1) + " has no label");
    }
    std::vector<PriceSeries> series(cols);
    for (std::size_t c = 0; c < cols; ++c) {
        series[c].label = header[c + 1];
        series[c].dt = dt;
        series[c].segments.emplace_back();
    }
    std::size_t row = 1;
    std::optional<std::chrono::sys_days> prev;
    std::optional<long long> spacing;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw ConfigError("price CSV row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                              " columns, found " + std::to_string(cells.size()));
        }
        const auto day = parse_date(cells[0], row);
        if (prev) {
            const long long gap = (day - *prev).count();
            if (gap <= 0) throw ConfigError("price CSV row " + std::to_string(row) + ": dates must increase");
            if (!spacing) spacing = gap;
            if (gap != *spacing) {
                throw ConfigError("price CSV row " + std::to_string(row) + ": spacing of " + std::to_string(gap) +
                                  " days differs from " + std::to_string(*spacing));
            }
        }
        prev = day;
        for (std::size_t c = 0; c < cols; ++c) {
            const std::string& cell = cells[c + 1];
            auto& segs = series[c].segments;
            if (cell.empty() || cell == "NA" || cell == "NaN") {
                if (!segs.back().empty()) segs.emplace_back();
                continue;
            }
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != cell.size() || !std::isfinite(v)) {
                throw ConfigError("price CSV row " + std::to_string(row) + ", column '" + header[c + 1] +
                                  "': cannot parse '" + cell + "'");
            }
            segs.back().push_back(v);
        }
    }
    for (auto& s : series) {
        std::erase_if(s.segments, [](const std::vector<double>& seg) { return seg.empty(); });
    }
    return series;
}

}  // namespace drbsde
