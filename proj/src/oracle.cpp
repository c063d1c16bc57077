#include "drbsde/oracle.hpp"

#include "drbsde/error.hpp"
#include "drbsde/rng.hpp"
#include "drbsde/stats.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace drbsde {

namespace {

constexpr double kTailCut = 9.0;  // standard deviations; mass beyond is < 1e-18

double phi_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

// P(zl < Z < zr) without cancellation in either tail.
double normal_mass(double zl, double zr) {
    if (zl > 0.0) return 0.5 * (std::erfc(zl / std::numbers::sqrt2) - std::erfc(zr / std::numbers::sqrt2));
    if (zr < 0.0) return 0.5 * (std::erfc(-zr / std::numbers::sqrt2) - std::erfc(-zl / std::numbers::sqrt2));
    return 1.0 - 0.5 * std::erfc(-zl / std::numbers::sqrt2) - 0.5 * std::erfc(zr / std::numbers::sqrt2);
}

double lower_tail(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
double upper_tail(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

void check_one_dimensional(const GameProblem& problem) {
    if (problem.dim() != 1) {
        throw UnsupportedError("oracle: only one-dimensional problems are supported, got d = " +
                               std::to_string(problem.dim()));
    }
}

}  // namespace

std::string to_string(Interpolation i) { return i == Interpolation::monotone_cubic ? "monotone_cubic" : "linear"; }

std::string to_string(Expectation e) { return e == Expectation::exact_piecewise ? "exact_piecewise" : "gauss_hermite"; }

Interpolation interpolation_from_string(const std::string& name) {
    if (name == "monotone_cubic") return Interpolation::monotone_cubic;
    if (name == "linear") return Interpolation::linear;
    throw ConfigError("unknown interpolation '" + name + "' (expected monotone_cubic or linear)");
}

Expectation expectation_from_string(const std::string& name) {
    if (name == "exact_piecewise") return Expectation::exact_piecewise;
    if (name == "gauss_hermite") return Expectation::gauss_hermite;
    throw ConfigError("unknown expectation '" + name + "' (expected exact_piecewise or gauss_hermite)");
}

GridSpec GridSpec::around(const OUParams& ou, double x0, double width) {
    const double k = ou.kappa(0, 0);
    const double s = std::abs(ou.sigma(0, 0));
    const double sd = s / std::sqrt(2.0 * k);
    const double mu = ou.mu[0];
    GridSpec g;
    g.lo = std::min(x0, mu) - width * sd;
    g.hi = std::max(x0, mu) + width * sd;
    return g;
}

void GridSpec::validate(const OUParams& ou, double x0) const {
    if (ou.dim() != 1) throw UnsupportedError("oracle grid: one-dimensional OU only");
    if (!(hi > lo)) throw ConfigError("oracle grid: hi must exceed lo");
    if (nodes < 200) throw ConfigError("oracle grid: at least 200 nodes are required");
    if (gh_order < 16) throw ConfigError("oracle grid: Gauss-Hermite order must be >= 16");
    const double sd = std::abs(ou.sigma(0, 0)) / std::sqrt(2.0 * ou.kappa(0, 0));
    if (lo > x0 - 6.0 * sd || hi < x0 + 6.0 * sd) {
        throw ConfigError("oracle grid: bounds must cover x0 +- 6 stationary standard deviations");
    }
    if (!(coverage_tol > 0.0)) throw ConfigError("oracle grid: coverage tolerance must be positive");
}

GridInterpolant::GridInterpolant(double lo, double hi, const std::vector<double>& v, Interpolation kind)
    : lo_(lo), h_((hi - lo) / static_cast<double>(v.size() - 1)), front_(v.front()), back_(v.back()) {
    const std::size_t n = v.size();
    if (n < 2) throw ContractError("interpolant: need at least two nodes");
    std::vector<double> delta(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) delta[i] = (v[i + 1] - v[i]) / h_;
    std::vector<double> d(n, 0.0);
    if (kind == Interpolation::monotone_cubic) {
        // Fritsch-Carlson slopes (harmonic mean on a uniform grid), one-sided
        // shape-preserving three-point slopes at the ends.
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double a = delta[i - 1];
            const double b = delta[i];
            d[i] = (a * b > 0.0) ? 2.0 / (1.0 / a + 1.0 / b) : 0.0;
        }
        const auto end_slope = [](double d0, double d1) {
            double s = 0.5 * (3.0 * d0 - d1);
            if (s * d0 <= 0.0) {
                s = 0.0;
            } else if (d0 * d1 <= 0.0 && std::abs(s) > 3.0 * std::abs(d0)) {
                s = 3.0 * d0;
            }
            return s;
        };
        if (n == 2) {
            d[0] = d[1] = delta[0];
        } else {
            d[0] = end_slope(delta[0], delta[1]);
            d[n - 1] = end_slope(delta[n - 2], delta[n - 3]);
        }
    }
    coeffs_.resize(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (kind == Interpolation::linear) {
            coeffs_[i] = {v[i], delta[i], 0.0, 0.0};
        } else {
            coeffs_[i] = {v[i], d[i], (3.0 * delta[i] - 2.0 * d[i] - d[i + 1]) / h_,
                          (d[i] + d[i + 1] - 2.0 * delta[i]) / (h_ * h_)};
        }
    }
}

double GridInterpolant::operator()(double x) const {
    const double pos = (x - lo_) / h_;
    if (!(pos > 0.0)) return front_;
    if (pos >= static_cast<double>(coeffs_.size())) return back_;
    const auto i = static_cast<std::size_t>(pos);
    const auto& c = coeffs_[i];
    const double u = x - node(i);
    return c[0] + u * (c[1] + u * (c[2] + u * c[3]));
}

GaussianMoments expect_exact(const GridInterpolant& p, double m, double s) {
    if (!(s > 0.0)) return {p(m), 0.0};
    GaussianMoments out;
    const double first = p.node(0);
    const double last = p.node(p.cells());
    // Constant extrapolation beyond the grid.
    const double z_first = (first - m) / s;
    const double z_last = (last - m) / s;
    if (z_first > -kTailCut) {
        out.value += p.front() * lower_tail(z_first);
        out.weighted -= p.front() * phi_pdf(z_first);
    }
    if (z_last < kTailCut) {
        out.value += p.back() * upper_tail(z_last);
        out.weighted += p.back() * phi_pdf(z_last);
    }
    const double h = p.spacing();
    const auto cells = static_cast<long>(p.cells());
    const long i0 = std::max(0L, static_cast<long>(std::floor((m - kTailCut * s - first) / h)));
    const long i1 = std::min(cells - 1, static_cast<long>(std::ceil((m + kTailCut * s - first) / h)));
    for (long i = i0; i <= i1; ++i) {
        const auto ci = static_cast<std::size_t>(i);
        const double xl = p.node(ci);
        const double zl = (xl - m) / s;
        const double zr = (p.node(ci + 1) - m) / s;
        const double pl = phi_pdf(zl);
        const double pr = phi_pdf(zr);
        // M_j = int_{zl}^{zr} z^j phi(z) dz
        double M[5];
        M[0] = normal_mass(zl, zr);
        M[1] = pl - pr;
        M[2] = M[0] + zl * pl - zr * pr;
        M[3] = 2.0 * M[1] + zl * zl * pl - zr * zr * pr;
        M[4] = 3.0 * M[2] + zl * zl * zl * pl - zr * zr * zr * pr;
        const auto& c = p.cell(ci);
        const double a = m - xl;  // u = a + s z
        const double a2 = a * a;
        const double s2 = s * s;
        const auto poly = [&](const double* Mj) {
            const double t0 = Mj[0];
            const double t1 = a * Mj[0] + s * Mj[1];
            const double t2 = a2 * Mj[0] + 2.0 * a * s * Mj[1] + s2 * Mj[2];
            const double t3 = a2 * a * Mj[0] + 3.0 * a2 * s * Mj[1] + 3.0 * a * s2 * Mj[2] + s2 * s * Mj[3];
            return c[0] * t0 + c[1] * t1 + c[2] * t2 + c[3] * t3;
        };
        out.value += poly(M);
        out.weighted += poly(M + 1);
    }
    return out;
}

void gauss_hermite_rule(int order, std::vector<double>& nodes, std::vector<double>& weights) {
    if (order < 1) throw ConfigError("Gauss-Hermite order must be >= 1");
    // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(order, order);
    for (int k = 1; k < order; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    nodes.resize(static_cast<std::size_t>(order));
    weights.resize(static_cast<std::size_t>(order));
    for (int i = 0; i < order; ++i) {
        nodes[static_cast<std::size_t>(i)] = es.eigenvalues()[i];
        const double v = es.eigenvectors()(0, i);
        weights[static_cast<std::size_t>(i)] = v * v;
    }
}

GaussianMoments expect_gauss_hermite(const GridInterpolant& p, double m, double s, int order) {
    std::vector<double> z;
    std::vector<double> w;
    gauss_hermite_rule(order, z, w);
    GaussianMoments out;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double v = p(m + s * z[i]);
        out.value += w[i] * v;
        out.weighted += w[i] * v * z[i];
    }
    return out;
}

double OracleSolution::value_at(int n, double x) const {
    return GridInterpolant(spec.lo, spec.hi, value[static_cast<std::size_t>(n)], spec.interpolation)(x);
}

double OracleSolution::continuation_at(int n, double x) const {
    return GridInterpolant(spec.lo, spec.hi, continuation[static_cast<std::size_t>(n)], spec.interpolation)(x);
}

OracleSolution grid_dp_solve(const GameProblem& problem, const GridSpec& spec, Execution exec) {
    check_one_dimensional(problem);
    problem.validate();
    const double x0 = problem.x0[0];
    spec.validate(problem.ou, x0);
    const TimeGrid& grid = problem.grid;
    const int N = grid.steps;
    const double dt = grid.dt;
    const double kappa = problem.ou.kappa(0, 0);
    const double mu = problem.ou.mu[0];
    const double sigma = std::abs(problem.ou.sigma(0, 0));

    // Coverage of the law of X_n started at x0.
    {
        double m = x0;
        double var = 0.0;
        for (int n = 1; n <= N; ++n) {
            if (spec.transition == TransitionMode::euler) {
                m = m + kappa * (mu - m) * dt;
                var = (1.0 - kappa * dt) * (1.0 - kappa * dt) * var + sigma * sigma * dt;
            } else {
                const double e = std::exp(-kappa * dt);
                m = mu + (m - mu) * e;
                var = var * e * e + sigma * sigma * -std::expm1(-2.0 * kappa * dt) / (2.0 * kappa);
            }
            const double sd = std::sqrt(var);
            const double outside = lower_tail((spec.lo - m) / sd) + upper_tail((spec.hi - m) / sd);
            if (outside > spec.coverage_tol) {
                throw NumericalError("oracle grid: probability " + std::to_string(outside) +
                                     " leaves [lo, hi] at step " + std::to_string(n));
            }
        }
    }

    OracleSolution sol;
    sol.grid = grid;
    sol.spec = spec;
    sol.barriers = problem.barriers;
    sol.x0 = x0;
    const int K = spec.nodes;
    sol.x.resize(static_cast<std::size_t>(K));
    const double h = (spec.hi - spec.lo) / (K - 1);
    for (int i = 0; i < K; ++i) sol.x[static_cast<std::size_t>(i)] = spec.lo + h * i;
    sol.x.back() = spec.hi;

    const auto NN = static_cast<std::size_t>(N);
    sol.value.assign(NN + 1, std::vector<double>(static_cast<std::size_t>(K)));
    sol.continuation.assign(NN, std::vector<double>(static_cast<std::size_t>(K)));
    sol.z.assign(NN, std::vector<double>(static_cast<std::size_t>(K)));
    sol.stop_upper.assign(NN, std::vector<std::uint8_t>(static_cast<std::size_t>(K)));
    sol.stop_lower.assign(NN, std::vector<std::uint8_t>(static_cast<std::size_t>(K)));
    for (int i = 0; i < K; ++i) {
        sol.value[NN][static_cast<std::size_t>(i)] = problem.payoff.terminal(Eigen::VectorXd::Constant(1, sol.x[static_cast<std::size_t>(i)]));
    }

    std::vector<double> gh_z;
    std::vector<double> gh_w;
    if (spec.expectation == Expectation::gauss_hermite) gauss_hermite_rule(spec.gh_order, gh_z, gh_w);
    const double sqdt = std::sqrt(dt);
    const OUParams& ou = problem.ou;

    for (int n = N - 1; n >= 0; --n) {
        const auto ns = static_cast<std::size_t>(n);
        const GridInterpolant next(spec.lo, spec.hi, sol.value[ns + 1], spec.interpolation);
        const double t = grid.time(n);
        const double hi_b = problem.barriers.upper(t);
        const double lo_b = problem.barriers.lower(t);
        const auto node = [&](int i) {
            const auto is = static_cast<std::size_t>(i);
            const double x = sol.x[is];
            const GaussianStep step = ou_exact_conditional(ou, Eigen::VectorXd::Constant(1, x), dt, spec.transition);
            const double m = step.mean[0];
            const double s = step.stddev[0];
            GaussianMoments e;
            if (spec.expectation == Expectation::exact_piecewise) {
                e = expect_exact(next, m, s);
            } else {
                for (std::size_t q = 0; q < gh_z.size(); ++q) {
                    const double v = next(m + s * gh_z[q]);
                    e.value += gh_w[q] * v;
                    e.weighted += gh_w[q] * v * gh_z[q];
                }
            }
            const double yt = e.value + problem.payoff.running(t, Eigen::VectorXd::Constant(1, x)) * dt;
            sol.continuation[ns][is] = yt;
            sol.z[ns][is] = e.weighted / sqdt;
            sol.value[ns][is] = std::clamp(yt, lo_b, hi_b);
            sol.stop_upper[ns][is] = yt >= hi_b ? 1 : 0;
            sol.stop_lower[ns][is] = yt <= lo_b ? 1 : 0;
        };
        if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
            for (int i = 0; i < K; ++i) node(i);
        } else {
            for (int i = 0; i < K; ++i) node(i);
        }
    }
    sol.y0 = sol.value_at(0, x0);
    return sol;
}

McEstimate nested_mc_solve(const GameProblem& problem, int samples_per_node, std::uint64_t seed) {
    check_one_dimensional(problem);
    problem.validate();
    const int N = problem.grid.steps;
    if (N > 5) throw ConfigError("nested Monte Carlo is limited to N <= 5");
    if (samples_per_node < 2) throw ConfigError("nested Monte Carlo needs at least 2 samples per node");
    const auto K = static_cast<std::uint64_t>(samples_per_node);
    const double dt = problem.grid.dt;
    const double kappa = problem.ou.kappa(0, 0);
    const double mu = problem.ou.mu[0];
    const double sdt = problem.ou.sigma(0, 0) * std::sqrt(dt);
    const Philox rng(derive_seed(seed, seed_tags::paths));
    const GameProblem& P = problem;

    // Tree nodes are numbered heap-style, so every draw has its own counter.
    const auto child_value = [&](auto&& self, int n, double x, std::uint64_t id) -> double {
        if (n == N) return P.payoff.terminal(Eigen::VectorXd::Constant(1, x));
        double sum = 0.0;
        for (std::uint64_t c = 0; c < K; ++c) {
            const std::uint64_t cid = id * K + c + 1;
            const double z = rng.normal_pair(cid, static_cast<std::uint64_t>(n))[0];
            sum += self(self, n + 1, x + kappa * (mu - x) * dt + sdt * z, cid);
        }
        const double t = P.grid.time(n);
        const double yt = sum / static_cast<double>(K) + P.payoff.running(t, Eigen::VectorXd::Constant(1, x)) * dt;
        return std::clamp(yt, P.barriers.lower(t), P.barriers.upper(t));
    };

    const double x0 = problem.x0[0];
    std::vector<double> kids(static_cast<std::size_t>(K));
    for (std::uint64_t c = 0; c < K; ++c) {
        const double z = rng.normal_pair(c + 1, 0)[0];
        kids[c] = child_value(child_value, 1, x0 + kappa * (mu - x0) * dt + sdt * z, c + 1);
    }
    const double t0 = problem.grid.time(0);
    McEstimate est;
    const double yt = stats::mean(kids) + problem.payoff.running(t0, problem.x0) * dt;
    est.mean = std::clamp(yt, problem.barriers.lower(t0), problem.barriers.upper(t0));
    est.std_error = stats::stddev(kids) / std::sqrt(static_cast<double>(K));
    return est;
}

ExitTimes oracle_exit_times(const OracleSolution& oracle, const PathBatch& paths) {
    if (!(paths.grid == oracle.grid) || paths.dim != 1) throw ContractError("oracle_exit_times: path grid mismatch");
    const int N = oracle.grid.steps;
    ExitTimes ex;
    ex.upper.assign(static_cast<std::size_t>(paths.paths), N);
    ex.lower.assign(static_cast<std::size_t>(paths.paths), N);
    for (int n = N - 1; n >= 0; --n) {
        const GridInterpolant cont(oracle.spec.lo, oracle.spec.hi, oracle.continuation[static_cast<std::size_t>(n)],
                                   oracle.spec.interpolation);
        const double t = oracle.grid.time(n);
        const double hi = oracle.barriers.upper(t);
        const double lo = oracle.barriers.lower(t);
        for (int j = 0; j < paths.paths; ++j) {
            const double c = cont(paths.state(n, j, 0));
            if (c >= hi) ex.upper[static_cast<std::size_t>(j)] = n;
            if (c <= lo) ex.lower[static_cast<std::size_t>(j)] = n;
        }
    }
    return ex;
}

std::vector<double> stopping_times(const ExitTimes& ex, const TimeGrid& grid) {
    std::vector<double> out(ex.upper.size());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = grid.time(std::min(ex.upper[j], ex.lower[j]));
    return out;
}

ComparisonReport compare_to_deep(const OracleSolution& oracle, const TrainedSolver& deep, const GameProblem& problem,
                                 int eval_paths, std::uint64_t seed, Execution exec) {
    check_one_dimensional(problem);
    if (!(deep.grid == oracle.grid) || !(problem.grid == oracle.grid)) {
        throw ContractError("compare_to_deep: solver, oracle and problem grids differ");
    }
    const auto same_barriers = [](const BarrierSpec& a, const BarrierSpec& b) {
        return a.kind == b.kind && a.gamma_upper == b.gamma_upper && a.gamma_lower == b.gamma_lower && a.rho == b.rho;
    };
    if (!same_barriers(deep.barriers, oracle.barriers) || !same_barriers(problem.barriers, oracle.barriers) ||
        deep.dim != 1) {
        throw ContractError("compare_to_deep: solver and oracle solve different games");
    }
    ComparisonReport rep;
    rep.y0_oracle = oracle.y0;
    rep.y0_deep = deep.y0(problem.x0);
    rep.y0_abs_error = std::abs(rep.y0_deep - rep.y0_oracle);

    const OrnsteinUhlenbeck ou(problem.ou);
    const PathBatch pb = simulate_paths(ou, problem.x0, oracle.grid, eval_paths, seed, exec);
    const Rollout r = rollout(deep, pb, false, exec);
    const int N = oracle.grid.steps;
    double se = 0.0;
    for (int n = 0; n < N; ++n) {
        const GridInterpolant cont(oracle.spec.lo, oracle.spec.hi, oracle.continuation[static_cast<std::size_t>(n)],
                                   oracle.spec.interpolation);
        const double t = oracle.grid.time(n);
        for (int j = 0; j < pb.paths; ++j) {
            const double y = std::clamp(cont(pb.state(n, j, 0)), oracle.barriers.lower(t), oracle.barriers.upper(t));
            const double diff = r.y_hat(j, n) - y;
            se += diff * diff;
        }
    }
    rep.path_rmse = std::sqrt(se / (static_cast<double>(N) * pb.paths));

    const ExitTimes deep_ex = extract_exit_times(r, deep.barriers, oracle.grid);
    const ExitTimes orc_ex = oracle_exit_times(oracle, pb);
    const auto ks = stats::ks_two_sample(stopping_times(deep_ex, oracle.grid), stopping_times(orc_ex, oracle.grid));
    rep.exit_ks_distance = ks.statistic;
    rep.exit_ks_pvalue = ks.pvalue;
    rep.payoff_deep = evaluate_payoff(pb, deep_ex.upper, deep_ex.lower, problem.payoff, problem.barriers);
    rep.payoff_oracle = evaluate_payoff(pb, orc_ex.upper, orc_ex.lower, problem.payoff, problem.barriers);
    return rep;
}

}  // namespace drbsde
