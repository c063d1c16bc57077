#include "drbsde/market.hpp"

#include "drbsde/error.hpp"
#include "drbsde/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <climits>
#include <cmath>
#include <string>

namespace drbsde {

TimeGrid build_time_grid(double horizon, int steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
        throw ConfigError("time grid: horizon must be positive and finite, got " + std::to_string(horizon));
    }
    if (steps < 1) throw ConfigError("time grid: steps must be >= 1, got " + std::to_string(steps));
    TimeGrid g;
    g.horizon = horizon;
    g.steps = steps;
    g.dt = horizon / steps;
    g.nodes.resize(static_cast<std::size_t>(steps) + 1);
    for (int n = 0; n < steps; ++n) g.nodes[static_cast<std::size_t>(n)] = n * g.dt;
    g.nodes.back() = horizon;
    return g;
}

bool OUParams::is_diagonal() const {
    const auto off = [](const Eigen::MatrixXd& m) {
        Eigen::MatrixXd c = m;
        c.diagonal().setZero();
        return c.cwiseAbs().maxCoeff() == 0.0;
    };
    return dim() == 1 || (off(kappa) && off(sigma));
}

void OUParams::validate() const {
    const int d = dim();
    if (d < 1) throw ConfigError("OU params: dimension must be >= 1");
    if (kappa.rows() != d || kappa.cols() != d || sigma.rows() != d || sigma.cols() != d) {
        throw ConfigError("OU params: kappa and sigma must be " + std::to_string(d) + "x" + std::to_string(d));
    }
    if (!kappa.allFinite() || !mu.allFinite() || !sigma.allFinite()) {
        throw ConfigError("OU params: non-finite entry");
    }
    const Eigen::MatrixXd sym = 0.5 * (kappa + kappa.transpose());
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() <= 0.0) {
        throw ConfigError("OU params: kappa is not positive definite");
    }
}

OUParams OUParams::diagonal(const Eigen::VectorXd& kappa, const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma) {
    OUParams p;
    p.kappa = kappa.asDiagonal();
    p.mu = mu;
    p.sigma = sigma.asDiagonal();
    return p;
}

OUParams OUParams::scalar(double kappa, double mu, double sigma) {
    return diagonal(Eigen::VectorXd::Constant(1, kappa), Eigen::VectorXd::Constant(1, mu),
                    Eigen::VectorXd::Constant(1, sigma));
}

void SdeCoefficients::euler_step(double t, double dt, std::span<const double> x, std::span<const double> dB,
                                 std::span<double> out) const {
    const int d = dim();
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), d);
    const Eigen::Map<const Eigen::VectorXd> db(dB.data(), d);
    Eigen::Map<Eigen::VectorXd> o(out.data(), d);
    o = xv + drift(t, xv) * dt + diffusion(t, xv) * db;
}

OrnsteinUhlenbeck::OrnsteinUhlenbeck(OUParams params) : params_(std::move(params)) {
    params_.validate();
    diagonal_ = params_.is_diagonal();
    kappa_diag_ = params_.kappa.diagonal();
    sigma_diag_ = params_.sigma.diagonal();
}

Eigen::VectorXd OrnsteinUhlenbeck::drift(double, const Eigen::VectorXd& x) const {
    return params_.kappa * (params_.mu - x);
}

Eigen::MatrixXd OrnsteinUhlenbeck::diffusion(double, const Eigen::VectorXd&) const { return params_.sigma; }

void OrnsteinUhlenbeck::euler_step(double t, double dt, std::span<const double> x, std::span<const double> dB,
                                   std::span<double> out) const {
    if (!diagonal_) {
        SdeCoefficients::euler_step(t, dt, x, dB, out);
        return;
    }
    const std::size_t d = x.size();
    for (std::size_t k = 0; k < d; ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        out[k] = x[k] + kappa_diag_[i] * (params_.mu[i] - x[k]) * dt + sigma_diag_[i] * dB[k];
    }
}

PathBatch simulate_paths(const SdeCoefficients& coeffs, const Eigen::VectorXd& x0, const TimeGrid& grid, int paths,
                         std::uint64_t seed, Execution exec, std::uint64_t first_path) {
    const int d = coeffs.dim();
    if (paths < 1) throw ConfigError("simulate_paths: path count must be >= 1");
    if (x0.size() != d) throw ContractError("simulate_paths: x0 has wrong dimension");
    if (!x0.allFinite()) throw ConfigError("simulate_paths: x0 is not finite");
    if (grid.steps < 1 || grid.nodes.size() != static_cast<std::size_t>(grid.steps) + 1) {
        throw ContractError("simulate_paths: malformed time grid");
    }

    PathBatch batch;
    batch.grid = grid;
    batch.paths = paths;
    batch.dim = d;
    batch.seed = seed;
    const std::size_t blk = batch.block();
    const int N = grid.steps;
    batch.states.resize(blk * (static_cast<std::size_t>(N) + 1));
    batch.increments.resize(blk * static_cast<std::size_t>(N));

    const Philox rng(derive_seed(seed, seed_tags::paths));
    const double sqdt = std::sqrt(grid.dt);
    std::atomic<int> first_bad_step{INT_MAX};

    const auto run_path = [&](int j) {
        std::vector<double> x(x0.data(), x0.data() + d);
        std::vector<double> next(static_cast<std::size_t>(d));
        std::vector<double> db(static_cast<std::size_t>(d));
        for (int k = 0; k < d; ++k) batch.states[static_cast<std::size_t>(k) * paths + j] = x[static_cast<std::size_t>(k)];
        for (int n = 0; n < N; ++n) {
            rng.fill_normals(first_path + static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(n), db);
            for (double& v : db) v *= sqdt;
            coeffs.euler_step(grid.time(n), grid.dt, x, db, next);
            bool finite = true;
            const std::size_t base_inc = static_cast<std::size_t>(n) * blk;
            const std::size_t base_state = static_cast<std::size_t>(n + 1) * blk;
            for (int k = 0; k < d; ++k) {
                const auto kk = static_cast<std::size_t>(k);
                finite = finite && std::isfinite(next[kk]);
                batch.increments[base_inc + kk * paths + j] = db[kk];
                batch.states[base_state + kk * paths + j] = next[kk];
            }
            if (!finite) {
                int cur = first_bad_step.load();
                while (n + 1 < cur && !first_bad_step.compare_exchange_weak(cur, n + 1)) {
                }
                return;
            }
            std::swap(x, next);
        }
    };

    if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
        for (int j = 0; j < paths; ++j) run_path(j);
    } else {
        for (int j = 0; j < paths; ++j) run_path(j);
    }

    if (first_bad_step.load() != INT_MAX) {
        throw NumericalError("simulate_paths: non-finite state produced at step " +
                             std::to_string(first_bad_step.load()));
    }
    return batch;
}

GaussianStep ou_exact_conditional(const OUParams& params, const Eigen::VectorXd& x, double dt, TransitionMode mode) {
    if (!params.is_diagonal()) {
        throw UnsupportedError("ou_exact_conditional: only diagonal kappa and sigma are supported");
    }
    if (dt < 0.0) throw ConfigError("ou_exact_conditional: dt must be non-negative");
    if (x.size() != params.dim()) throw ContractError("ou_exact_conditional: x has wrong dimension");
    const Eigen::ArrayXd k = params.kappa.diagonal().array();
    const Eigen::ArrayXd s = params.sigma.diagonal().array();
    const Eigen::ArrayXd m = params.mu.array();
    GaussianStep out;
    if (mode == TransitionMode::euler) {
        out.mean = (x.array() + k * (m - x.array()) * dt).matrix();
        out.stddev = (s.abs() * std::sqrt(dt)).matrix();
    } else {
        const Eigen::ArrayXd decay = (-k * dt).exp();
        out.mean = (m + (x.array() - m) * decay).matrix();
        // (1 - e^{-2 k dt}) / (2k) written with expm1 to stay accurate for small k dt.
        const Eigen::ArrayXd var_factor = -(-2.0 * k * dt).unaryExpr([](double v) { return std::expm1(v); }) / (2.0 * k);
        out.stddev = (s.abs() * var_factor.sqrt()).matrix();
    }
    return out;
}

EulerMarginals::EulerMarginals(const OrnsteinUhlenbeck& process, const Eigen::VectorXd& x0, const TimeGrid& grid)
    : process_(process), grid_(grid), diagonal_(process.params().is_diagonal()) {
    const OUParams& p = process_.params();
    const int d = p.dim();
    if (x0.size() != d) throw ContractError("EulerMarginals: x0 has wrong dimension");
    const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(d, d) - p.kappa * grid.dt;
    const Eigen::MatrixXd noise = p.sigma * p.sigma.transpose() * grid.dt;
    const auto steps = static_cast<std::size_t>(grid.steps) + 1;
    means_.resize(steps);
    covs_.resize(steps);
    factors_.resize(steps);
    means_[0] = x0;
    covs_[0] = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t n = 1; n < steps; ++n) {
        means_[n] = means_[n - 1] + p.kappa * (p.mu - means_[n - 1]) * grid.dt;
        covs_[n] = A * covs_[n - 1] * A.transpose() + noise;
        covs_[n] = 0.5 * (covs_[n] + covs_[n].transpose());
    }
    for (std::size_t n = 0; n < steps; ++n) {
        if (diagonal_) {
            factors_[n] = covs_[n].diagonal().cwiseMax(0.0).cwiseSqrt().asDiagonal();
        } else {
            const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(covs_[n]);
            factors_[n] = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                          es.eigenvectors().transpose();
        }
    }
}

TransitionBatch EulerMarginals::sample(int n, int batch, std::uint64_t seed, Execution exec) const {
    if (n < 0 || n >= grid_.steps) throw ContractError("EulerMarginals::sample: step out of range");
    if (batch < 1) throw ConfigError("EulerMarginals::sample: batch must be >= 1");
    const int d = process_.dim();
    const auto ns = static_cast<std::size_t>(n);
    TransitionBatch out;
    out.x_now.resize(batch, d);
    out.increments.resize(batch, d);
    out.x_next.resize(batch, d);
    const Philox rng(seed);
    const double sqdt = std::sqrt(grid_.dt);
    const Eigen::VectorXd& m = means_[ns];
    const Eigen::MatrixXd& L = factors_[ns];
    const double t = grid_.time(n);

    const auto run = [&](int j) {
        std::vector<double> z(2 * static_cast<std::size_t>(d));
        std::vector<double> x(static_cast<std::size_t>(d));
        std::vector<double> db(static_cast<std::size_t>(d));
        std::vector<double> next(static_cast<std::size_t>(d));
        rng.fill_normals(static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(n), z);
        for (int k = 0; k < d; ++k) {
            const auto kk = static_cast<std::size_t>(k);
            double v = m[k];
            if (diagonal_) {
                v += L(k, k) * z[kk];
            } else {
                for (int l = 0; l < d; ++l) v += L(k, l) * z[static_cast<std::size_t>(l)];
            }
            x[kk] = v;
            db[kk] = sqdt * z[static_cast<std::size_t>(d) + kk];
        }
        process_.euler_step(t, grid_.dt, x, db, next);
        for (int k = 0; k < d; ++k) {
            const auto kk = static_cast<std::size_t>(k);
            out.x_now(j, k) = x[kk];
            out.increments(j, k) = db[kk];
            out.x_next(j, k) = next[kk];
        }
    };

    if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
        for (int j = 0; j < batch; ++j) run(j);
    } else {
        for (int j = 0; j < batch; ++j) run(j);
    }
    return out;
}

}  // namespace drbsde
