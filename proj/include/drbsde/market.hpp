#pragma once

#include "drbsde/execution.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace drbsde {

// Uniform grid 0 = t_0 < ... < t_N = T.
struct TimeGrid {
    double horizon = 0.0;
    int steps = 0;
    double dt = 0.0;
    std::vector<double> nodes;

    double time(int n) const { return nodes[static_cast<std::size_t>(n)]; }
    bool operator==(const TimeGrid& other) const {
        return horizon == other.horizon && steps == other.steps;
    }
};

TimeGrid build_time_grid(double horizon, int steps);

struct OUParams {
    Eigen::MatrixXd kappa;  // mean-reversion rate (1/time)
    Eigen::VectorXd mu;     // long-term mean
    Eigen::MatrixXd sigma;  // volatility

    int dim() const { return static_cast<int>(mu.size()); }
    bool is_diagonal() const;
    // Throws ConfigError unless shapes agree, kappa is positive definite and
    // every entry is finite.
    void validate() const;

    static OUParams diagonal(const Eigen::VectorXd& kappa, const Eigen::VectorXd& mu,
                             const Eigen::VectorXd& sigma);
    static OUParams scalar(double kappa, double mu, double sigma);
};

// Drift b(t, x) and diffusion sigma(t, x) of dX = b dt + sigma dB.
class SdeCoefficients {
public:
    virtual ~SdeCoefficients() = default;

    virtual int dim() const = 0;
    virtual Eigen::VectorXd drift(double t, const Eigen::VectorXd& x) const = 0;
    virtual Eigen::MatrixXd diffusion(double t, const Eigen::VectorXd& x) const = 0;

    // One Euler-Maruyama step: out = x + b(t,x) dt + sigma(t,x) dB.
    virtual void euler_step(double t, double dt, std::span<const double> x, std::span<const double> dB,
                            std::span<double> out) const;
};

class OrnsteinUhlenbeck final : public SdeCoefficients {
public:
    explicit OrnsteinUhlenbeck(OUParams params);

    const OUParams& params() const { return params_; }
    int dim() const override { return params_.dim(); }
    Eigen::VectorXd drift(double t, const Eigen::VectorXd& x) const override;
    Eigen::MatrixXd diffusion(double t, const Eigen::VectorXd& x) const override;
    void euler_step(double t, double dt, std::span<const double> x, std::span<const double> dB,
                    std::span<double> out) const override;

private:
    OUParams params_;
    bool diagonal_;
    Eigen::VectorXd kappa_diag_;
    Eigen::VectorXd sigma_diag_;
};

// M simulated paths on an N-step grid. Storage is time-major: for each node n
// the M x d block of states is contiguous and column-major (path index fastest),
// so a whole timestep maps onto an Eigen matrix without copying.
struct PathBatch {
    TimeGrid grid;
    int paths = 0;
    int dim = 0;
    std::uint64_t seed = 0;
    std::vector<double> states;       // (N+1) blocks of M x d
    std::vector<double> increments;   // N blocks of M x d; block n holds dB_{n+1}

    std::size_t block() const { return static_cast<std::size_t>(paths) * static_cast<std::size_t>(dim); }
    double state(int n, int path, int k) const {
        return states[static_cast<std::size_t>(n) * block() + static_cast<std::size_t>(k) * paths + path];
    }
    double increment(int n, int path, int k) const {
        return increments[static_cast<std::size_t>(n) * block() + static_cast<std::size_t>(k) * paths + path];
    }
    Eigen::Map<const Eigen::MatrixXd> step_states(int n) const {
        return {states.data() + static_cast<std::size_t>(n) * block(), paths, dim};
    }
    Eigen::Map<const Eigen::MatrixXd> step_increments(int n) const {
        return {increments.data() + static_cast<std::size_t>(n) * block(), paths, dim};
    }
};

// Euler-Maruyama simulation. The Gaussian increment for (path j, step n) is
// drawn from the counter (seed, j, n), so the result does not depend on the
// execution mode or the thread count. `first_path` offsets the path counter so
// a large batch can be produced in slices.
PathBatch simulate_paths(const SdeCoefficients& coeffs, const Eigen::VectorXd& x0, const TimeGrid& grid,
                         int paths, std::uint64_t seed, Execution exec = Execution::parallel,
                         std::uint64_t first_path = 0);

enum class TransitionMode { euler, exact };

struct GaussianStep {
    Eigen::VectorXd mean;
    Eigen::VectorXd stddev;
};

// Per-component conditional law of X_{t+dt} given X_t = x for a diagonal OU.
// Euler mode: mean x + kappa (mu - x) dt, sd sigma sqrt(dt).
// Exact mode: mean mu + (x - mu) e^{-kappa dt}, sd sigma sqrt((1 - e^{-2 kappa dt}) / (2 kappa)).
GaussianStep ou_exact_conditional(const OUParams& params, const Eigen::VectorXd& x, double dt,
                                  TransitionMode mode = TransitionMode::exact);

// One Euler transition (X_n, dB_{n+1}, X_{n+1}) for a batch of M samples.
struct TransitionBatch {
    Eigen::MatrixXd x_now;       // M x d
    Eigen::MatrixXd increments;  // M x d
    Eigen::MatrixXd x_next;      // M x d
};

// Law of the Euler chain of a linear (OU) SDE: X_n is Gaussian with mean and
// covariance given by the discrete recursion, so a training batch at step n can
// be drawn in O(d) per sample instead of re-simulating n steps. The joint law
// of (X_n, dB_{n+1}, X_{n+1}) is identical to that of full Euler paths.
class EulerMarginals {
public:
    EulerMarginals(const OrnsteinUhlenbeck& process, const Eigen::VectorXd& x0, const TimeGrid& grid);

    const Eigen::VectorXd& mean(int n) const { return means_[static_cast<std::size_t>(n)]; }
    const Eigen::MatrixXd& covariance(int n) const { return covs_[static_cast<std::size_t>(n)]; }

    TransitionBatch sample(int n, int batch, std::uint64_t seed, Execution exec = Execution::parallel) const;

private:
    OrnsteinUhlenbeck process_;
    TimeGrid grid_;
    bool diagonal_;
    std::vector<Eigen::VectorXd> means_;
    std::vector<Eigen::MatrixXd> covs_;
    std::vector<Eigen::MatrixXd> factors_;  // symmetric square roots of covs_
};

}  // namespace drbsde
