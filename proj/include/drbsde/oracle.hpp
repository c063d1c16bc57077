#pragma once

#include "drbsde/execution.hpp"
#include "drbsde/market.hpp"
#include "drbsde/solver.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace drbsde {

enum class Interpolation { monotone_cubic, linear };

enum class Expectation {
    exact_piecewise,  // integrate the piecewise polynomial against the Gaussian cell by cell
    gauss_hermite,    // order-q Gauss-Hermite rule
};

std::string to_string(Interpolation i);
std::string to_string(Expectation e);
Interpolation interpolation_from_string(const std::string& name);
Expectation expectation_from_string(const std::string& name);

struct GridSpec {
    double lo = 0.0;
    double hi = 0.0;
    int nodes = 801;
    int gh_order = 32;
    Interpolation interpolation = Interpolation::monotone_cubic;
    Expectation expectation = Expectation::exact_piecewise;
    TransitionMode transition = TransitionMode::euler;
    double coverage_tol = 1e-6;

    // Bounds min(x0, mu) - width * sd_inf .. max(x0, mu) + width * sd_inf with
    // sd_inf = sigma / sqrt(2 kappa).
    static GridSpec around(const OUParams& ou, double x0, double width = 8.0);
    // ConfigError unless bounds cover x0 +- 6 stationary sd, nodes >= 200, q >= 16.
    void validate(const OUParams& ou, double x0) const;
};

// Piecewise interpolant of node values on a uniform grid; constant beyond the ends.
class GridInterpolant {
public:
    GridInterpolant(double lo, double hi, const std::vector<double>& values, Interpolation kind);

    double operator()(double x) const;
    // Power-basis coefficients of cell i in u = x - x_i.
    const std::array<double, 4>& cell(std::size_t i) const { return coeffs_[i]; }
    std::size_t cells() const { return coeffs_.size(); }
    double node(std::size_t i) const { return lo_ + h_ * static_cast<double>(i); }
    double spacing() const { return h_; }
    double front() const { return front_; }
    double back() const { return back_; }

private:
    double lo_;
    double h_;
    double front_;
    double back_;
    std::vector<std::array<double, 4>> coeffs_;
};

// E[p(m + s Z)] and E[p(m + s Z) Z] for the interpolant p and Z ~ N(0, 1).
struct GaussianMoments {
    double value = 0.0;
    double weighted = 0.0;
};

GaussianMoments expect_exact(const GridInterpolant& p, double m, double s);
GaussianMoments expect_gauss_hermite(const GridInterpolant& p, double m, double s, int order);

// Nodes and weights of the order-q rule for E[f(Z)], Z ~ N(0, 1).
void gauss_hermite_rule(int order, std::vector<double>& nodes, std::vector<double>& weights);

struct OracleSolution {
    TimeGrid grid;
    GridSpec spec;
    BarrierSpec barriers;
    std::vector<double> x;                        // spatial nodes
    std::vector<std::vector<double>> value;       // Y_n(x), n = 0..N
    std::vector<std::vector<double>> continuation;  // Ytilde_n(x), n = 0..N-1
    std::vector<std::vector<double>> z;           // Z_n(x), n = 0..N-1
    std::vector<std::vector<std::uint8_t>> stop_upper;  // Ytilde_n >= f1
    std::vector<std::vector<std::uint8_t>> stop_lower;  // Ytilde_n <= -f2
    double x0 = 0.0;
    double y0 = 0.0;

    double value_at(int n, double x) const;
    double continuation_at(int n, double x) const;
};

// Backward recursion Y_N = g, Ytilde_n = E[Y_{n+1}(X_{n+1}) | X_n = x] + phi dt,
// Y_n = clamp(Ytilde_n), Z_n = E[Y_{n+1} dB] / dt. One-dimensional OU only.
OracleSolution grid_dp_solve(const GameProblem& problem, const GridSpec& spec, Execution exec = Execution::parallel);

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
};

// The same recursion by nested conditional Monte Carlo, for N <= 5.
McEstimate nested_mc_solve(const GameProblem& problem, int samples_per_node, std::uint64_t seed);

// Oracle stopping rule along simulated paths: first n < N where the interpolated
// continuation value reaches a barrier.
ExitTimes oracle_exit_times(const OracleSolution& oracle, const PathBatch& paths);

// Per-path tau_1 ^ tau_2 in time units, T when neither barrier is reached.
std::vector<double> stopping_times(const ExitTimes& ex, const TimeGrid& grid);

struct ComparisonReport {
    double y0_oracle = 0.0;
    double y0_deep = 0.0;
    double y0_abs_error = 0.0;
    double path_rmse = 0.0;       // Y-hat_n vs oracle Y_n(X_n), n < N
    double exit_ks_distance = 0.0;
    double exit_ks_pvalue = 1.0;
    PayoffEstimate payoff_deep;
    PayoffEstimate payoff_oracle;
};

// Deep solver and oracle on the same grid, evaluated on common paths.
ComparisonReport compare_to_deep(const OracleSolution& oracle, const TrainedSolver& deep, const GameProblem& problem,
                                 int eval_paths, std::uint64_t seed, Execution exec = Execution::parallel);

}  // namespace drbsde
