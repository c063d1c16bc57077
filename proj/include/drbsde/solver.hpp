#pragma once

#include "drbsde/execution.hpp"
#include "drbsde/game.hpp"
#include "drbsde/market.hpp"
#include "drbsde/neural.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace drbsde {

// A complete game: OU state process, horizon/grid, penalties and payoffs.
struct GameProblem {
    OUParams ou;
    Eigen::VectorXd x0;
    TimeGrid grid;
    BarrierSpec barriers;
    PayoffSpec payoff;

    int dim() const { return ou.dim(); }
    // Validates every part against the others.
    void validate() const;
};

// Per-feature affine standardization of the network input (t, x_1, ..., x_d).
struct InputNormalizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;

    // Statistics of one batch at time t. A feature whose spread is negligible
    // (t is constant within a stage, X_0 is deterministic) gets scale 1.
    static InputNormalizer fit(double t, const Eigen::Ref<const Eigen::MatrixXd>& x);
    Eigen::MatrixXd apply(double t, const Eigen::Ref<const Eigen::MatrixXd>& x) const;
    void validate() const;
};

struct StageNetwork {
    int step = 0;
    MlpParams params;
    InputNormalizer normalizer;
    double final_loss = 0.0;
    std::vector<double> loss_history;

    // Raw network output at (t, x): column 0 is Y-tilde, columns 1..d are Z.
    Eigen::MatrixXd predict(double t, const Eigen::Ref<const Eigen::MatrixXd>& x,
                            Execution exec = Execution::parallel) const;
};

enum class PathSource {
    marginals,   // fresh (X_n, dB, X_{n+1}) each epoch from the exact Euler-chain law
    resimulate,  // fresh full Euler paths each epoch
    fixed_pool,  // one batch per stage, reused every epoch
};

std::string to_string(PathSource s);
PathSource path_source_from_string(const std::string& name);

struct EpochSchedule {
    int late_epochs = 500;  // for the last `late_stages` stages trained (n = N-1, N-2)
    int late_stages = 2;
    int other_epochs = 100;

    int epochs_for(int n, int steps) const { return n >= steps - late_stages ? late_epochs : other_epochs; }
    // Same epoch count for every stage (smoke runs).
    static EpochSchedule uniform(int epochs) { return {epochs, 0, epochs}; }
};

struct TrainingConfig {
    int batch = 1 << 10;
    double lr = 1e-3;
    EpochSchedule epochs;
    std::uint64_t seed = 0;
    bool warm_start = true;  // initialize stage n from the trained stage n+1
    PathSource source = PathSource::marginals;
    int hidden_width = 50;
    int hidden_layers = 3;
    Execution exec = Execution::parallel;

    void validate() const;
};

struct TrainedSolver {
    TimeGrid grid;
    BarrierSpec barriers;
    PayoffSpec payoff;
    int dim = 0;
    TrainingConfig config;
    std::vector<StageNetwork> stages;  // stages[n] for n = 0..N-1

    // Clamped value at (t_0, x0).
    double y0(const Eigen::VectorXd& x0) const;
    void validate() const;
};

// min(max(y, -f2(t)), f1(t)) elementwise.
Eigen::VectorXd clamp_to_barriers(const Eigen::Ref<const Eigen::VectorXd>& y_tilde, double t, const BarrierSpec& barriers);

struct StageLoss {
    double loss = 0.0;
    Eigen::VectorXd residuals;     // Y_{n+1} - (Y-tilde_n - phi dt + Z . dB)
    Eigen::MatrixXd output_grad;   // d(residual^2)/d(output), per sample
    Tape tape;
};

// Mean squared one-step residual of the backward scheme at step n.
StageLoss stage_loss(const StageNetwork& net, const Eigen::Ref<const Eigen::VectorXd>& next_y_hat,
                     const Eigen::Ref<const Eigen::MatrixXd>& x_n, const Eigen::Ref<const Eigen::MatrixXd>& dB,
                     const PayoffSpec& payoff, double t_n, double dt, Execution exec = Execution::parallel);

// Called after each stage is frozen.
using StageCallback = std::function<void(const StageNetwork&)>;

// Backward-in-time training, n = N-1, ..., 0.
TrainedSolver train_backward(const GameProblem& problem, const TrainingConfig& config,
                             const StageCallback& on_stage = {});

struct Rollout {
    int paths = 0;
    int steps = 0;
    Eigen::MatrixXd y_tilde;          // M x N, network value before clamping
    Eigen::MatrixXd y_hat;            // M x (N+1), clamped; column N is g(X_N)
    std::vector<Eigen::MatrixXd> z;   // per step M x d, only when requested
};

Rollout rollout(const TrainedSolver& solver, const PathBatch& paths, bool keep_z = false,
                Execution exec = Execution::parallel);

// Grid indices of the first touch of each barrier; N (i.e. time T) when the
// barrier is not reached before T.
struct ExitTimes {
    std::vector<int> upper;  // tau_1, Player 1
    std::vector<int> lower;  // tau_2, Player 2
};

ExitTimes extract_exit_times(const Rollout& r, const BarrierSpec& barriers, const TimeGrid& grid);

struct PayoffEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    Eigen::VectorXd samples;
};

// Monte Carlo value of the stopped game for the given exit indices, with the
// running payoff integrated by the left-endpoint rule.
PayoffEstimate evaluate_payoff(const PathBatch& paths, const std::vector<int>& tau1, const std::vector<int>& tau2,
                               const PayoffSpec& payoff, const BarrierSpec& barriers);

// Exit statistics over evaluation paths.
struct ExitSummary {
    long long paths = 0;
    long long p1_exits = 0;  // tau_1 < tau_2 and tau_1 < T
    long long p2_exits = 0;  // tau_2 < tau_1 and tau_2 < T
    std::vector<double> p1_times;  // tau_1 on Player 1 exits
    std::vector<double> p2_times;
    double payoff_sum = 0.0;
    double payoff_sq_sum = 0.0;
    double barrier_violation_max = 0.0;  // largest pre-clamp overshoot

    double no_exit_fraction() const;
    double p1_fraction() const;
    double p2_fraction() const;
    // E[tau_1 ^ tau_2 | exit before T]
    double mean_exit_time() const;
    double payoff_mean() const;
    double payoff_std_error() const;
    void merge(const ExitSummary& other);
};

struct EvaluationConfig {
    int paths = 1 << 14;
    int chunk = 1 << 12;
    int trajectories = 3;  // number of leading paths whose Y-hat is kept for plotting
};

struct Evaluation {
    ExitSummary summary;
    std::vector<std::vector<double>> trajectories;
};

// Rolls the solver out over fresh Euler paths, chunk by chunk. Chunks are
// slices of one logical batch, so the result does not depend on the chunk size.
Evaluation evaluate_solver(const TrainedSolver& solver, const GameProblem& problem, const EvaluationConfig& config,
                           std::uint64_t seed, Execution exec = Execution::parallel);

struct RetrainResult {
    int index = 0;
    std::uint64_t seed = 0;
    double y0 = 0.0;
    Evaluation evaluation;
};

struct SolveReport {
    std::vector<double> y0_samples;  // one per retrain
    ExitSummary exits;               // pooled over retrains
    std::vector<RetrainResult> retrains;

    double y0_mean() const;
    double y0_stddev() const;
};

using RetrainCallback = std::function<void(const RetrainResult&, const TrainedSolver&)>;

// Independent retrains with seeds derived from base_seed; each is evaluated on
// its own fresh batch.
SolveReport y0_distribution(const GameProblem& problem, const TrainingConfig& training,
                            const EvaluationConfig& evaluation, int retrains, std::uint64_t base_seed,
                            const RetrainCallback& on_retrain = {});

// Seeds used by retrain r.
std::uint64_t retrain_seed(std::uint64_t base_seed, int r);

}  // namespace drbsde
