#include "drbsde/solver.hpp"

#include "drbsde/error.hpp"
#include "drbsde/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace drbsde {

void GameProblem::validate() const {
    ou.validate();
    if (x0.size() != ou.dim()) throw ConfigError("game: x0 has dimension " + std::to_string(x0.size()) +
                                                 ", model has " + std::to_string(ou.dim()));
    if (!x0.allFinite()) throw ConfigError("game: x0 is not finite");
    if (grid.steps < 1 || grid.nodes.size() != static_cast<std::size_t>(grid.steps) + 1) {
        throw ConfigError("game: malformed time grid");
    }
    barriers.validate(grid.horizon);
    payoff.validate(ou.dim());
}

InputNormalizer InputNormalizer::fit(double t, const Eigen::Ref<const Eigen::MatrixXd>& x) {
    const Eigen::Index d = x.cols();
    const double m = static_cast<double>(x.rows());
    InputNormalizer nz;
    nz.mean.resize(d + 1);
    nz.scale.resize(d + 1);
    nz.mean[0] = t;
    nz.scale[0] = 1.0;
    for (Eigen::Index k = 0; k < d; ++k) {
        const double mu = x.col(k).sum() / m;
        const double var = (x.col(k).array() - mu).square().sum() / m;
        const double sd = std::sqrt(var);
        nz.mean[k + 1] = mu;
        nz.scale[k + 1] = sd > 1e-12 * std::max(1.0, std::abs(mu)) ? sd : 1.0;
    }
    return nz;
}

Eigen::MatrixXd InputNormalizer::apply(double t, const Eigen::Ref<const Eigen::MatrixXd>& x) const {
    if (x.cols() + 1 != mean.size()) throw ContractError("normalizer: input width mismatch");
    Eigen::MatrixXd out(x.rows(), x.cols() + 1);
    out.col(0).setConstant((t - mean[0]) / scale[0]);
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
        out.col(k + 1) = ((x.col(k).array() - mean[k + 1]) / scale[k + 1]).matrix();
    }
    return out;
}

void InputNormalizer::validate() const {
    if (mean.size() != scale.size() || mean.size() < 2) throw ContractError("normalizer: malformed statistics");
    if (!mean.allFinite() || !scale.allFinite() || (scale.array() <= 0.0).any()) {
        throw NumericalError("normalizer: statistics must be finite with positive scale");
    }
}

Eigen::MatrixXd StageNetwork::predict(double t, const Eigen::Ref<const Eigen::MatrixXd>& x, Execution exec) const {
    return forward(params, normalizer.apply(t, x), nullptr, exec);
}

std::string to_string(PathSource s) {
    switch (s) {
        case PathSource::marginals:
            return "marginals";
        case PathSource::resimulate:
            return "resimulate";
        case PathSource::fixed_pool:
            return "fixed_pool";
    }
    return "unknown";
}

PathSource path_source_from_string(const std::string& name) {
    if (name == "marginals") return PathSource::marginals;
    if (name == "resimulate") return PathSource::resimulate;
    if (name == "fixed_pool") return PathSource::fixed_pool;
    throw ConfigError("unknown path source '" + name + "' (expected marginals, resimulate or fixed_pool)");
}

void TrainingConfig::validate() const {
    if (batch < 1) throw ConfigError("training: batch must be >= 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("training: lr must be positive");
    if (epochs.late_epochs < 1 || epochs.other_epochs < 1 || epochs.late_stages < 0) {
        throw ConfigError("training: epoch counts must be >= 1");
    }
    if (hidden_width < 1 || hidden_layers < 0) throw ConfigError("training: invalid network shape");
}

double TrainedSolver::y0(const Eigen::VectorXd& x0) const {
    if (stages.empty()) throw ContractError("solver has no trained stages");
    const Eigen::MatrixXd out = stages.front().predict(grid.time(0), x0.transpose(), Execution::serial);
    return std::clamp(out(0, 0), barriers.lower(grid.time(0)), barriers.upper(grid.time(0)));
}

void TrainedSolver::validate() const {
    if (stages.size() != static_cast<std::size_t>(grid.steps)) {
        throw ContractError("solver: expected " + std::to_string(grid.steps) + " stages, found " +
                            std::to_string(stages.size()));
    }
    for (std::size_t n = 0; n < stages.size(); ++n) {
        if (stages[n].step != static_cast<int>(n)) throw ContractError("solver: stages out of order");
        stages[n].params.validate();
        stages[n].normalizer.validate();
        if (stages[n].params.spec.input_dim != dim + 1 || stages[n].params.spec.output_dim != dim + 1) {
            throw ContractError("solver: stage " + std::to_string(n) + " has the wrong input/output width");
        }
        if (!std::isfinite(stages[n].final_loss)) {
            throw NumericalError("solver: stage " + std::to_string(n) + " has a non-finite final loss");
        }
    }
}

Eigen::VectorXd clamp_to_barriers(const Eigen::Ref<const Eigen::VectorXd>& y_tilde, double t, const BarrierSpec& barriers) {
    const double lo = barriers.lower(t);
    const double hi = barriers.upper(t);
    if (!(lo < hi)) throw ModelError("barriers inverted at t = " + std::to_string(t));
    return y_tilde.cwiseMax(lo).cwiseMin(hi);
}

StageLoss stage_loss(const StageNetwork& net, const Eigen::Ref<const Eigen::VectorXd>& next_y_hat,
                     const Eigen::Ref<const Eigen::MatrixXd>& x_n, const Eigen::Ref<const Eigen::MatrixXd>& dB,
                     const PayoffSpec& payoff, double t_n, double dt, Execution exec) {
    const Eigen::Index m = x_n.rows();
    const Eigen::Index d = x_n.cols();
    if (next_y_hat.size() != m || dB.rows() != m || dB.cols() != d) throw ContractError("stage_loss: batch shapes disagree");
    StageLoss sl;
    const Eigen::MatrixXd out = forward(net.params, net.normalizer.apply(t_n, x_n), &sl.tape, exec);
    const auto z = out.rightCols(d);
    const Eigen::VectorXd pred =
        out.col(0) - payoff.running_batch(t_n, x_n) * dt + z.cwiseProduct(dB).rowwise().sum();
    sl.residuals = next_y_hat - pred;
    sl.loss = sl.residuals.squaredNorm() / static_cast<double>(m);
    sl.output_grad.resize(m, d + 1);
    sl.output_grad.col(0) = -2.0 * sl.residuals;
    sl.output_grad.rightCols(d) = (dB.array().colwise() * (-2.0 * sl.residuals.array())).matrix();
    return sl;
}

namespace {

TransitionBatch resimulated_batch(const OrnsteinUhlenbeck& ou, const Eigen::VectorXd& x0, const TimeGrid& grid, int n,
                                  int batch, std::uint64_t seed, Execution exec) {
    // OU is time homogeneous, so the first n+1 steps of the grid suffice.
    const TimeGrid head = build_time_grid(grid.dt * (n + 1), n + 1);
    const PathBatch pb = simulate_paths(ou, x0, head, batch, seed, exec);
    return {pb.step_states(n), pb.step_increments(n), pb.step_states(n + 1)};
}

}  // namespace

TrainedSolver train_backward(const GameProblem& problem, const TrainingConfig& config, const StageCallback& on_stage) {
    problem.validate();
    config.validate();
    const TimeGrid& grid = problem.grid;
    const int N = grid.steps;
    const int d = problem.dim();

    TrainedSolver solver;
    solver.grid = grid;
    solver.barriers = problem.barriers;
    solver.payoff = problem.payoff;
    solver.dim = d;
    solver.config = config;
    solver.stages.resize(static_cast<std::size_t>(N));

    const OrnsteinUhlenbeck ou(problem.ou);
    const EulerMarginals marginals(ou, problem.x0, grid);
    MlpSpec spec = MlpSpec::stage_default(d);
    spec.hidden_width = config.hidden_width;
    spec.hidden_layers = config.hidden_layers;

    for (int n = N - 1; n >= 0; --n) {
        StageNetwork& stage = solver.stages[static_cast<std::size_t>(n)];
        stage.step = n;
        if (n == N - 1 || !config.warm_start) {
            stage.params = init_params(spec, derive_seed(config.seed, seed_tags::init, static_cast<std::uint64_t>(n)));
        } else {
            stage.params = solver.stages[static_cast<std::size_t>(n) + 1].params;
        }
        AdamState adam = AdamState::for_params(stage.params, config.lr);
        const double t_n = grid.time(n);
        const double t_next = grid.time(n + 1);
        const std::uint64_t stage_seed = derive_seed(config.seed, seed_tags::train, static_cast<std::uint64_t>(n));
        const int epochs = config.epochs.epochs_for(n, N);
        stage.loss_history.reserve(static_cast<std::size_t>(epochs));

        TransitionBatch pool;
        for (int e = 0; e < epochs; ++e) {
            const std::uint64_t batch_seed = derive_seed(stage_seed, seed_tags::train, static_cast<std::uint64_t>(e));
            TransitionBatch fresh;
            const TransitionBatch* tb = &fresh;
            switch (config.source) {
                case PathSource::marginals:
                    fresh = marginals.sample(n, config.batch, batch_seed, config.exec);
                    break;
                case PathSource::resimulate:
                    fresh = resimulated_batch(ou, problem.x0, grid, n, config.batch, batch_seed, config.exec);
                    break;
                case PathSource::fixed_pool:
                    if (e == 0) pool = marginals.sample(n, config.batch, stage_seed, config.exec);
                    tb = &pool;
                    break;
            }
            if (e == 0) stage.normalizer = InputNormalizer::fit(t_n, tb->x_now);

            Eigen::VectorXd target;
            if (n == N - 1) {
                target = problem.payoff.terminal_batch(tb->x_next);
            } else {
                const Eigen::MatrixXd next =
                    solver.stages[static_cast<std::size_t>(n) + 1].predict(t_next, tb->x_next, config.exec);
                target = clamp_to_barriers(next.col(0), t_next, problem.barriers);
            }
            const StageLoss sl =
                stage_loss(stage, target, tb->x_now, tb->increments, problem.payoff, t_n, grid.dt, config.exec);
            if (!std::isfinite(sl.loss)) {
                throw NumericalError("training diverged at stage " + std::to_string(n) + ", epoch " + std::to_string(e));
            }
            stage.loss_history.push_back(sl.loss);
            const GradientBundle g = backward(stage.params, sl.tape, sl.output_grad);
            try {
                adam_step(stage.params, g, adam);
            } catch (const NumericalError& err) {
                throw NumericalError("stage " + std::to_string(n) + ", epoch " + std::to_string(e) + ": " + err.what());
            }
        }
        stage.final_loss = stage.loss_history.back();
        if (on_stage) on_stage(stage);
    }
    return solver;
}

Rollout rollout(const TrainedSolver& solver, const PathBatch& paths, bool keep_z, Execution exec) {
    if (!(paths.grid == solver.grid)) throw ContractError("rollout: paths were simulated on a different grid");
    if (paths.dim != solver.dim) throw ContractError("rollout: path dimension does not match the solver");
    if (solver.stages.size() != static_cast<std::size_t>(solver.grid.steps)) {
        throw ContractError("rollout: solver is incomplete");
    }
    const int N = solver.grid.steps;
    Rollout r;
    r.paths = paths.paths;
    r.steps = N;
    r.y_tilde.resize(paths.paths, N);
    r.y_hat.resize(paths.paths, N + 1);
    if (keep_z) r.z.reserve(static_cast<std::size_t>(N));
    for (int n = 0; n < N; ++n) {
        const double t = solver.grid.time(n);
        const Eigen::MatrixXd out = solver.stages[static_cast<std::size_t>(n)].predict(t, paths.step_states(n), exec);
        r.y_tilde.col(n) = out.col(0);
        r.y_hat.col(n) = clamp_to_barriers(out.col(0), t, solver.barriers);
        if (keep_z) r.z.push_back(out.rightCols(paths.dim));
    }
    r.y_hat.col(N) = solver.payoff.terminal_batch(paths.step_states(N));
    return r;
}

ExitTimes extract_exit_times(const Rollout& r, const BarrierSpec& barriers, const TimeGrid& grid) {
    const int N = grid.steps;
    if (r.steps != N) throw ContractError("extract_exit_times: rollout grid mismatch");
    ExitTimes ex;
    ex.upper.assign(static_cast<std::size_t>(r.paths), N);
    ex.lower.assign(static_cast<std::size_t>(r.paths), N);
    for (int n = N - 1; n >= 0; --n) {
        const double hi = barriers.upper(grid.time(n));
        const double lo = barriers.lower(grid.time(n));
        for (int j = 0; j < r.paths; ++j) {
            const double y = r.y_tilde(j, n);
            if (y >= hi) ex.upper[static_cast<std::size_t>(j)] = n;
            if (y <= lo) ex.lower[static_cast<std::size_t>(j)] = n;
        }
    }
    return ex;
}

PayoffEstimate evaluate_payoff(const PathBatch& paths, const std::vector<int>& tau1, const std::vector<int>& tau2,
                               const PayoffSpec& payoff, const BarrierSpec& barriers) {
    const int M = paths.paths;
    const int N = paths.grid.steps;
    if (tau1.size() != static_cast<std::size_t>(M) || tau2.size() != static_cast<std::size_t>(M)) {
        throw ContractError("evaluate_payoff: one stopping time per path is required");
    }
    for (int j = 0; j < M; ++j) {
        const int a = tau1[static_cast<std::size_t>(j)];
        const int b = tau2[static_cast<std::size_t>(j)];
        if (a < 0 || a > N || b < 0 || b > N) throw ContractError("evaluate_payoff: stopping index outside the grid");
    }
    const double dt = paths.grid.dt;
    Eigen::VectorXd value = Eigen::VectorXd::Zero(M);
    for (int n = 0; n < N; ++n) {
        const Eigen::VectorXd phi = payoff.running_batch(paths.grid.time(n), paths.step_states(n));
        for (int j = 0; j < M; ++j) {
            if (n < std::min(tau1[static_cast<std::size_t>(j)], tau2[static_cast<std::size_t>(j)])) {
                value[j] += phi[j] * dt;
            }
        }
    }
    const Eigen::VectorXd g = payoff.terminal_batch(paths.step_states(N));
    for (int j = 0; j < M; ++j) {
        const int a = tau1[static_cast<std::size_t>(j)];
        const int b = tau2[static_cast<std::size_t>(j)];
        if (a <= b && a < N) {
            value[j] += barriers.f1(paths.grid.time(a));
        } else if (b < a) {
            value[j] -= barriers.f2(paths.grid.time(b));
        } else {
            value[j] += g[j];
        }
    }
    PayoffEstimate est;
    est.mean = value.mean();
    est.std_error = M > 1 ? std::sqrt((value.array() - est.mean).square().sum() / (M - 1) / M) : 0.0;
    est.samples = std::move(value);
    return est;
}

double ExitSummary::no_exit_fraction() const {
    return paths == 0 ? 0.0 : static_cast<double>(paths - p1_exits - p2_exits) / static_cast<double>(paths);
}

double ExitSummary::p1_fraction() const { return paths == 0 ? 0.0 : static_cast<double>(p1_exits) / paths; }

double ExitSummary::p2_fraction() const { return paths == 0 ? 0.0 : static_cast<double>(p2_exits) / paths; }

double ExitSummary::mean_exit_time() const {
    const std::size_t n = p1_times.size() + p2_times.size();
    if (n == 0) return 0.0;
    const double s = std::accumulate(p1_times.begin(), p1_times.end(), 0.0) +
                     std::accumulate(p2_times.begin(), p2_times.end(), 0.0);
    return s / static_cast<double>(n);
}

double ExitSummary::payoff_mean() const { return paths == 0 ? 0.0 : payoff_sum / static_cast<double>(paths); }

double ExitSummary::payoff_std_error() const {
    if (paths < 2) return 0.0;
    const double n = static_cast<double>(paths);
    const double m = payoff_sum / n;
    const double var = std::max(0.0, (payoff_sq_sum - n * m * m) / (n - 1.0));
    return std::sqrt(var / n);
}

void ExitSummary::merge(const ExitSummary& other) {
    paths += other.paths;
    p1_exits += other.p1_exits;
    p2_exits += other.p2_exits;
    p1_times.insert(p1_times.end(), other.p1_times.begin(), other.p1_times.end());
    p2_times.insert(p2_times.end(), other.p2_times.begin(), other.p2_times.end());
    payoff_sum += other.payoff_sum;
    payoff_sq_sum += other.payoff_sq_sum;
    barrier_violation_max = std::max(barrier_violation_max, other.barrier_violation_max);
}

Evaluation evaluate_solver(const TrainedSolver& solver, const GameProblem& problem, const EvaluationConfig& config,
                           std::uint64_t seed, Execution exec) {
    if (config.paths < 1 || config.chunk < 1) throw ConfigError("evaluation: paths and chunk must be >= 1");
    const OrnsteinUhlenbeck ou(problem.ou);
    const TimeGrid& grid = solver.grid;
    const int N = grid.steps;
    Evaluation ev;
    for (int first = 0; first < config.paths; first += config.chunk) {
        const int count = std::min(config.chunk, config.paths - first);
        const PathBatch pb = simulate_paths(ou, problem.x0, grid, count, seed, exec, static_cast<std::uint64_t>(first));
        const Rollout r = rollout(solver, pb, false, exec);
        const ExitTimes ex = extract_exit_times(r, solver.barriers, grid);
        const PayoffEstimate pe = evaluate_payoff(pb, ex.upper, ex.lower, solver.payoff, solver.barriers);

        ExitSummary s;
        s.paths = count;
        for (int j = 0; j < count; ++j) {
            const int a = ex.upper[static_cast<std::size_t>(j)];
            const int b = ex.lower[static_cast<std::size_t>(j)];
            if (a < b) {
                ++s.p1_exits;
                s.p1_times.push_back(grid.time(a));
            } else if (b < a) {
                ++s.p2_exits;
                s.p2_times.push_back(grid.time(b));
            }
            s.payoff_sum += pe.samples[j];
            s.payoff_sq_sum += pe.samples[j] * pe.samples[j];
        }
        for (int n = 0; n < N; ++n) {
            const double hi = solver.barriers.upper(grid.time(n));
            const double lo = solver.barriers.lower(grid.time(n));
            const double over = std::max(r.y_tilde.col(n).maxCoeff() - hi, lo - r.y_tilde.col(n).minCoeff());
            s.barrier_violation_max = std::max(s.barrier_violation_max, over);
        }
        ev.summary.merge(s);

        for (int j = 0; j < count && static_cast<int>(ev.trajectories.size()) < config.trajectories; ++j) {
            std::vector<double> tr(static_cast<std::size_t>(N) + 1);
            for (int n = 0; n <= N; ++n) tr[static_cast<std::size_t>(n)] = r.y_hat(j, n);
            ev.trajectories.push_back(std::move(tr));
        }
    }
    return ev;
}

double SolveReport::y0_mean() const {
    if (y0_samples.empty()) return 0.0;
    return std::accumulate(y0_samples.begin(), y0_samples.end(), 0.0) / static_cast<double>(y0_samples.size());
}

double SolveReport::y0_stddev() const {
    if (y0_samples.size() < 2) return 0.0;
    const double m = y0_mean();
    double s = 0.0;
    for (const double v : y0_samples) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(y0_samples.size() - 1));
}

std::uint64_t retrain_seed(std::uint64_t base_seed, int r) {
    return derive_seed(base_seed, seed_tags::retrain, static_cast<std::uint64_t>(r));
}

SolveReport y0_distribution(const GameProblem& problem, const TrainingConfig& training,
                            const EvaluationConfig& evaluation, int retrains, std::uint64_t base_seed,
                            const RetrainCallback& on_retrain) {
    if (retrains < 1) throw ConfigError("retrains must be >= 1");
    SolveReport report;
    for (int r = 0; r < retrains; ++r) {
        RetrainResult rr;
        rr.index = r;
        rr.seed = retrain_seed(base_seed, r);
        TrainingConfig cfg = training;
        cfg.seed = rr.seed;
        try {
            const TrainedSolver solver = train_backward(problem, cfg);
            rr.y0 = solver.y0(problem.x0);
            rr.evaluation = evaluate_solver(solver, problem, evaluation, derive_seed(rr.seed, seed_tags::eval), cfg.exec);
            report.y0_samples.push_back(rr.y0);
            report.exits.merge(rr.evaluation.summary);
            if (on_retrain) on_retrain(rr, solver);
        } catch (const Error& e) {
            throw Error("retrain " + std::to_string(r) + ": " + e.what(), e.exit_code());
        }
        report.retrains.push_back(std::move(rr));
    }
    return report;
}

}  // namespace drbsde
