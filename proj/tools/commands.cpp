#include "commands.hpp"

#include "drbsde/calibration.hpp"
#include "drbsde/error.hpp"
#include "drbsde/execution.hpp"
#include "drbsde/oracle.hpp"
#include "drbsde/persist.hpp"
#include "drbsde/rng.hpp"
#include "drbsde/skorokhod.hpp"
#include "drbsde/stats.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#ifndef DRBSDE_VERSION
#define DRBSDE_VERSION "0.1.0"
#endif

namespace drbsde::cli {

namespace fs = std::filesystem;

namespace {

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::string safe_name(const std::string& label) {
    std::string s;
    for (const char ch : label) {
        s += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_') ? ch : '_';
    }
    return s.empty() ? "series" : s;
}

json manifest_config(const ExperimentConfig& cfg) { return cfg.resolved; }

void finish(const std::string& out, const std::string& command, const json& config, const json& results,
            std::vector<std::string> files) {
    RunManifest m;
    m.command = command;
    m.config = config;
    m.config_hash = config_hash(config);
    m.results = results;
    m.results["version"] = DRBSDE_VERSION;
    std::sort(files.begin(), files.end());
    m.files = std::move(files);
    m.write(out);
}

std::vector<double> column(const Eigen::MatrixXd& m, int row) {
    std::vector<double> v(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index k = 0; k < m.cols(); ++k) v[static_cast<std::size_t>(k)] = m(row, k);
    return v;
}

json ks_json(const stats::KsResult& r) { return json{{"statistic", r.statistic}, {"pvalue", r.pvalue}}; }

json summary_json(const ExitSummary& s) {
    json j{{"paths", s.paths},
           {"no_exit_fraction", s.no_exit_fraction()},
           {"p1_exit_fraction", s.p1_fraction()},
           {"p2_exit_fraction", s.p2_fraction()},
           {"mean_exit_time", s.mean_exit_time()},
           {"payoff_mean", s.payoff_mean()},
           {"payoff_std_error", s.payoff_std_error()},
           {"barrier_violation_max", s.barrier_violation_max}};
    if (!s.p1_times.empty() && !s.p2_times.empty()) j["exit_time_ks"] = ks_json(stats::ks_two_sample(s.p1_times, s.p2_times));
    return j;
}

}  // namespace

ExperimentConfig prepare_config(const std::string& path, const Overrides& o) {
    if (path.empty()) throw ConfigError("--config is required for this command");
    ExperimentConfig cfg = load_config(path);
    if (o.seed) override_seed(cfg, *o.seed);
    if (o.retrains) {
        if (*o.retrains < 1) throw ConfigError("--retrains must be >= 1");
        cfg.retrains = *o.retrains;
        cfg.resolved["retrains"] = cfg.retrains;
    }
    if (o.epochs) {
        if (*o.epochs < 1) throw ConfigError("--epochs must be >= 1");
        cfg.training.epochs = EpochSchedule::uniform(*o.epochs);
        cfg.resolved["training"] = to_json(cfg.training);
    }
    return cfg;
}

json cmd_simulate(const ExperimentConfig& cfg, const std::string& out, int export_paths) {
    const GameProblem& p = cfg.problem;
    const OrnsteinUhlenbeck process(p.ou);
    const PathBatch batch = simulate_paths(process, p.x0, p.grid, cfg.simulate_paths, cfg.seed);
    const int N = p.grid.steps;
    const int d = batch.dim;
    const int M = batch.paths;

    std::vector<std::string> header{"t"};
    std::vector<std::vector<double>> cols(1 + 2 * static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) header.push_back("mean_" + std::to_string(k + 1));
    for (int k = 0; k < d; ++k) header.push_back("sd_" + std::to_string(k + 1));
    for (int n = 0; n <= N; ++n) {
        cols[0].push_back(p.grid.time(n));
        const auto block = batch.step_states(n);
        for (int k = 0; k < d; ++k) {
            const Eigen::VectorXd c = block.col(k);
            const double mean = c.mean();
            const double var = M > 1 ? (c.array() - mean).square().sum() / (M - 1) : 0.0;
            cols[1 + static_cast<std::size_t>(k)].push_back(mean);
            cols[1 + static_cast<std::size_t>(d + k)].push_back(std::sqrt(var));
        }
    }
    write_csv(join(out, "path_summary.csv"), header, cols);

    const int keep = std::min(export_paths, M);
    std::vector<std::string> ph{"path", "step", "t"};
    for (int k = 0; k < d; ++k) ph.push_back("x_" + std::to_string(k + 1));
    std::vector<std::vector<double>> pc(3 + static_cast<std::size_t>(d));
    for (int j = 0; j < keep; ++j) {
        for (int n = 0; n <= N; ++n) {
            pc[0].push_back(j);
            pc[1].push_back(n);
            pc[2].push_back(p.grid.time(n));
            for (int k = 0; k < d; ++k) pc[3 + static_cast<std::size_t>(k)].push_back(batch.state(n, j, k));
        }
    }
    write_csv(join(out, "paths.csv"), ph, pc);

    json results{{"paths", M}, {"dim", d}, {"steps", N}, {"exported_paths", keep}};
    finish(out, "simulate", manifest_config(cfg), results, {"path_summary.csv", "paths.csv"});
    return results;
}

json cmd_calibrate(const std::string& csv, double dt, LikelihoodForm form, const std::string& out) {
    const std::vector<PriceSeries> series = read_price_csv(csv, dt);
    std::vector<std::string> files;
    json fits = json::array();
    json model{{"kappa", json::array()}, {"mu", json::array()}, {"sigma", json::array()}, {"labels", json::array()}};
    for (const PriceSeries& s : series) {
        OUFitResult fit = fit_mle(s, form);
        residual_diagnostics(fit, s);
        const std::string base = "fit_" + safe_name(s.label);
        json j{{"label", fit.label},
               {"likelihood", to_string(fit.form)},
               {"kappa", fit.params.kappa},
               {"mu", fit.params.mu},
               {"sigma", fit.params.sigma},
               {"std_errors", {{"kappa", fit.std_errors[0]}, {"mu", fit.std_errors[1]}, {"sigma", fit.std_errors[2]}}},
               {"loglik", fit.loglik},
               {"quasi_newton", {{"kappa", fit.quasi_newton.kappa}, {"mu", fit.quasi_newton.mu}, {"sigma", fit.quasi_newton.sigma}}},
               {"quasi_newton_loglik", fit.quasi_newton_loglik},
               {"optimizer_gap", fit.optimizer_gap},
               {"observations", fit.observations},
               {"transitions", fit.transitions},
               {"ks", ks_json(fit.ks)},
               {"warnings", fit.warnings}};
        write_text_atomic(join(out, base + ".json"), j.dump(2) + "\n");
        write_csv(join(out, base + "_residuals.csv"), {"index", "residual"},
                  {[&] {
                       std::vector<double> i(fit.residuals.size());
                       for (std::size_t k = 0; k < i.size(); ++k) i[k] = static_cast<double>(k);
                       return i;
                   }(),
                   fit.residuals});
        std::vector<double> lags(fit.acf.size());
        for (std::size_t k = 0; k < lags.size(); ++k) lags[k] = static_cast<double>(k);
        write_csv(join(out, base + "_acf.csv"), {"lag", "acf"}, {lags, fit.acf});
        std::vector<double> theo, emp;
        for (const auto& [a, b] : fit.qq) {
            theo.push_back(a);
            emp.push_back(b);
        }
        write_csv(join(out, base + "_qq.csv"), {"theoretical", "empirical"}, {theo, emp});
        files.insert(files.end(), {base + ".json", base + "_residuals.csv", base + "_acf.csv", base + "_qq.csv"});
        fits.push_back(j);
        model["kappa"].push_back(fit.params.kappa);
        model["mu"].push_back(fit.params.mu);
        model["sigma"].push_back(fit.params.sigma);
        model["labels"].push_back(fit.label);
    }
    // Ready to paste into the model section of an experiment config.
    write_text_atomic(join(out, "calibrated_model.json"), model.dump(2) + "\n");
    files.push_back("calibrated_model.json");
    json results{{"series", series.size()}, {"fits", fits}};
    json config{{"csv", fs::absolute(csv).lexically_normal().string()}, {"dt", dt}, {"likelihood", to_string(form)}};
    finish(out, "calibrate", config, results, files);
    return results;
}

json cmd_solve(const ExperimentConfig& cfg, const std::string& out, std::ostream& log) {
    std::vector<std::string> files;
    const auto start = std::chrono::steady_clock::now();
    auto on_retrain = [&](const RetrainResult& r, const TrainedSolver& solver) {
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        char line[160];
        std::snprintf(line, sizeof line, "retrain %d/%d  y0 = %+.6f  no-exit = %.3f  (%.1f s)\n", r.index + 1,
                      cfg.retrains, r.y0, r.evaluation.summary.no_exit_fraction(), elapsed);
        log << line << std::flush;
        if (r.index != 0) return;
        save_solver(solver, join(out, "solver"));
        for (const auto& st : solver.stages) {
            char name[64];
            std::snprintf(name, sizeof name, "losses/loss_history_stage_%03d.csv", st.step);
            std::vector<double> epoch(st.loss_history.size());
            for (std::size_t e = 0; e < epoch.size(); ++e) epoch[e] = static_cast<double>(e + 1);
            write_csv(join(out, name), {"epoch", "loss"}, {epoch, st.loss_history});
            files.push_back(name);
        }
        const auto& tr = r.evaluation.trajectories;
        if (!tr.empty()) {
            std::vector<std::string> h{"t"};
            std::vector<std::vector<double>> cols{cfg.problem.grid.nodes};
            for (std::size_t j = 0; j < tr.size(); ++j) {
                h.push_back("y_path_" + std::to_string(j));
                cols.push_back(tr[j]);
            }
            write_csv(join(out, "trajectories.csv"), h, cols);
            files.push_back("trajectories.csv");
        }
    };
    const SolveReport report =
        y0_distribution(cfg.problem, cfg.training, cfg.evaluation, cfg.retrains, cfg.seed, on_retrain);
    files.push_back("solver");

    std::vector<double> idx, y0s, nox, p1, p2;
    json per = json::array();
    for (const auto& r : report.retrains) {
        idx.push_back(r.index);
        y0s.push_back(r.y0);
        nox.push_back(r.evaluation.summary.no_exit_fraction());
        p1.push_back(r.evaluation.summary.p1_fraction());
        p2.push_back(r.evaluation.summary.p2_fraction());
        per.push_back(json{{"index", r.index}, {"seed", r.seed}, {"y0", r.y0}, {"summary", summary_json(r.evaluation.summary)}});
    }
    write_csv(join(out, "y0_samples.csv"), {"retrain", "y0", "no_exit_fraction", "p1_exit_fraction", "p2_exit_fraction"},
              {idx, y0s, nox, p1, p2});
    files.push_back("y0_samples.csv");

    std::vector<double> player, times;
    for (double t : report.exits.p1_times) {
        player.push_back(1);
        times.push_back(t);
    }
    for (double t : report.exits.p2_times) {
        player.push_back(2);
        times.push_back(t);
    }
    write_csv(join(out, "exit_times.csv"), {"player", "time"}, {player, times});
    files.push_back("exit_times.csv");

    json results{{"retrains", cfg.retrains},
                 {"y0_mean", report.y0_mean()},
                 {"y0_stddev", report.retrains.size() > 1 ? json(report.y0_stddev()) : json(nullptr)},
                 {"exits", summary_json(report.exits)},
                 {"per_retrain", per}};
    write_text_atomic(join(out, "report.json"), results.dump(2) + "\n");
    files.push_back("report.json");
    json manifest_results = results;
    manifest_results.erase("per_retrain");
    manifest_results["elapsed_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    finish(out, "solve", manifest_config(cfg), manifest_results, files);
    return results;
}

namespace {

OracleSolution solve_oracle(const ExperimentConfig& cfg) {
    if (cfg.problem.dim() != 1) {
        throw UnsupportedError("the grid oracle handles one-dimensional problems only (config has d = " +
                               std::to_string(cfg.problem.dim()) + ")");
    }
    const OracleSettings settings = cfg.oracle.value_or(OracleSettings{});
    return grid_dp_solve(cfg.problem, settings.grid_for(cfg.problem.ou, cfg.problem.x0[0]));
}

}  // namespace

json cmd_oracle(const ExperimentConfig& cfg, const std::string& out, const std::string& solver_dir) {
    const OracleSolution sol = solve_oracle(cfg);
    const int N = sol.grid.steps;
    std::vector<double> t, x, y, yt, z, stop;
    for (int n = 0; n <= N; ++n) {
        for (std::size_t i = 0; i < sol.x.size(); ++i) {
            t.push_back(sol.grid.time(n));
            x.push_back(sol.x[i]);
            y.push_back(sol.value[static_cast<std::size_t>(n)][i]);
            if (n < N) {
                yt.push_back(sol.continuation[static_cast<std::size_t>(n)][i]);
                z.push_back(sol.z[static_cast<std::size_t>(n)][i]);
                const int s = sol.stop_upper[static_cast<std::size_t>(n)][i]   ? 1
                              : sol.stop_lower[static_cast<std::size_t>(n)][i] ? -1
                                                                               : 0;
                stop.push_back(s);
            } else {
                yt.push_back(y.back());
                z.push_back(0.0);
                stop.push_back(0);
            }
        }
    }
    write_csv(join(out, "surface.csv"), {"t", "x", "y", "y_tilde", "z", "stop"}, {t, x, y, yt, z, stop});
    std::vector<std::string> files{"surface.csv", "oracle.json"};
    json results{{"y0", sol.y0},
                 {"x0", sol.x0},
                 {"nodes", sol.x.size()},
                 {"lo", sol.spec.lo},
                 {"hi", sol.spec.hi},
                 {"interpolation", to_string(sol.spec.interpolation)},
                 {"expectation", to_string(sol.spec.expectation)}};
    if (!solver_dir.empty()) {
        const TrainedSolver deep = load_solver(solver_dir);
        const ComparisonReport c =
            compare_to_deep(sol, deep, cfg.problem, cfg.evaluation.paths, derive_seed(cfg.seed, seed_tags::eval));
        results["comparison"] = json{{"y0_oracle", c.y0_oracle},
                                     {"y0_deep", c.y0_deep},
                                     {"y0_abs_error", c.y0_abs_error},
                                     {"path_rmse", c.path_rmse},
                                     {"exit_ks_distance", c.exit_ks_distance},
                                     {"exit_ks_pvalue", c.exit_ks_pvalue},
                                     {"payoff_deep", c.payoff_deep.mean},
                                     {"payoff_deep_se", c.payoff_deep.std_error},
                                     {"payoff_oracle", c.payoff_oracle.mean},
                                     {"payoff_oracle_se", c.payoff_oracle.std_error}};
    }
    write_text_atomic(join(out, "oracle.json"), results.dump(2) + "\n");
    finish(out, "oracle", manifest_config(cfg), results, files);
    return results;
}

json cmd_skorokhod(const ExperimentConfig& cfg, const std::string& in_dir, const std::string& out, int export_paths) {
    const GameProblem& p = cfg.problem;
    const int N = p.grid.steps;
    const int M = cfg.simulate_paths;
    std::string source;
    Eigen::MatrixXd y_tilde, y_hat;
    const PathBatch paths = simulate_paths(OrnsteinUhlenbeck(p.ou), p.x0, p.grid, M, derive_seed(cfg.seed, seed_tags::eval));

    std::string solver_dir;
    if (fs::exists(join(in_dir, "solver.json"))) solver_dir = in_dir;
    else if (fs::exists(join(join(in_dir, "solver"), "solver.json"))) solver_dir = join(in_dir, "solver");
    if (!solver_dir.empty()) {
        source = "solver";
        const TrainedSolver deep = load_solver(solver_dir);
        if (deep.dim != p.dim() || !(deep.grid == p.grid)) {
            throw ConfigError("solver in '" + solver_dir + "' does not match the config (dimension or grid)");
        }
        const Rollout r = rollout(deep, paths);
        y_tilde = r.y_tilde;
        y_hat = r.y_hat;
    } else if (fs::exists(join(in_dir, "oracle.json"))) {
        source = "oracle";
        const OracleSolution sol = solve_oracle(cfg);
        y_tilde.resize(M, N);
        y_hat.resize(M, N + 1);
        for (int j = 0; j < M; ++j) {
            for (int n = 0; n < N; ++n) {
                const double v = sol.continuation_at(n, paths.state(n, j, 0));
                y_tilde(j, n) = v;
                y_hat(j, n) = std::clamp(v, p.barriers.lower(p.grid.time(n)), p.barriers.upper(p.grid.time(n)));
            }
            Eigen::VectorXd xN(1);
            xN[0] = paths.state(N, j, 0);
            y_hat(j, N) = p.payoff.terminal(xN);
        }
    } else {
        throw IoError("'" + in_dir + "' holds neither a solver (solver.json) nor an oracle run (oracle.json)");
    }

    std::vector<double> f1(static_cast<std::size_t>(N + 1)), f2(f1.size());
    for (int n = 0; n <= N; ++n) {
        f1[static_cast<std::size_t>(n)] = p.barriers.f1(p.grid.time(n));
        f2[static_cast<std::size_t>(n)] = p.barriers.f2(p.grid.time(n));
    }

    int passed = 0;
    double confinement = 0.0, monotonicity = 0.0, slack = 0.0, identity = 0.0, value_match = 0.0;
    std::vector<double> cp, ct, cx, cy, ca, cc;
    for (int j = 0; j < M; ++j) {
        const std::vector<double> yt = column(y_tilde, j);
        const std::vector<double> yh = column(y_hat, j);
        const ReversedDriver drv = reversed_driver(yt, yh, f1, f2);
        const ReflectedDecomposition dec = reconstruct_reflection(drv.x, drv.barriers);
        const SkorokhodReport rep = verify_skorokhod(dec, 1e-8);
        passed += rep.pass ? 1 : 0;
        confinement = std::max(confinement, rep.confinement_violation);
        monotonicity = std::max(monotonicity, rep.monotonicity_violation);
        slack = std::max(slack, (rep.slackness_lower + rep.slackness_upper) / rep.scale);
        identity = std::max(identity, rep.identity_error / rep.scale);
        for (int k = 0; k <= N; ++k) {
            value_match = std::max(value_match, std::abs(dec.y[static_cast<std::size_t>(k)] - yh[static_cast<std::size_t>(N - k)]));
        }
        if (j < export_paths) {
            const ForwardPushes fp = forward_pushes(dec);
            for (int n = 0; n <= N; ++n) {
                cp.push_back(j);
                ct.push_back(p.grid.time(n));
                cx.push_back(paths.state(n, j, 0));
                cy.push_back(yh[static_cast<std::size_t>(n)]);
                ca.push_back(fp.a[static_cast<std::size_t>(n)]);
                cc.push_back(fp.c[static_cast<std::size_t>(n)]);
            }
        }
    }
    write_csv(join(out, "reflection.csv"), {"path", "t", "x", "y", "a", "c"}, {cp, ct, cx, cy, ca, cc});
    json results{{"source", source},
                 {"paths", M},
                 {"passed", passed},
                 {"confinement_violation_max", confinement},
                 {"monotonicity_violation_max", monotonicity},
                 {"slackness_relative_max", slack},
                 {"identity_relative_max", identity},
                 {"value_match_max", value_match}};
    write_text_atomic(join(out, "skorokhod_report.json"), results.dump(2) + "\n");
    finish(out, "skorokhod", manifest_config(cfg), results, {"reflection.csv", "skorokhod_report.json"});
    return results;
}

namespace {

// Minimal reader for the numeric CSVs this tool writes.
std::vector<std::vector<double>> read_numeric_csv(const std::string& path, std::size_t columns) {
    std::istringstream in(read_text(path));
    std::string line;
    if (!std::getline(in, line)) throw IoError("'" + path + "' is empty");
    std::vector<std::vector<double>> cols(columns);
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::size_t k = 0;
        while (std::getline(ls, cell, ',')) {
            if (k >= columns) throw IoError("'" + path + "' row " + std::to_string(row) + ": too many columns");
            try {
                cols[k].push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw IoError("'" + path + "' row " + std::to_string(row) + ": '" + cell + "' is not a number");
            }
            ++k;
        }
        if (k != columns) throw IoError("'" + path + "' row " + std::to_string(row) + ": too few columns");
    }
    return cols;
}

}  // namespace

json cmd_report(const std::string& solve_dir, const std::string& out, int bins) {
    if (bins < 1) throw ConfigError("bins must be >= 1");
    const json report = json::parse(read_text(join(solve_dir, "report.json")));
    const json manifest = json::parse(read_text(join(solve_dir, "manifest.json")));
    const double horizon = manifest.at("config").at("grid").at("horizon").get<double>();
    const auto y0 = read_numeric_csv(join(solve_dir, "y0_samples.csv"), 5)[1];
    const auto exits = read_numeric_csv(join(solve_dir, "exit_times.csv"), 2);

    std::vector<double> centers(static_cast<std::size_t>(bins)), h1(centers.size()), h2(centers.size());
    const double w = horizon / bins;
    for (int b = 0; b < bins; ++b) centers[static_cast<std::size_t>(b)] = (b + 0.5) * w;
    std::vector<double> t1, t2;
    for (std::size_t i = 0; i < exits[0].size(); ++i) {
        const int b = std::clamp(static_cast<int>(exits[1][i] / w), 0, bins - 1);
        if (exits[0][i] == 1.0) {
            h1[static_cast<std::size_t>(b)] += 1;
            t1.push_back(exits[1][i]);
        } else {
            h2[static_cast<std::size_t>(b)] += 1;
            t2.push_back(exits[1][i]);
        }
    }
    write_csv(join(out, "exit_histogram.csv"), {"t", "p1_count", "p2_count"}, {centers, h1, h2});

    std::vector<double> yc, yh;
    if (!y0.empty()) {
        const auto [lo_it, hi_it] = std::minmax_element(y0.begin(), y0.end());
        const double lo = *lo_it, hi = *hi_it;
        const double bw = hi > lo ? (hi - lo) / bins : 1.0;
        yc.resize(static_cast<std::size_t>(bins));
        yh.assign(static_cast<std::size_t>(bins), 0.0);
        for (int b = 0; b < bins; ++b) yc[static_cast<std::size_t>(b)] = lo + (b + 0.5) * bw;
        for (double v : y0) yh[static_cast<std::size_t>(std::clamp(static_cast<int>((v - lo) / bw), 0, bins - 1))] += 1;
    }
    write_csv(join(out, "y0_histogram.csv"), {"y0", "count"}, {yc, yh});

    auto first_half_share = [&](const std::vector<double>& t) {
        if (t.empty()) return 0.0;
        return static_cast<double>(std::count_if(t.begin(), t.end(), [&](double s) { return s < 0.5 * horizon; })) /
               static_cast<double>(t.size());
    };
    json results{{"retrains", y0.size()},
                 {"y0_mean", y0.empty() ? 0.0 : stats::mean(y0)},
                 {"y0_median", y0.empty() ? 0.0 : stats::median(y0)},
                 {"y0_stddev", y0.size() > 1 ? json(stats::stddev(y0)) : json(nullptr)},
                 {"p1_exits", t1.size()},
                 {"p2_exits", t2.size()},
                 {"p1_first_half_share", first_half_share(t1)},
                 {"p2_first_half_share", first_half_share(t2)},
                 {"exits", report.at("exits")}};
    write_text_atomic(join(out, "summary.json"), results.dump(2) + "\n");
    finish(out, "report", manifest.at("config"), results, {"exit_histogram.csv", "y0_histogram.csv", "summary.json"});
    return results;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Deep doubly reflected BSDE solver for two-player stopping games"};
    app.require_subcommand(1);
    std::string config, out_dir, in_dir, csv, solver_dir, likelihood = "exact";
    Overrides ov;
    int threads = 0;
    double dt = 1.0 / 52.0;
    int export_paths = 10;
    int bins = 20;
    std::uint64_t seed = 0;
    int retrains = 0, epochs = 0;

    auto common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", config, "experiment config (JSON)");
        if (needs_config) c->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory")->required();
        sub->add_option("--threads", threads, "OpenMP threads (default: DRBSDE_THREADS or all cores)");
        sub->add_option("--seed", seed, "override the config seed");
        sub->add_option("--retrains", retrains, "override the number of retrains");
        sub->add_option("--epochs", epochs, "train every stage for this many epochs (smoke runs)");
    };
    auto* sim = app.add_subcommand("simulate", "simulate OU paths and export summaries");
    common(sim, true);
    sim->add_option("--export-paths", export_paths, "trajectories written to paths.csv");
    auto* cal = app.add_subcommand("calibrate", "fit a scalar OU model to each price column");
    common(cal, false);
    cal->add_option("--csv", csv, "price CSV (date,<label>,...); overrides the config");
    cal->add_option("--dt", dt, "years between observations");
    cal->add_option("--likelihood", likelihood, "exact or as_printed");
    auto* solve = app.add_subcommand("solve", "train the deep solver and evaluate exit statistics");
    common(solve, true);
    auto* orc = app.add_subcommand("oracle", "grid dynamic-programming reference (d = 1)");
    common(orc, true);
    orc->add_option("--solver", solver_dir, "trained solver to compare against");
    auto* sko = app.add_subcommand("skorokhod", "reconstruct and verify the reflection processes");
    common(sko, true);
    sko->add_option("--in", in_dir, "solve or oracle output directory")->required();
    sko->add_option("--export-paths", export_paths, "trajectories written to reflection.csv");
    auto* rep = app.add_subcommand("report", "plot-ready histograms and a summary of a solve run");
    common(rep, false);
    rep->add_option("--in", in_dir, "solve output directory")->required();
    rep->add_option("--bins", bins, "histogram bins");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        err << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::config);
    }

    try {
        configure_threads(threads);
        for (CLI::App* sub : {sim, cal, solve, orc, sko, rep}) {
            if (sub->count("--seed")) ov.seed = seed;
            if (sub->count("--retrains")) ov.retrains = retrains;
            if (sub->count("--epochs")) ov.epochs = epochs;
        }
        json result;
        if (*sim) {
            result = cmd_simulate(prepare_config(config, ov), out_dir, export_paths);
        } else if (*cal) {
            LikelihoodForm form = likelihood_form_from_string(likelihood);
            if (csv.empty()) {
                const ExperimentConfig cfg = prepare_config(config, ov);
                if (!cfg.calibration || cfg.calibration->csv.empty()) {
                    throw ConfigError("calibrate needs --csv or a config with calibration.csv");
                }
                csv = cfg.calibration->csv;
                if (!cal->count("--dt")) dt = cfg.calibration->dt;
                if (!cal->count("--likelihood")) form = cfg.calibration->likelihood;
            }
            result = cmd_calibrate(csv, dt, form, out_dir);
        } else if (*solve) {
            result = cmd_solve(prepare_config(config, ov), out_dir, err);
            result.erase("per_retrain");
        } else if (*orc) {
            result = cmd_oracle(prepare_config(config, ov), out_dir, solver_dir);
        } else if (*sko) {
            result = cmd_skorokhod(prepare_config(config, ov), in_dir, out_dir, export_paths);
        } else if (*rep) {
            result = cmd_report(in_dir, out_dir, bins);
        }
        out << result.dump(2) << "\n";
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(e.exit_code());
    } catch (const json::exception& e) {
        err << "error: malformed JSON input: " << e.what() << "\n";
        return static_cast<int>(ExitCode::io);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::numerical);
    }
}

}  // namespace drbsde::cli
