#include "doctest.h"

#include "commands.hpp"

#include "drbsde/error.hpp"
#include "drbsde/persist.hpp"
#include "drbsde/rng.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace drbsde;
namespace fs = std::filesystem;

namespace {

const std::string kSource = DRBSDE_SOURCE_DIR;

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("drbsde_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string write(const fs::path& p, const std::string& text) {
    std::ofstream(p) << text;
    return p.string();
}

int run(const std::vector<std::string>& args, std::string* out = nullptr, std::string* err = nullptr) {
    std::ostringstream o, e;
    const int code = cli::run(args, o, e);
    if (out) *out = o.str();
    if (err) *err = e.str();
    return code;
}

json tiny_config() {
    return json::parse(R"({
      "schema_version": 1,
      "name": "tiny",
      "seed": 3,
      "model": {"dim": 1, "kappa": 2.0, "mu": 0.0, "sigma": 1.0, "x0": 0.1},
      "horizon": 1.0,
      "steps": 5,
      "barriers": {"type": "constant", "upper": 0.5, "lower": 0.3},
      "payoff": {"type": "symmetric_average", "alpha": 10.0},
      "training": {"batch": 64, "epochs": 2, "hidden_width": 8, "hidden_layers": 1},
      "retrains": 2,
      "evaluation": {"paths": 500, "chunk": 200, "trajectories": 2},
      "oracle": {"nodes": 301},
      "simulate": {"paths": 40}
    })");
}

}  // namespace

TEST_CASE("bundled configs parse with the documented defaults") {
    const ExperimentConfig b = load_config(kSource + "/configs/benchmark20.json");
    CHECK(b.problem.dim() == 20);
    CHECK(b.problem.grid.steps == 50);
    CHECK(b.training.batch == 1024);
    CHECK(b.training.lr == 1e-3);
    CHECK(b.training.epochs.late_epochs == 500);
    CHECK(b.training.epochs.other_epochs == 100);
    CHECK(b.retrains == 30);
    for (int k = 0; k < 20; ++k) {
        CHECK(b.problem.ou.kappa(k, k) >= 1.5);
        CHECK(b.problem.ou.kappa(k, k) <= 2.5);
    }
    CHECK(b.problem.ou.kappa(0, 0) != b.problem.ou.kappa(1, 1));
    const ExperimentConfig b2 = load_config(kSource + "/configs/benchmark20.json");
    CHECK(b2.problem.ou.kappa == b.problem.ou.kappa);

    const ExperimentConfig c = load_config(kSource + "/configs/cfd24.json");
    CHECK(c.problem.dim() == 24);
    CHECK(c.problem.barriers.gamma_upper == 1.34);
    CHECK(c.problem.barriers.gamma_lower == 0.29);
    CHECK(c.problem.barriers.rho == 0.04);
    CHECK(c.problem.x0 == c.problem.ou.mu);
    CHECK(c.problem.payoff.weights.sum() == doctest::Approx(1.0));
    for (int k = 0; k < 24; ++k) {
        const double off = c.problem.payoff.strike[k] - c.problem.ou.mu[k];
        CHECK(off >= 0.9);
        CHECK(off <= 1.1);
    }
    REQUIRE(c.strike_seed.has_value());
    CHECK(c.resolved.contains("strike_seed"));
    const auto markets = c.resolved["model"]["markets"];
    CHECK(markets.size() == 24);
    CHECK(std::find(markets.begin(), markets.end(), "Luxembourg") == markets.end());
    CHECK(c.problem.ou.kappa(0, 0) == 27.43);  // Austria
}

TEST_CASE("config errors name the offending key") {
    json j = tiny_config();
    j["training"]["learning_rate"] = 0.1;
    try {
        parse_config(j);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("training.learning_rate") != std::string::npos);
    }
    j = tiny_config();
    j.erase("schema_version");
    CHECK_THROWS_AS(parse_config(j), ConfigError);
    j = tiny_config();
    j["schema_version"] = 2;
    CHECK_THROWS_AS(parse_config(j), ConfigError);
    j = tiny_config();
    j["steps"] = 0;
    CHECK_THROWS_AS(parse_config(j), ConfigError);
    j = tiny_config();
    j["barriers"]["upper"] = -0.4;
    CHECK_THROWS_AS(parse_config(j), ModelError);
    j = tiny_config();
    j["model"]["mu"] = json::array({1, 2});
    CHECK_THROWS_AS(parse_config(j), ConfigError);
    CHECK_THROWS_AS(parse_config(json::object()), ConfigError);
}

TEST_CASE("config hash is stable and order independent") {
    const json a = json::parse(R"({"b": 1, "a": [1, 2.5, "x"]})");
    const json b = json::parse(R"({"a": [1, 2.5, "x"], "b": 1})");
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    CHECK(config_hash(a) != config_hash(json::parse(R"({"a": [1, 2.5, "x"], "b": 2})")));
    // Pinned so a change in the canonical form is noticed.
    CHECK(config_hash(json::parse(R"({"a":1})")) == [] {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char ch : std::string(R"({"a":1})")) {
            h ^= ch;
            h *= 0x100000001b3ULL;
        }
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        return std::string(buf);
    }());
}

TEST_CASE("seed override re-derives seeded draws") {
    json j = tiny_config();
    j["model"] = json::parse(R"({"dim": 3, "kappa": {"uniform": [1, 2]}, "mu": 0, "sigma": 1, "x0": 0})");
    ExperimentConfig c = parse_config(j);
    const Eigen::MatrixXd k0 = c.problem.ou.kappa;
    override_seed(c, 99);
    CHECK(c.seed == 99);
    CHECK(c.training.seed == 99);
    CHECK(c.problem.ou.kappa != k0);
}

TEST_CASE("simulate is reproducible and its CSV round-trips") {
    const fs::path dir = scratch("sim");
    const std::string cfg = write(dir / "c.json", tiny_config().dump());
    REQUIRE(run({"simulate", "--config", cfg, "--out", (dir / "a").string()}) == 0);
    REQUIRE(run({"simulate", "--config", cfg, "--out", (dir / "b").string()}) == 0);
    CHECK(read_text((dir / "a/paths.csv").string()) == read_text((dir / "b/paths.csv").string()));
    CHECK(read_text((dir / "a/path_summary.csv").string()) == read_text((dir / "b/path_summary.csv").string()));
    REQUIRE(run({"simulate", "--config", cfg, "--out", (dir / "c").string(), "--seed", "4"}) == 0);
    CHECK(read_text((dir / "a/paths.csv").string()) != read_text((dir / "c/paths.csv").string()));

    // Values read back equal the simulated states exactly.
    const ExperimentConfig c = load_config(cfg);
    const PathBatch pb = simulate_paths(OrnsteinUhlenbeck(c.problem.ou), c.problem.x0, c.problem.grid, 40, c.seed);
    std::istringstream in(read_text((dir / "a/paths.csv").string()));
    std::string line;
    std::getline(in, line);
    CHECK(line == "path,step,t,x_1");
    int rows = 0;
    while (std::getline(in, line)) {
        int path = 0, step = 0;
        double t = 0, x = 0;
        REQUIRE(std::sscanf(line.c_str(), "%d,%d,%lf,%lf", &path, &step, &t, &x) == 4);
        CHECK(x == pb.state(step, path, 0));
        ++rows;
    }
    CHECK(rows == 10 * 6);
    const json m = json::parse(read_text((dir / "a/manifest.json").string()));
    CHECK(m["command"] == "simulate");
    CHECK(m["config_hash"] == config_hash(m["config"]));
    CHECK(m["files"].size() == 2);
}

TEST_CASE("exit codes") {
    const fs::path dir = scratch("codes");
    std::string err;
    CHECK(run({"simulate", "--config", write(dir / "empty.json", "{}"), "--out", (dir / "o").string()}, nullptr, &err) == 2);
    CHECK(err.find("schema_version") != std::string::npos);
    CHECK(run({"simulate", "--config", write(dir / "bad.json", "{not json"), "--out", (dir / "o").string()}) == 2);
    CHECK(run({"frobnicate"}) == 2);
    CHECK(run({"simulate", "--out", (dir / "o").string()}) == 2);
    const std::string cfg = write(dir / "c.json", tiny_config().dump());
    CHECK(run({"skorokhod", "--config", cfg, "--in", (dir / "missing").string(), "--out", (dir / "o").string()}) == 4);
    CHECK(run({"report", "--in", (dir / "missing").string(), "--out", (dir / "o").string()}) == 4);
    json big = tiny_config();
    big["model"]["sigma"] = 1e308;
    big["model"]["kappa"] = 1e308;
    big["model"]["x0"] = 1e308;
    CHECK(run({"simulate", "--config", write(dir / "nan.json", big.dump()), "--out", (dir / "o").string()}) == 3);
    std::string out;
    CHECK(run({"--help"}, &out) == 0);
    CHECK(out.find("solve") != std::string::npos);
}

TEST_CASE("calibrate writes one fit per column") {
    const fs::path dir = scratch("cal");
    std::string csv = "date,North,South\n";
    const Philox rng(1);
    double a = 80, b = 100;
    for (int i = 0; i < 120; ++i) {
        char line[96];
        const int y = 2015 + (i * 7 + 4) / 365;
        const auto day = std::chrono::sys_days(std::chrono::year(2015) / 1 / 5) + std::chrono::days(7 * i);
        const std::chrono::year_month_day ymd(day);
        (void)y;
        std::snprintf(line, sizeof line, "%04d-%02u-%02u,%.6f,%.6f\n", static_cast<int>(ymd.year()),
                      static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), a, b);
        csv += line;
        const auto z = rng.normal_pair(static_cast<std::uint64_t>(i), 0);
        a += 30.0 * (80 - a) / 52.0 + 150.0 * std::sqrt(1 / 52.0) * z[0];
        b += 20.0 * (100 - b) / 52.0 + 100.0 * std::sqrt(1 / 52.0) * z[1];
    }
    const std::string path = write(dir / "prices.csv", csv);
    std::string out;
    REQUIRE(run({"calibrate", "--csv", path, "--out", (dir / "fit").string()}, &out) == 0);
    CHECK(fs::exists(dir / "fit/fit_North.json"));
    CHECK(fs::exists(dir / "fit/fit_South.json"));
    CHECK(fs::exists(dir / "fit/fit_South_qq.csv"));
    const json model = json::parse(read_text((dir / "fit/calibrated_model.json").string()));
    CHECK(model["kappa"].size() == 2);
    CHECK(json::parse(out)["series"] == 2);

    std::string err;
    CHECK(run({"calibrate", "--csv", write(dir / "nohdr.csv", "2020-01-06,1\n"), "--out", (dir / "x").string()}, nullptr,
              &err) == 2);
    CHECK(err.find("missing header") != std::string::npos);
}

TEST_CASE("solve, oracle, skorokhod and report pipeline") {
    const fs::path dir = scratch("pipe");
    const std::string cfg = write(dir / "c.json", tiny_config().dump());
    std::string out;
    REQUIRE(run({"solve", "--config", cfg, "--out", (dir / "solve").string()}, &out) == 0);
    const json r = json::parse(out);
    CHECK(r["retrains"] == 2);
    CHECK(fs::exists(dir / "solve/solver/solver.json"));
    CHECK(fs::exists(dir / "solve/solver/stage_004.bin"));
    CHECK(fs::exists(dir / "solve/losses/loss_history_stage_000.csv"));
    CHECK(fs::exists(dir / "solve/y0_samples.csv"));
    CHECK(fs::exists(dir / "solve/exit_times.csv"));
    CHECK(fs::exists(dir / "solve/trajectories.csv"));

    // Rerun: numeric outputs are byte-identical.
    REQUIRE(run({"solve", "--config", cfg, "--out", (dir / "solve2").string()}) == 0);
    for (const char* f : {"report.json", "y0_samples.csv", "exit_times.csv", "trajectories.csv", "solver/stage_002.bin",
                          "solver/solver.json", "losses/loss_history_stage_003.csv"}) {
        CAPTURE(f);
        CHECK(read_text((dir / "solve" / f).string()) == read_text((dir / "solve2" / f).string()));
    }

    REQUIRE(run({"solve", "--config", cfg, "--out", (dir / "smoke").string(), "--retrains", "1", "--epochs", "1"}) == 0);
    CHECK(json::parse(read_text((dir / "smoke/manifest.json").string()))["config"]["retrains"] == 1);

    REQUIRE(run({"oracle", "--config", cfg, "--out", (dir / "oracle").string(), "--solver",
                 (dir / "solve/solver").string()},
                &out) == 0);
    const json o = json::parse(out);
    CHECK(o.contains("comparison"));
    CHECK(std::abs(o["comparison"]["y0_oracle"].get<double>() - o["y0"].get<double>()) < 1e-15);
    CHECK(fs::exists(dir / "oracle/surface.csv"));

    for (const char* src : {"oracle", "solve"}) {
        CAPTURE(src);
        REQUIRE(run({"skorokhod", "--config", cfg, "--in", (dir / src).string(), "--out",
                     (dir / (std::string("sk_") + src)).string()},
                    &out) == 0);
        const json s = json::parse(out);
        CHECK(s["passed"] == 40);
        CHECK(s["value_match_max"].get<double>() < 1e-12);
        CHECK(fs::exists(dir / (std::string("sk_") + src) / "reflection.csv"));
    }

    REQUIRE(run({"report", "--in", (dir / "solve").string(), "--out", (dir / "report").string()}, &out) == 0);
    CHECK(json::parse(out)["retrains"] == 2);
    CHECK(fs::exists(dir / "report/exit_histogram.csv"));

    json d2 = tiny_config();
    d2["model"]["dim"] = 2;
    CHECK(run({"oracle", "--config", write(dir / "d2.json", d2.dump()), "--out", (dir / "o2").string()}) == 2);
}
