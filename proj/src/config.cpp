#include "drbsde/config.hpp"

#include "drbsde/error.hpp"
#include "drbsde/rng.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

namespace drbsde {

namespace {

// Object reader that remembers which keys were consumed, so leftovers can be
// reported as unknown.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& at(const std::string& key) {
        if (!j_.contains(key)) throw ConfigError(where(key) + ": required key is missing");
        used_.insert(key);
        return j_.at(key);
    }

    std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    double number(const std::string& key) {
        const json& v = at(key);
        if (!v.is_number()) throw ConfigError(where(key) + ": expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ConfigError(where(key) + ": must be finite");
        return d;
    }
    double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

    long long integer(const std::string& key) {
        const json& v = at(key);
        if (!v.is_number_integer()) throw ConfigError(where(key) + ": expected an integer");
        return v.get<long long>();
    }
    long long integer(const std::string& key, long long fallback) { return has(key) ? integer(key) : fallback; }

    std::uint64_t unsigned_integer(const std::string& key) {
        const json& v = at(key);
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
            throw ConfigError(where(key) + ": expected a non-negative integer");
        }
        return v.get<std::uint64_t>();
    }

    bool boolean(const std::string& key, bool fallback) {
        if (!has(key)) return fallback;
        const json& v = at(key);
        if (!v.is_boolean()) throw ConfigError(where(key) + ": expected true or false");
        return v.get<bool>();
    }

    std::string string(const std::string& key) {
        const json& v = at(key);
        if (!v.is_string()) throw ConfigError(where(key) + ": expected a string");
        return v.get<std::string>();
    }
    std::string string(const std::string& key, const std::string& fallback) { return has(key) ? string(key) : fallback; }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!used_.contains(item.key())) throw ConfigError(where(item.key()) + ": unknown key");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

Eigen::VectorXd vector_of(const json& v, const std::string& where, int dim) {
    if (v.is_number()) return Eigen::VectorXd::Constant(dim, v.get<double>());
    if (!v.is_array()) throw ConfigError(where + ": expected a number or an array");
    if (static_cast<int>(v.size()) != dim) {
        throw ConfigError(where + ": expected " + std::to_string(dim) + " entries, found " + std::to_string(v.size()));
    }
    Eigen::VectorXd out(dim);
    for (int i = 0; i < dim; ++i) {
        if (!v[static_cast<std::size_t>(i)].is_number()) throw ConfigError(where + ": entries must be numbers");
        out[i] = v[static_cast<std::size_t>(i)].get<double>();
    }
    if (!out.allFinite()) throw ConfigError(where + ": entries must be finite");
    return out;
}

Eigen::MatrixXd matrix_of(const json& v, const std::string& where, int dim) {
    if (!v.is_array() || static_cast<int>(v.size()) != dim) {
        throw ConfigError(where + ": expected a " + std::to_string(dim) + "x" + std::to_string(dim) + " array");
    }
    Eigen::MatrixXd m(dim, dim);
    for (int i = 0; i < dim; ++i) {
        const Eigen::VectorXd row = vector_of(v[static_cast<std::size_t>(i)], where, dim);
        m.row(i) = row.transpose();
    }
    return m;
}

// Calibrated weekly OU parameters of continental European markets (kappa, mu, sigma).
struct MarketRow {
    const char* country;
    double kappa;
    double mu;
    double sigma;
};

constexpr std::array<MarketRow, 26> kEuropeanMarkets{{
    {"Austria", 27.43, 90.69, 187.93},       {"Belgium", 41.72, 80.56, 210.00},
    {"Bulgaria", 27.25, 104.95, 222.49},     {"Croatia", 31.81, 100.26, 209.58},
    {"Czechia", 30.60, 91.69, 188.54},       {"Denmark", 73.96, 75.68, 240.96},
    {"Estonia", 75.98, 88.16, 325.86},       {"France", 30.44, 69.10, 225.84},
    {"Germany", 53.40, 84.53, 220.38},       {"Greece", 24.90, 104.93, 177.39},
    {"Hungary", 30.72, 104.50, 243.72},      {"Italy", 18.47, 114.84, 110.14},
    {"Latvia", 71.99, 89.50, 302.16},        {"Lithuania", 72.55, 89.27, 306.12},
    {"Luxembourg", 53.40, 84.53, 220.38},    {"Montenegro", 22.40, 105.45, 157.00},
    {"Netherlands", 51.74, 84.75, 204.55},   {"North Macedonia", 24.95, 106.78, 192.44},
    {"Poland", 52.28, 99.17, 181.74},        {"Portugal", 20.46, 70.49, 204.60},
    {"Romania", 27.38, 105.87, 229.18},      {"Serbia", 24.56, 104.25, 198.08},
    {"Slovakia", 27.29, 98.80, 204.53},      {"Slovenia", 32.92, 98.28, 205.76},
    {"Spain", 20.95, 71.03, 209.19},         {"Switzerland", 17.22, 91.26, 164.64},
}};

std::vector<MarketRow> european_markets(const std::vector<std::string>& exclude) {
    std::vector<MarketRow> rows;
    for (const auto& r : kEuropeanMarkets) {
        if (std::find(exclude.begin(), exclude.end(), r.country) == exclude.end()) rows.push_back(r);
    }
    return rows;
}

struct ModelParse {
    OUParams ou;
    Eigen::VectorXd x0;
    json resolved;
};

ModelParse parse_model(const json& j, std::uint64_t seed) {
    Section s(j, "model");
    ModelParse out;
    out.resolved = json::object();
    if (s.has("table")) {
        const std::string table = s.string("table");
        if (table != "european_markets") throw ConfigError("model.table: unknown table '" + table + "'");
        std::vector<std::string> exclude{"Luxembourg", "Switzerland"};
        if (s.has("exclude")) {
            const json& ex = s.at("exclude");
            if (!ex.is_array()) throw ConfigError("model.exclude: expected an array of country names");
            exclude.clear();
            for (const auto& e : ex) {
                if (!e.is_string()) throw ConfigError("model.exclude: expected an array of country names");
                exclude.push_back(e.get<std::string>());
            }
        }
        const auto rows = european_markets(exclude);
        if (rows.empty()) throw ConfigError("model.exclude: every market is excluded");
        const int d = static_cast<int>(rows.size());
        Eigen::VectorXd k(d), m(d), sg(d);
        json names = json::array();
        for (int i = 0; i < d; ++i) {
            k[i] = rows[static_cast<std::size_t>(i)].kappa;
            m[i] = rows[static_cast<std::size_t>(i)].mu;
            sg[i] = rows[static_cast<std::size_t>(i)].sigma;
            names.push_back(rows[static_cast<std::size_t>(i)].country);
        }
        out.ou = OUParams::diagonal(k, m, sg);
        out.resolved["markets"] = names;
    } else {
        const long long dim = s.integer("dim");
        if (dim < 1 || dim > 10000) throw ConfigError("model.dim: must be between 1 and 10000");
        const int d = static_cast<int>(dim);
        Eigen::MatrixXd kappa;
        const json& kj = s.at("kappa");
        if (kj.is_object()) {
            Section ks(kj, "model.kappa");
            if (ks.has("uniform")) {
                const Eigen::VectorXd range = vector_of(ks.at("uniform"), "model.kappa.uniform", 2);
                if (!(range[0] <= range[1])) throw ConfigError("model.kappa.uniform: low must not exceed high");
                const std::uint64_t kseed = ks.has("seed") ? ks.unsigned_integer("seed") : seed;
                const Philox rng(derive_seed(kseed, seed_tags::kappa));
                Eigen::VectorXd diag(d);
                for (int i = 0; i < d; ++i) {
                    const double u = rng.uniform_pair(static_cast<std::uint64_t>(i), 0)[0];
                    diag[i] = range[0] + (range[1] - range[0]) * u;
                }
                kappa = diag.asDiagonal();
            } else {
                kappa = matrix_of(ks.at("matrix"), "model.kappa.matrix", d);
            }
            ks.finish();
        } else {
            kappa = vector_of(kj, "model.kappa", d).asDiagonal();
        }
        Eigen::MatrixXd sigma;
        const json& sj = s.at("sigma");
        if (sj.is_object()) {
            Section ss(sj, "model.sigma");
            sigma = matrix_of(ss.at("matrix"), "model.sigma.matrix", d);
            ss.finish();
        } else {
            sigma = vector_of(sj, "model.sigma", d).asDiagonal();
        }
        out.ou.kappa = kappa;
        out.ou.sigma = sigma;
        out.ou.mu = vector_of(s.at("mu"), "model.mu", d);
    }
    const int d = out.ou.dim();
    if (s.has("x0")) {
        const json& xj = s.at("x0");
        if (xj.is_string()) {
            if (xj.get<std::string>() != "mu") throw ConfigError("model.x0: the only named initial state is \"mu\"");
            out.x0 = out.ou.mu;
        } else {
            out.x0 = vector_of(xj, "model.x0", d);
        }
    } else {
        out.x0 = out.ou.mu;
    }
    s.finish();
    try {
        out.ou.validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
    return out;
}

json vec_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

json mat_json(const Eigen::MatrixXd& m) {
    json a = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vec_json(m.row(i).transpose()));
    return a;
}

std::string execution_name(Execution e) { return e == Execution::parallel ? "parallel" : "serial"; }

Execution execution_from_string(const std::string& s) {
    if (s == "parallel") return Execution::parallel;
    if (s == "serial") return Execution::serial;
    throw ConfigError("training.execution: expected parallel or serial");
}

std::string transition_name(TransitionMode m) { return m == TransitionMode::euler ? "euler" : "exact"; }

TransitionMode transition_from_string(const std::string& s) {
    if (s == "euler") return TransitionMode::euler;
    if (s == "exact") return TransitionMode::exact;
    throw ConfigError("oracle.transition: expected euler or exact");
}

PayoffSpec parse_payoff(const json& j, const OUParams& ou, std::uint64_t seed, std::optional<std::uint64_t>& strike_seed) {
    Section s(j, "payoff");
    const std::string type = s.string("type");
    const int d = ou.dim();
    PayoffSpec p;
    if (type == "symmetric_average") {
        p = PayoffSpec::symmetric_average(s.number("alpha"));
    } else if (type == "cfd") {
        Eigen::VectorXd w;
        const json& wj = s.at("weights");
        if (wj.is_string()) {
            if (wj.get<std::string>() != "equal") throw ConfigError("payoff.weights: expected \"equal\" or an array");
            w = Eigen::VectorXd::Constant(d, 1.0 / d);
        } else {
            w = vector_of(wj, "payoff.weights", d);
        }
        Eigen::VectorXd strike;
        const json& kj = s.at("strike");
        if (kj.is_object()) {
            // K = mu + U with U ~ Uniform(low, high) per component, drawn once.
            Section ks(kj, "payoff.strike");
            const double low = ks.number("offset_low");
            const double high = ks.number("offset_high");
            if (!(low <= high)) throw ConfigError("payoff.strike: offset_low must not exceed offset_high");
            const std::uint64_t sseed =
                ks.has("strike_seed") ? ks.unsigned_integer("strike_seed") : derive_seed(seed, seed_tags::strike);
            ks.finish();
            strike_seed = sseed;
            const Philox rng(derive_seed(sseed, seed_tags::strike));
            strike.resize(d);
            for (int i = 0; i < d; ++i) {
                const double u = rng.uniform_pair(static_cast<std::uint64_t>(i), 0)[0];
                strike[i] = ou.mu[i] + low + (high - low) * u;
            }
        } else {
            strike = vector_of(kj, "payoff.strike", d);
        }
        p = PayoffSpec::cfd(w, strike, s.number("rho"));
    } else {
        throw ConfigError("payoff.type: expected symmetric_average or cfd, got '" + type + "'");
    }
    s.finish();
    p.validate(d);
    return p;
}

EvaluationConfig parse_evaluation(const json& j) {
    Section s(j, "evaluation");
    EvaluationConfig e;
    e.paths = static_cast<int>(s.integer("paths", e.paths));
    e.chunk = static_cast<int>(s.integer("chunk", e.chunk));
    e.trajectories = static_cast<int>(s.integer("trajectories", e.trajectories));
    s.finish();
    if (e.paths < 1 || e.chunk < 1 || e.trajectories < 0) throw ConfigError("evaluation: counts must be positive");
    return e;
}

OracleSettings parse_oracle(const json& j) {
    Section s(j, "oracle");
    OracleSettings o;
    o.nodes = static_cast<int>(s.integer("nodes", o.nodes));
    o.width = s.number("width", o.width);
    o.gh_order = static_cast<int>(s.integer("gh_order", o.gh_order));
    if (s.has("interpolation")) o.interpolation = interpolation_from_string(s.string("interpolation"));
    if (s.has("expectation")) o.expectation = expectation_from_string(s.string("expectation"));
    if (s.has("transition")) o.transition = transition_from_string(s.string("transition"));
    s.finish();
    return o;
}

}  // namespace

GridSpec OracleSettings::grid_for(const OUParams& ou, double x0) const {
    GridSpec g = GridSpec::around(ou, x0, width);
    g.nodes = nodes;
    g.gh_order = gh_order;
    g.interpolation = interpolation;
    g.expectation = expectation;
    g.transition = transition;
    return g;
}

TrainingConfig training_config_from_json(const json& j) {
    Section s(j, "training");
    TrainingConfig t;
    t.batch = static_cast<int>(s.integer("batch", t.batch));
    t.lr = s.number("lr", t.lr);
    if (s.has("epochs")) {
        const json& ej = s.at("epochs");
        if (ej.is_number_integer()) {
            t.epochs = EpochSchedule::uniform(ej.get<int>());
        } else {
            Section es(ej, "training.epochs");
            t.epochs.late_epochs = static_cast<int>(es.integer("late", t.epochs.late_epochs));
            t.epochs.late_stages = static_cast<int>(es.integer("late_stages", t.epochs.late_stages));
            t.epochs.other_epochs = static_cast<int>(es.integer("other", t.epochs.other_epochs));
            es.finish();
        }
    }
    t.warm_start = s.boolean("warm_start", t.warm_start);
    if (s.has("path_source")) t.source = path_source_from_string(s.string("path_source"));
    t.hidden_width = static_cast<int>(s.integer("hidden_width", t.hidden_width));
    t.hidden_layers = static_cast<int>(s.integer("hidden_layers", t.hidden_layers));
    if (s.has("execution")) t.exec = execution_from_string(s.string("execution"));
    if (s.has("seed")) t.seed = s.unsigned_integer("seed");
    s.finish();
    t.validate();
    return t;
}

OUParams ou_params_from_json(const json& j) {
    Section s(j, "ou");
    const long long d = s.integer("dim");
    OUParams p;
    p.kappa = matrix_of(s.at("kappa"), "ou.kappa", static_cast<int>(d));
    p.mu = vector_of(s.at("mu"), "ou.mu", static_cast<int>(d));
    p.sigma = matrix_of(s.at("sigma"), "ou.sigma", static_cast<int>(d));
    s.finish();
    p.validate();
    return p;
}

BarrierSpec barrier_spec_from_json(const json& j) {
    Section s(j, "barriers");
    const std::string type = s.string("type");
    BarrierSpec b;
    if (type == "constant") {
        b = BarrierSpec::constant(s.number("upper"), s.number("lower"));
    } else if (type == "exp_decay") {
        b = BarrierSpec::exp_decay(s.number("gamma1"), s.number("gamma2"), s.number("rho"));
    } else {
        throw ConfigError("barriers.type: expected constant or exp_decay, got '" + type + "'");
    }
    s.finish();
    return b;
}

PayoffSpec payoff_spec_from_json(const json& j) {
    Section s(j, "payoff");
    const std::string type = s.string("type");
    PayoffSpec p;
    if (type == "symmetric_average") {
        p = PayoffSpec::symmetric_average(s.number("alpha"));
    } else if (type == "cfd") {
        const json& w = s.at("weights");
        const json& k = s.at("strike");
        const int d = static_cast<int>(w.size());
        p = PayoffSpec::cfd(vector_of(w, "payoff.weights", d), vector_of(k, "payoff.strike", d), s.number("rho"));
    } else {
        throw ConfigError("payoff.type: cannot restore payoff type '" + type + "'");
    }
    s.finish();
    return p;
}

json to_json(const TimeGrid& g) { return json{{"horizon", g.horizon}, {"steps", g.steps}, {"dt", g.dt}}; }

json to_json(const OUParams& p) {
    return json{{"dim", p.dim()}, {"kappa", mat_json(p.kappa)}, {"mu", vec_json(p.mu)}, {"sigma", mat_json(p.sigma)}};
}

json to_json(const BarrierSpec& b) {
    if (b.kind == BarrierSpec::Kind::constant) {
        return json{{"type", "constant"}, {"upper", b.gamma_upper}, {"lower", b.gamma_lower}};
    }
    return json{{"type", "exp_decay"}, {"gamma1", b.gamma_upper}, {"gamma2", b.gamma_lower}, {"rho", b.rho}};
}

json to_json(const PayoffSpec& p) {
    switch (p.kind) {
        case PayoffSpec::Kind::symmetric_average:
            return json{{"type", "symmetric_average"}, {"alpha", p.alpha}};
        case PayoffSpec::Kind::cfd:
            return json{{"type", "cfd"}, {"weights", vec_json(p.weights)}, {"strike", vec_json(p.strike)}, {"rho", p.rho}};
        case PayoffSpec::Kind::custom:
            break;
    }
    return json{{"type", "custom"}};
}

json to_json(const TrainingConfig& t) {
    return json{{"batch", t.batch},
                {"lr", t.lr},
                {"epochs", {{"late", t.epochs.late_epochs}, {"late_stages", t.epochs.late_stages}, {"other", t.epochs.other_epochs}}},
                {"warm_start", t.warm_start},
                {"path_source", to_string(t.source)},
                {"hidden_width", t.hidden_width},
                {"hidden_layers", t.hidden_layers},
                {"execution", execution_name(t.exec)},
                {"seed", t.seed}};
}

json to_json(const EvaluationConfig& e) {
    return json{{"paths", e.paths}, {"chunk", e.chunk}, {"trajectories", e.trajectories}};
}

json to_json(const OracleSettings& o) {
    return json{{"nodes", o.nodes},
                {"width", o.width},
                {"gh_order", o.gh_order},
                {"interpolation", to_string(o.interpolation)},
                {"expectation", to_string(o.expectation)},
                {"transition", transition_name(o.transition)}};
}

ExperimentConfig parse_config(const json& doc, const std::string& base_dir) {
    Section s(doc, "");
    const long long version = s.integer("schema_version");
    if (version != kSchemaVersion) {
        throw ConfigError("schema_version: expected " + std::to_string(kSchemaVersion) + ", got " + std::to_string(version));
    }
    ExperimentConfig cfg;
    cfg.base_dir = base_dir;
    cfg.source = doc;
    cfg.name = s.string("name", "experiment");
    cfg.seed = s.has("seed") ? s.unsigned_integer("seed") : 0;
    const ModelParse model = parse_model(s.at("model"), cfg.seed);
    cfg.problem.ou = model.ou;
    cfg.problem.x0 = model.x0;
    cfg.problem.grid = build_time_grid(s.number("horizon"), static_cast<int>(s.integer("steps")));
    cfg.problem.barriers = barrier_spec_from_json(s.at("barriers"));
    cfg.problem.payoff = parse_payoff(s.at("payoff"), model.ou, cfg.seed, cfg.strike_seed);
    cfg.training = s.has("training") ? training_config_from_json(s.at("training")) : TrainingConfig{};
    cfg.training.seed = cfg.seed;
    cfg.retrains = static_cast<int>(s.integer("retrains", 1));
    if (cfg.retrains < 1) throw ConfigError("retrains: must be >= 1");
    if (s.has("evaluation")) cfg.evaluation = parse_evaluation(s.at("evaluation"));
    if (s.has("oracle")) cfg.oracle = parse_oracle(s.at("oracle"));
    if (s.has("simulate")) {
        Section sim(s.at("simulate"), "simulate");
        cfg.simulate_paths = static_cast<int>(sim.integer("paths", cfg.simulate_paths));
        sim.finish();
        if (cfg.simulate_paths < 1) throw ConfigError("simulate.paths: must be >= 1");
    }
    if (s.has("calibration")) {
        Section c(s.at("calibration"), "calibration");
        CalibrationSettings cs;
        cs.csv = c.string("csv", "");
        if (!cs.csv.empty() && std::filesystem::path(cs.csv).is_relative()) {
            cs.csv = (std::filesystem::path(base_dir) / cs.csv).lexically_normal().string();
        }
        cs.dt = c.number("dt", cs.dt);
        if (c.has("likelihood")) cs.likelihood = likelihood_form_from_string(c.string("likelihood"));
        c.finish();
        if (!(cs.dt > 0.0)) throw ConfigError("calibration.dt: must be positive");
        cfg.calibration = cs;
    }
    s.finish();
    try {
        cfg.problem.validate();
    } catch (const ModelError& e) {
        throw ModelError(std::string("config: ") + e.what());
    }

    json r;
    r["schema_version"] = kSchemaVersion;
    r["name"] = cfg.name;
    r["seed"] = cfg.seed;
    r["model"] = to_json(cfg.problem.ou);
    if (model.resolved.contains("markets")) r["model"]["markets"] = model.resolved["markets"];
    r["x0"] = vec_json(cfg.problem.x0);
    r["grid"] = to_json(cfg.problem.grid);
    r["barriers"] = to_json(cfg.problem.barriers);
    r["payoff"] = to_json(cfg.problem.payoff);
    if (cfg.strike_seed) r["strike_seed"] = *cfg.strike_seed;
    r["training"] = to_json(cfg.training);
    r["retrains"] = cfg.retrains;
    r["evaluation"] = to_json(cfg.evaluation);
    r["simulate_paths"] = cfg.simulate_paths;
    if (cfg.oracle) r["oracle"] = to_json(*cfg.oracle);
    if (cfg.calibration) {
        r["calibration"] = json{{"csv", cfg.calibration->csv},
                                {"dt", cfg.calibration->dt},
                                {"likelihood", to_string(cfg.calibration->likelihood)}};
    }
    cfg.resolved = r;
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    const auto dir = std::filesystem::path(path).parent_path();
    return parse_config(doc, dir.empty() ? "." : dir.string());
}

void override_seed(ExperimentConfig& cfg, std::uint64_t seed) {
    json doc = cfg.source;
    doc["seed"] = seed;
    cfg = parse_config(doc, cfg.base_dir);
}

std::string config_hash(const json& doc) {
    const nlohmann::json sorted = nlohmann::json::parse(doc.dump());
    const std::string text = sorted.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace drbsde
