#include "drbsde/persist.hpp"

#include "drbsde/error.hpp"

#include <bit>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace drbsde {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "stage files are stored little-endian");

namespace {

std::string tmp_name(const std::string& path) { return path + ".tmp"; }

void commit(const std::string& tmp, const std::string& path) {
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot move '" + tmp + "' into place: " + ec.message());
    }
}

void ensure_parent(const std::string& path) {
    const fs::path parent = fs::path(path).parent_path();
    if (parent.empty()) return;
    std::error_code ec;
    fs::create_directories(parent, ec);
    if (ec) throw IoError("cannot create directory '" + parent.string() + "': " + ec.message());
}

std::string stage_file(int n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "stage_%03d.bin", n);
    return buf;
}

json vec_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Eigen::VectorXd vec_from(const json& a, const std::string& what) {
    if (!a.is_array()) throw IoError("solver.json: " + what + " is not an array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
    return v;
}

}  // namespace

void write_text_atomic(const std::string& path, const std::string& content) {
    ensure_parent(path);
    const std::string tmp = tmp_name(path);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp + "' for writing");
        out << content;
        out.flush();
        if (!out) throw IoError("write to '" + tmp + "' failed");
    }
    commit(tmp, path);
}

void write_binary_atomic(const std::string& path, const std::vector<double>& values) {
    ensure_parent(path);
    const std::string tmp = tmp_name(path);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp + "' for writing");
        out.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size() * sizeof(double)));
        out.flush();
        if (!out) throw IoError("write to '" + tmp + "' failed");
    }
    commit(tmp, path);
}

std::vector<double> read_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes % sizeof(double) != 0) throw IoError("'" + path + "' is truncated");
    std::vector<double> v(bytes / sizeof(double));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw IoError("read from '" + path + "' failed");
    return v;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& columns) {
    if (header.size() != columns.size()) throw ContractError("write_csv: header and column counts differ");
    std::size_t rows = columns.empty() ? 0 : columns.front().size();
    for (const auto& c : columns) {
        if (c.size() != rows) throw ContractError("write_csv: columns have different lengths");
    }
    std::string out;
    for (std::size_t k = 0; k < header.size(); ++k) {
        if (k) out += ',';
        out += header[k];
    }
    out += '\n';
    char buf[40];
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t k = 0; k < columns.size(); ++k) {
            if (k) out += ',';
            std::snprintf(buf, sizeof buf, "%.17g", columns[k][r]);
            out += buf;
        }
        out += '\n';
    }
    write_text_atomic(path, out);
}

void save_solver(const TrainedSolver& solver, const std::string& dir) {
    solver.validate();
    if (solver.payoff.kind == PayoffSpec::Kind::custom) {
        throw UnsupportedError("a solver with a custom payoff cannot be saved");
    }
    json m;
    m["format"] = "drbsde-solver";
    m["format_version"] = 1;
    m["dim"] = solver.dim;
    m["grid"] = to_json(solver.grid);
    m["barriers"] = to_json(solver.barriers);
    m["payoff"] = to_json(solver.payoff);
    m["training"] = to_json(solver.config);
    json stages = json::array();
    for (const auto& st : solver.stages) {
        const std::string file = stage_file(st.step);
        write_binary_atomic((fs::path(dir) / file).string(), st.params.flatten());
        const MlpSpec& s = st.params.spec;
        stages.push_back(json{{"step", st.step},
                              {"file", file},
                              {"input_dim", s.input_dim},
                              {"hidden_width", s.hidden_width},
                              {"hidden_layers", s.hidden_layers},
                              {"output_dim", s.output_dim},
                              {"activation", to_string(s.activation)},
                              {"parameters", st.params.parameter_count()},
                              {"normalizer_mean", vec_json(st.normalizer.mean)},
                              {"normalizer_scale", vec_json(st.normalizer.scale)},
                              {"final_loss", st.final_loss}});
    }
    m["stages"] = stages;
    write_text_atomic((fs::path(dir) / "solver.json").string(), m.dump(2) + "\n");
}

TrainedSolver load_solver(const std::string& dir) {
    const std::string path = (fs::path(dir) / "solver.json").string();
    json m;
    try {
        m = json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw IoError("'" + path + "' is not a valid solver manifest: " + e.what());
    }
    try {
        if (m.at("format").get<std::string>() != "drbsde-solver" || m.at("format_version").get<int>() != 1) {
            throw IoError("'" + path + "' has an unsupported format");
        }
        TrainedSolver s;
        s.dim = m.at("dim").get<int>();
        s.grid = build_time_grid(m.at("grid").at("horizon").get<double>(), m.at("grid").at("steps").get<int>());
        s.barriers = barrier_spec_from_json(m.at("barriers"));
        s.payoff = payoff_spec_from_json(m.at("payoff"));
        s.config = training_config_from_json(m.at("training"));
        for (const auto& js : m.at("stages")) {
            StageNetwork st;
            st.step = js.at("step").get<int>();
            MlpSpec spec;
            spec.input_dim = js.at("input_dim").get<int>();
            spec.hidden_width = js.at("hidden_width").get<int>();
            spec.hidden_layers = js.at("hidden_layers").get<int>();
            spec.output_dim = js.at("output_dim").get<int>();
            spec.activation = activation_from_string(js.at("activation").get<std::string>());
            spec.validate();
            const std::vector<double> flat = read_binary((fs::path(dir) / js.at("file").get<std::string>()).string());
            st.params = MlpParams::unflatten(spec, flat);
            st.normalizer.mean = vec_from(js.at("normalizer_mean"), "normalizer_mean");
            st.normalizer.scale = vec_from(js.at("normalizer_scale"), "normalizer_scale");
            st.final_loss = js.at("final_loss").get<double>();
            s.stages.push_back(std::move(st));
        }
        s.validate();
        return s;
    } catch (const json::exception& e) {
        throw IoError("'" + path + "' is malformed: " + e.what());
    } catch (const ContractError& e) {
        throw IoError("'" + path + "' is inconsistent: " + e.what());
    }
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void RunManifest::write(const std::string& dir) const {
    json m;
    m["command"] = command;
    m["created"] = utc_timestamp();
    m["config_hash"] = config_hash;
    m["config"] = config;
    m["results"] = results;
    m["files"] = files;
    write_text_atomic((fs::path(dir) / "manifest.json").string(), m.dump(2) + "\n");
}

}  // namespace drbsde
