#pragma once

#include "drbsde/calibration.hpp"
#include "drbsde/oracle.hpp"
#include "drbsde/solver.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace drbsde {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

struct OracleSettings {
    int nodes = 801;
    double width = 8.0;  // stationary standard deviations on each side
    int gh_order = 32;
    Interpolation interpolation = Interpolation::monotone_cubic;
    Expectation expectation = Expectation::exact_piecewise;
    TransitionMode transition = TransitionMode::euler;

    GridSpec grid_for(const OUParams& ou, double x0) const;
};

struct CalibrationSettings {
    std::string csv;  // resolved against the config file's directory
    double dt = 1.0 / 52.0;
    LikelihoodForm likelihood = LikelihoodForm::exact;
};

// Parsed and validated experiment configuration. `source` keeps the document as
// written; `resolved` adds every default and the realized random draws (kappa
// diagonal, strike offsets), so it is enough to rerun the command.
struct ExperimentConfig {
    std::string name;
    GameProblem problem;
    TrainingConfig training;
    int retrains = 1;
    std::uint64_t seed = 0;
    EvaluationConfig evaluation;
    int simulate_paths = 1000;
    std::optional<OracleSettings> oracle;
    std::optional<CalibrationSettings> calibration;
    std::optional<std::uint64_t> strike_seed;
    std::string base_dir = ".";
    json source;
    json resolved;
};

// Throws ConfigError naming the offending key (unknown keys included).
ExperimentConfig parse_config(const json& doc, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);

// Re-derives everything that depends on `seed` (retrain seeds) after a CLI override.
void override_seed(ExperimentConfig& cfg, std::uint64_t seed);

json to_json(const TimeGrid& g);
json to_json(const OUParams& p);
json to_json(const BarrierSpec& b);
json to_json(const PayoffSpec& p);
json to_json(const TrainingConfig& t);
json to_json(const EvaluationConfig& e);
json to_json(const OracleSettings& o);

OUParams ou_params_from_json(const json& j);
BarrierSpec barrier_spec_from_json(const json& j);
PayoffSpec payoff_spec_from_json(const json& j);
TrainingConfig training_config_from_json(const json& j);

// 64-bit FNV-1a of the canonical (sorted-key, compact) serialization.
std::string config_hash(const json& doc);

}  // namespace drbsde
