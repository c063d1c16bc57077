#pragma once

#include "drbsde/config.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace drbsde::cli {

// Overrides from the command line, applied after the config file is parsed.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> retrains;
    std::optional<int> epochs;
};

ExperimentConfig prepare_config(const std::string& path, const Overrides& o);

// Each command writes its outputs plus manifest.json into `out` and returns the
// results block of the manifest.
json cmd_simulate(const ExperimentConfig& cfg, const std::string& out, int export_paths = 10);
json cmd_calibrate(const std::string& csv, double dt, LikelihoodForm form, const std::string& out);
json cmd_solve(const ExperimentConfig& cfg, const std::string& out, std::ostream& log);
json cmd_oracle(const ExperimentConfig& cfg, const std::string& out, const std::string& solver_dir = "");
json cmd_skorokhod(const ExperimentConfig& cfg, const std::string& in_dir, const std::string& out,
                   int export_paths = 10);
json cmd_report(const std::string& solve_dir, const std::string& out, int bins = 20);

// Full front end; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace drbsde::cli
