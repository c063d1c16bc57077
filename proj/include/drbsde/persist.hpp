#pragma once

#include "drbsde/config.hpp"
#include "drbsde/solver.hpp"

#include <string>
#include <vector>

namespace drbsde {

// Writes to a sibling temporary and renames, so a crash never leaves a half file.
void write_text_atomic(const std::string& path, const std::string& content);
void write_binary_atomic(const std::string& path, const std::vector<double>& values);
std::vector<double> read_binary(const std::string& path);
std::string read_text(const std::string& path);

// Columns of equal length under a header row; %.17g so values round-trip.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& columns);

// A trained solver is a directory: solver.json plus one stage_NNN.bin per time
// step holding the flattened network (little-endian f64).
void save_solver(const TrainedSolver& solver, const std::string& dir);
TrainedSolver load_solver(const std::string& dir);

// Everything needed to rerun a command and know what it produced.
struct RunManifest {
    std::string command;
    std::string config_hash;
    json config;  // resolved
    json results = json::object();
    std::vector<std::string> files;

    void write(const std::string& dir) const;
};

std::string utc_timestamp();

}  // namespace drbsde
