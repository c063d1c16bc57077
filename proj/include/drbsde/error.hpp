#pragma once

#include <stdexcept>
#include <string>

namespace drbsde {

// Process exit codes used by the command-line front end.
enum class ExitCode : int {
    ok = 0,
    config = 2,
    numerical = 3,
    io = 4,
};

class Error : public std::runtime_error {
public:
    Error(const std::string& what, ExitCode code) : std::runtime_error(what), code_(code) {}
    ExitCode exit_code() const noexcept { return code_; }

private:
    ExitCode code_;
};

// Invalid configuration or arguments (bad T/N, unknown keys, malformed input).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what, ExitCode::config) {}
};

// Shape or protocol violation between components (e.g. stale tape, grid mismatch).
class ContractError : public Error {
public:
    explicit ContractError(const std::string& what) : Error(what, ExitCode::config) {}
};

// Model assumption violated, e.g. inverted barriers.
class ModelError : public Error {
public:
    explicit ModelError(const std::string& what) : Error(what, ExitCode::config) {}
};

class UnsupportedError : public Error {
public:
    explicit UnsupportedError(const std::string& what) : Error(what, ExitCode::config) {}
};

// NaN/Inf during simulation or training, degenerate fits, quadrature coverage loss.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(what, ExitCode::numerical) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what, ExitCode::io) {}
};

}  // namespace drbsde
