#pragma once

#include "drbsde/execution.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace drbsde {

enum class Activation { tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct MlpSpec {
    int input_dim = 1;
    int hidden_width = 50;
    int hidden_layers = 3;  // zero gives a single affine map
    int output_dim = 1;
    Activation activation = Activation::tanh;

    int layers() const { return hidden_layers + 1; }
    // Widths N_0, ..., N_L.
    std::vector<int> widths() const;
    void validate() const;
    // (d+1) -> 50 -> 50 -> 50 -> (d+1): one shared trunk, output 0 is the value
    // head and outputs 1..d the gradient head.
    static MlpSpec stage_default(int dim);

    bool operator==(const MlpSpec&) const = default;
};

struct MlpParams {
    MlpSpec spec;
    std::vector<Eigen::MatrixXd> weights;  // W_l is N_l x N_{l-1}
    std::vector<Eigen::VectorXd> biases;
    // Changes on every mutation made through this module; a Tape remembers it.
    std::uint64_t version = 0;

    std::size_t parameter_count() const;
    void validate() const;
    // Layer-major: W_1 (column-major), b_1, W_2, b_2, ...
    std::vector<double> flatten() const;
    static MlpParams unflatten(const MlpSpec& spec, std::span<const double> flat);
};

// Gradients, same shapes as MlpParams.
struct GradientBundle {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;

    static GradientBundle zeros_like(const MlpParams& p);
    double max_abs() const;
};

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step_count = 0;
    GradientBundle first_moment;
    GradientBundle second_moment;

    static AdamState for_params(const MlpParams& p, double lr = 1e-3);
};

// Activations kept by forward for backward. Rows are padded to the kernel
// block; `rows` is the caller's batch size.
struct Tape {
    const MlpParams* params = nullptr;
    std::uint64_t version = 0;
    int rows = 0;
    std::vector<Eigen::MatrixXd> activations;  // a_0 = input, a_1, ..., a_L = output
};

MlpParams init_params(const MlpSpec& spec, std::uint64_t seed);

// Output is batch x N_L. The row values do not depend on the batch size, the
// position of the row or the execution mode.
Eigen::MatrixXd forward(const MlpParams& params, const Eigen::Ref<const Eigen::MatrixXd>& input, Tape* tape = nullptr,
                        Execution exec = Execution::parallel);

// Gradient of (1/batch) sum_b <output_grad_b, output_b> with respect to the
// parameters, i.e. output_grad holds per-sample sensitivities of a mean loss.
GradientBundle backward(const MlpParams& params, const Tape& tape, const Eigen::Ref<const Eigen::MatrixXd>& output_grad);

// Bias-corrected Adam update in place.
void adam_step(MlpParams& params, const GradientBundle& grads, AdamState& state);

}  // namespace drbsde
