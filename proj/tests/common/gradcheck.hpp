#pragma once

#include "drbsde/neural.hpp"
#include "drbsde/rng.hpp"

#include <algorithm>
#include <cmath>

namespace testutil {

// Loss (1/B) sum_b <G_b, net(x_b)>, linear in the output so backward(G) is its
// exact gradient.
inline double linear_loss(const drbsde::MlpParams& p, const Eigen::MatrixXd& x, const Eigen::MatrixXd& G) {
    const Eigen::MatrixXd out = drbsde::forward(p, x, nullptr, drbsde::Execution::serial);
    return (out.array() * G.array()).sum() / static_cast<double>(x.rows());
}

struct GradCheck {
    double max_rel = 0.0;
    std::size_t checked = 0;
};

// Fourth-order central differences on every parameter; with h around 1e-3 the
// truncation and rounding errors are both near 1e-13. Relative error uses
// max(|analytic|, |numeric|, floor) in the denominator.
inline GradCheck gradient_check(std::uint64_t seed, double h = 1e-3, double floor = 1e-6) {
    const drbsde::Philox rng(seed);
    auto uni = [&](std::uint64_t i) { return rng.uniform_pair(i, 0)[0]; };
    drbsde::MlpSpec spec;
    spec.input_dim = 1 + static_cast<int>(uni(1) * 4);
    spec.output_dim = 1 + static_cast<int>(uni(2) * 4);
    spec.hidden_width = 3 + static_cast<int>(uni(3) * 10);
    spec.hidden_layers = static_cast<int>(uni(4) * 4);
    const int batch = 1 + static_cast<int>(uni(5) * 40);
    drbsde::MlpParams p = drbsde::init_params(spec, seed);
    // Non-zero biases so their gradients are exercised away from the init point.
    for (std::size_t l = 0; l < p.biases.size(); ++l) {
        for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) p.biases[l][i] = 0.2 * (uni(100 + 50 * l + i) - 0.5);
    }
    Eigen::MatrixXd x(batch, spec.input_dim), G(batch, spec.output_dim);
    for (int r = 0; r < batch; ++r) {
        for (int c = 0; c < spec.input_dim; ++c) x(r, c) = rng.normal_pair(1000 + r, c)[0];
        for (int c = 0; c < spec.output_dim; ++c) G(r, c) = rng.normal_pair(5000 + r, c)[1];
    }
    drbsde::Tape tape;
    drbsde::forward(p, x, &tape, drbsde::Execution::serial);
    const drbsde::GradientBundle g = drbsde::backward(p, tape, G);

    std::vector<double> flat = p.flatten();
    std::vector<double> analytic;
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
        analytic.insert(analytic.end(), g.weights[l].data(), g.weights[l].data() + g.weights[l].size());
        analytic.insert(analytic.end(), g.biases[l].data(), g.biases[l].data() + g.biases[l].size());
    }
    GradCheck out;
    for (std::size_t i = 0; i < flat.size(); ++i) {
        const double keep = flat[i];
        auto at = [&](double step) {
            flat[i] = keep + step;
            return linear_loss(drbsde::MlpParams::unflatten(spec, flat), x, G);
        };
        const double numeric = (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
        flat[i] = keep;
        const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), floor});
        out.max_rel = std::max(out.max_rel, std::abs(numeric - analytic[i]) / denom);
        ++out.checked;
    }
    return out;
}

}  // namespace testutil
