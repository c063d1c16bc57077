#include "drbsde/neural.hpp"

#include "drbsde/error.hpp"
#include "drbsde/kernels.hpp"
#include "drbsde/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace drbsde {

namespace {

std::uint64_t next_version() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

void check_finite(const Eigen::MatrixXd& m, const std::string& where) {
    if (!m.allFinite()) throw NumericalError("non-finite gradient in " + where);
}

}  // namespace

std::string to_string(Activation a) {
    switch (a) {
        case Activation::tanh:
            return "tanh";
    }
    return "unknown";
}

Activation activation_from_string(const std::string& name) {
    if (name == "tanh") return Activation::tanh;
    throw ConfigError("unknown activation '" + name + "'");
}

std::vector<int> MlpSpec::widths() const {
    std::vector<int> w;
    w.push_back(input_dim);
    for (int i = 0; i < hidden_layers; ++i) w.push_back(hidden_width);
    w.push_back(output_dim);
    return w;
}

void MlpSpec::validate() const {
    if (input_dim < 1 || output_dim < 1 || hidden_width < 1 || hidden_layers < 0) {
        throw ConfigError("network: dimensions must be >= 1 and hidden_layers >= 0");
    }
}

MlpSpec MlpSpec::stage_default(int dim) {
    MlpSpec s;
    s.input_dim = dim + 1;
    s.output_dim = dim + 1;
    return s;
}

std::size_t MlpParams::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
    return n;
}

void MlpParams::validate() const {
    spec.validate();
    const auto w = spec.widths();
    if (weights.size() != static_cast<std::size_t>(spec.layers()) || biases.size() != weights.size()) {
        throw ContractError("network: layer count does not match spec");
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].rows() != w[l + 1] || weights[l].cols() != w[l] || biases[l].size() != w[l + 1]) {
            throw ContractError("network: layer " + std::to_string(l + 1) + " has wrong shape");
        }
        if (!weights[l].allFinite() || !biases[l].allFinite()) {
            throw NumericalError("network: layer " + std::to_string(l + 1) + " has non-finite entries");
        }
    }
}

std::vector<double> MlpParams::flatten() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (std::size_t l = 0; l < weights.size(); ++l) {
        flat.insert(flat.end(), weights[l].data(), weights[l].data() + weights[l].size());
        flat.insert(flat.end(), biases[l].data(), biases[l].data() + biases[l].size());
    }
    return flat;
}

MlpParams MlpParams::unflatten(const MlpSpec& spec, std::span<const double> flat) {
    spec.validate();
    MlpParams p;
    p.spec = spec;
    const auto w = spec.widths();
    std::size_t pos = 0;
    const auto take = [&](double* dst, std::size_t n) {
        if (pos + n > flat.size()) throw ContractError("network: flat parameter array too short");
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos), flat.begin() + static_cast<std::ptrdiff_t>(pos + n), dst);
        pos += n;
    };
    for (int l = 0; l < spec.layers(); ++l) {
        Eigen::MatrixXd W(w[static_cast<std::size_t>(l) + 1], w[static_cast<std::size_t>(l)]);
        Eigen::VectorXd b(w[static_cast<std::size_t>(l) + 1]);
        take(W.data(), static_cast<std::size_t>(W.size()));
        take(b.data(), static_cast<std::size_t>(b.size()));
        p.weights.push_back(std::move(W));
        p.biases.push_back(std::move(b));
    }
    if (pos != flat.size()) throw ContractError("network: flat parameter array too long");
    p.version = next_version();
    return p;
}

GradientBundle GradientBundle::zeros_like(const MlpParams& p) {
    GradientBundle g;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        g.weights.push_back(Eigen::MatrixXd::Zero(p.weights[l].rows(), p.weights[l].cols()));
        g.biases.push_back(Eigen::VectorXd::Zero(p.biases[l].size()));
    }
    return g;
}

double GradientBundle::max_abs() const {
    double m = 0.0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].size() > 0) m = std::max(m, weights[l].cwiseAbs().maxCoeff());
        if (biases[l].size() > 0) m = std::max(m, biases[l].cwiseAbs().maxCoeff());
    }
    return m;
}

AdamState AdamState::for_params(const MlpParams& p, double lr) {
    AdamState s;
    s.lr = lr;
    s.first_moment = GradientBundle::zeros_like(p);
    s.second_moment = GradientBundle::zeros_like(p);
    return s;
}

MlpParams init_params(const MlpSpec& spec, std::uint64_t seed) {
    spec.validate();
    MlpParams p;
    p.spec = spec;
    const auto w = spec.widths();
    const Philox rng(derive_seed(seed, seed_tags::init));
    for (int l = 0; l < spec.layers(); ++l) {
        const int fan_in = w[static_cast<std::size_t>(l)];
        const int fan_out = w[static_cast<std::size_t>(l) + 1];
        const double r = std::sqrt(6.0 / (fan_in + fan_out));
        Eigen::MatrixXd W(fan_out, fan_in);
        for (Eigen::Index i = 0; i < W.size(); i += 2) {
            const auto u = rng.uniform_pair(static_cast<std::uint64_t>(l), static_cast<std::uint64_t>(i / 2));
            W.data()[i] = r * (2.0 * u[0] - 1.0);
            if (i + 1 < W.size()) W.data()[i + 1] = r * (2.0 * u[1] - 1.0);
        }
        p.weights.push_back(std::move(W));
        p.biases.push_back(Eigen::VectorXd::Zero(fan_out));
    }
    p.version = next_version();
    return p;
}

Eigen::MatrixXd forward(const MlpParams& params, const Eigen::Ref<const Eigen::MatrixXd>& input, Tape* tape,
                        Execution exec) {
    if (input.cols() != params.spec.input_dim) {
        throw ContractError("forward: input has " + std::to_string(input.cols()) + " columns, network expects " +
                            std::to_string(params.spec.input_dim));
    }
    if (params.weights.size() != static_cast<std::size_t>(params.spec.layers())) {
        throw ContractError("forward: parameters do not match spec");
    }
    const int rows = static_cast<int>(input.rows());
    const int padded = kernels::padded_rows(rows);

    std::vector<Eigen::MatrixXd> acts;
    acts.reserve(params.weights.size() + 1);
    Eigen::MatrixXd a0 = Eigen::MatrixXd::Zero(padded, input.cols());
    a0.topRows(rows) = input;
    acts.push_back(std::move(a0));
    const int L = params.spec.layers();
    for (int l = 0; l < L; ++l) {
        Eigen::MatrixXd z;
        kernels::affine(acts.back(), params.weights[static_cast<std::size_t>(l)],
                        params.biases[static_cast<std::size_t>(l)], z, exec);
        if (l + 1 < L) kernels::tanh_inplace(z, exec);
        acts.push_back(std::move(z));
    }
    Eigen::MatrixXd out = acts.back().topRows(rows);
    if (tape != nullptr) {
        tape->params = &params;
        tape->version = params.version;
        tape->rows = rows;
        tape->activations = std::move(acts);
    }
    return out;
}

GradientBundle backward(const MlpParams& params, const Tape& tape, const Eigen::Ref<const Eigen::MatrixXd>& output_grad) {
    if (tape.params != &params || tape.version != params.version) {
        throw ContractError("backward: tape was recorded with different or since-updated parameters");
    }
    const int L = params.spec.layers();
    if (tape.activations.size() != static_cast<std::size_t>(L) + 1) throw ContractError("backward: malformed tape");
    if (output_grad.rows() != tape.rows || output_grad.cols() != params.spec.output_dim) {
        throw ContractError("backward: output gradient shape does not match the tape");
    }
    GradientBundle g;
    g.weights.resize(static_cast<std::size_t>(L));
    g.biases.resize(static_cast<std::size_t>(L));
    const int rows = tape.rows;
    Eigen::MatrixXd dz = output_grad / static_cast<double>(rows);
    for (int l = L - 1; l >= 0; --l) {
        const auto li = static_cast<std::size_t>(l);
        const auto prev = tape.activations[li].topRows(rows);
        g.weights[li].noalias() = dz.transpose() * prev;
        g.biases[li] = dz.colwise().sum().transpose();
        if (l > 0) {
            Eigen::MatrixXd da = dz * params.weights[li];
            dz = (da.array() * (1.0 - prev.array().square())).matrix();
        }
    }
    return g;
}

void adam_step(MlpParams& params, const GradientBundle& grads, AdamState& state) {
    const std::size_t L = params.weights.size();
    if (grads.weights.size() != L || grads.biases.size() != L || state.first_moment.weights.size() != L) {
        throw ContractError("adam_step: gradient or optimizer state does not match parameters");
    }
    for (std::size_t l = 0; l < L; ++l) {
        if (grads.weights[l].rows() != params.weights[l].rows() || grads.weights[l].cols() != params.weights[l].cols() ||
            grads.biases[l].size() != params.biases[l].size()) {
            throw ContractError("adam_step: gradient shape mismatch at layer " + std::to_string(l + 1));
        }
        check_finite(grads.weights[l], "layer " + std::to_string(l + 1) + " weights");
        check_finite(grads.biases[l], "layer " + std::to_string(l + 1) + " biases");
    }
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    const auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
        p.array() -= state.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
    };
    for (std::size_t l = 0; l < L; ++l) {
        update(params.weights[l], grads.weights[l], state.first_moment.weights[l], state.second_moment.weights[l]);
        update(params.biases[l], grads.biases[l], state.first_moment.biases[l], state.second_moment.biases[l]);
    }
    params.version = next_version();
}

}  // namespace drbsde
