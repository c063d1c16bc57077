#include "drbsde/game.hpp"

#include "drbsde/error.hpp"

#include <cmath>
#include <sstream>

namespace drbsde {

BarrierSpec BarrierSpec::constant(double upper, double lower) {
    BarrierSpec b;
    b.kind = Kind::constant;
    b.gamma_upper = upper;
    b.gamma_lower = lower;
    return b;
}

BarrierSpec BarrierSpec::exp_decay(double gamma1, double gamma2, double rho) {
    BarrierSpec b;
    b.kind = Kind::exp_decay;
    b.gamma_upper = gamma1;
    b.gamma_lower = gamma2;
    b.rho = rho;
    return b;
}

double BarrierSpec::f1(double t) const {
    return kind == Kind::constant ? gamma_upper : gamma_upper * std::exp(-rho * t);
}

double BarrierSpec::f2(double t) const {
    return kind == Kind::constant ? gamma_lower : gamma_lower * std::exp(-rho * t);
}

void BarrierSpec::validate(double horizon) const {
    if (!std::isfinite(gamma_upper) || !std::isfinite(gamma_lower) || !std::isfinite(rho)) {
        throw ModelError("barriers: non-finite parameter");
    }
    if (kind == Kind::exp_decay && !(gamma_upper > 0.0 && gamma_lower > 0.0 && rho > 0.0)) {
        throw ModelError("barriers: exponential penalties need gamma1, gamma2, rho > 0");
    }
    // Both variants are monotone in t, so the end points decide separation.
    for (const double t : {0.0, horizon}) {
        if (!(lower(t) < f1(t))) {
            throw ModelError("barriers: lower barrier -f2 is not strictly below f1 at t = " + std::to_string(t));
        }
    }
}

std::string BarrierSpec::describe() const {
    std::ostringstream os;
    if (kind == Kind::constant) {
        os << "constant(upper=" << gamma_upper << ", lower=" << gamma_lower << ")";
    } else {
        os << "exp_decay(gamma1=" << gamma_upper << ", gamma2=" << gamma_lower << ", rho=" << rho << ")";
    }
    return os.str();
}

PayoffSpec PayoffSpec::symmetric_average(double alpha) {
    PayoffSpec p;
    p.kind = Kind::symmetric_average;
    p.alpha = alpha;
    return p;
}

PayoffSpec PayoffSpec::cfd(Eigen::VectorXd weights, Eigen::VectorXd strike, double rho) {
    PayoffSpec p;
    p.kind = Kind::cfd;
    p.weights = std::move(weights);
    p.strike = std::move(strike);
    p.rho = rho;
    return p;
}

PayoffSpec PayoffSpec::custom(std::function<double(double, const Eigen::VectorXd&)> phi,
                              std::function<double(const Eigen::VectorXd&)> g) {
    PayoffSpec p;
    p.kind = Kind::custom;
    p.running_fn = std::move(phi);
    p.terminal_fn = std::move(g);
    return p;
}

void PayoffSpec::validate(int dim) const {
    if (dim < 1) throw ConfigError("payoff: dimension must be positive");
    switch (kind) {
        case Kind::symmetric_average:
            if (!std::isfinite(alpha)) throw ConfigError("payoff: alpha must be finite");
            break;
        case Kind::cfd:
            if (weights.size() != dim || strike.size() != dim) {
                throw ConfigError("payoff: cfd weights and strike must have dimension " + std::to_string(dim));
            }
            if (!weights.allFinite() || !strike.allFinite() || !std::isfinite(rho)) {
                throw ConfigError("payoff: cfd parameters must be finite");
            }
            if (std::abs(weights.sum() - 1.0) > 1e-9) throw ConfigError("payoff: cfd weights must sum to 1");
            break;
        case Kind::custom:
            if (!running_fn) throw ConfigError("payoff: custom payoff needs a running function");
            break;
    }
}

double PayoffSpec::running(double t, const Eigen::VectorXd& x) const {
    switch (kind) {
        case Kind::symmetric_average:
            return -alpha / static_cast<double>(x.size()) * x.sum();
        case Kind::cfd:
            return weights.dot(strike - x) * std::exp(-rho * t);
        case Kind::custom:
            return running_fn(t, x);
    }
    return 0.0;
}

double PayoffSpec::terminal(const Eigen::VectorXd& x) const {
    return zero_terminal() ? 0.0 : terminal_fn(x);
}

Eigen::VectorXd PayoffSpec::running_batch(double t, const Eigen::Ref<const Eigen::MatrixXd>& x) const {
    switch (kind) {
        case Kind::symmetric_average:
            return -alpha / static_cast<double>(x.cols()) * x.rowwise().sum();
        case Kind::cfd:
            return ((-x).rowwise() + strike.transpose()) * weights * std::exp(-rho * t);
        case Kind::custom:
            break;
    }
    Eigen::VectorXd out(x.rows());
    for (Eigen::Index j = 0; j < x.rows(); ++j) out[j] = running_fn(t, x.row(j).transpose());
    return out;
}

Eigen::VectorXd PayoffSpec::terminal_batch(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
    if (zero_terminal()) return Eigen::VectorXd::Zero(x.rows());
    Eigen::VectorXd out(x.rows());
    for (Eigen::Index j = 0; j < x.rows(); ++j) out[j] = terminal_fn(x.row(j).transpose());
    return out;
}

}  // namespace drbsde
