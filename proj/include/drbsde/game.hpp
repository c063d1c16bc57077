#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>

namespace drbsde {

// Early-exit penalties. Player 1 stops when the value reaches the upper
// barrier f1 and pays f1; Player 2 stops at the lower barrier -f2.
struct BarrierSpec {
    enum class Kind { constant, exp_decay };

    Kind kind = Kind::constant;
    double gamma_upper = 0.5;  // gamma_1
    double gamma_lower = 0.5;  // gamma_2
    double rho = 0.0;          // decay rate, exp_decay only

    static BarrierSpec constant(double upper, double lower);
    static BarrierSpec exp_decay(double gamma1, double gamma2, double rho);

    // Both variants are state independent.
    double f1(double t) const;
    double f2(double t) const;
    double upper(double t) const { return f1(t); }
    double lower(double t) const { return -f2(t); }

    // ModelError unless -f2 < f1 on [0, horizon] and the parameters are valid.
    void validate(double horizon) const;
    std::string describe() const;
};

// Running payoff phi(t, x) and terminal payoff g(x).
struct PayoffSpec {
    enum class Kind { symmetric_average, cfd, custom };

    Kind kind = Kind::symmetric_average;
    double alpha = 10.0;          // symmetric_average: phi = -(alpha / d) sum_k x_k
    Eigen::VectorXd weights;      // cfd: phi = <w, K - x> e^{-rho t}
    Eigen::VectorXd strike;
    double rho = 0.0;
    std::function<double(double, const Eigen::VectorXd&)> running_fn;  // custom
    std::function<double(const Eigen::VectorXd&)> terminal_fn;         // custom, empty means g = 0

    static PayoffSpec symmetric_average(double alpha);
    static PayoffSpec cfd(Eigen::VectorXd weights, Eigen::VectorXd strike, double rho);
    static PayoffSpec custom(std::function<double(double, const Eigen::VectorXd&)> phi,
                             std::function<double(const Eigen::VectorXd&)> g);

    // Checks dimensions against d; cfd weights must sum to 1.
    void validate(int dim) const;

    double running(double t, const Eigen::VectorXd& x) const;
    double terminal(const Eigen::VectorXd& x) const;
    // Row-wise over a batch (M x d).
    Eigen::VectorXd running_batch(double t, const Eigen::Ref<const Eigen::MatrixXd>& x) const;
    Eigen::VectorXd terminal_batch(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
    // True when g is identically zero (both built-in variants).
    bool zero_terminal() const { return kind != Kind::custom || !terminal_fn; }
};

}  // namespace drbsde
