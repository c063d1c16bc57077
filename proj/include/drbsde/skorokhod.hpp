#pragma once

#include <limits>
#include <span>
#include <string>
#include <vector>

namespace drbsde {

// Sampled barriers alpha_k < beta_k of a two-sided Skorokhod problem.
struct BarrierPaths {
    std::vector<double> alpha;
    std::vector<double> beta;

    std::size_t size() const { return alpha.size(); }
    // ModelError unless shapes agree and min(beta - alpha) > tol.
    void validate(double tol = 1e-12) const;
};

inline constexpr int kNoHit = std::numeric_limits<int>::max();

// sup_{s<=t} [ (x_s - beta_s) ^ inf_{s<=r<=t} (x_r - alpha_r) ] over grid nodes.
double compute_H(std::span<const double> x, const BarrierPaths& b, int t);
// inf_{s<=t} [ (x_s - alpha_s) v sup_{s<=r<=t} (x_r - beta_r) ] over grid nodes.
double compute_L(std::span<const double> x, const BarrierPaths& b, int t);

struct FirstHits {
    int lower = kNoHit;  // first k with alpha_k - x_k >= 0
    int upper = kNoHit;  // first k with x_k - beta_k >= 0
};

FirstHits first_hit_times(std::span<const double> x, const BarrierPaths& b);

enum class XiMethod {
    direct,   // O(N^2): H and L evaluated from their definitions at every node
    running,  // O(N): H_t = max(min(H_{t-1}, x_t - alpha_t), x_t - beta_t), mirrored for L
};

// Net push Xi: zero before the first barrier hit, then H if the upper barrier
// is hit first and L if the lower one is.
std::vector<double> compute_xi(std::span<const double> x, const BarrierPaths& b, XiMethod method = XiMethod::running);

// y = x - Xi. Increments of Xi split by sign: a positive step pushes y down
// from beta (c grows), a negative step pushes y up from alpha (a grows).
struct ReflectedDecomposition {
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> a;
    std::vector<double> c;
    std::vector<double> xi;
    BarrierPaths barriers;
};

ReflectedDecomposition reconstruct_reflection(std::span<const double> x, const BarrierPaths& b,
                                              XiMethod method = XiMethod::running);

struct SkorokhodReport {
    bool pass = true;
    double confinement_violation = 0.0;  // max over k of (alpha - y)^+ and (y - beta)^+
    double monotonicity_violation = 0.0; // largest decrease of a or c
    int monotonicity_index = -1;
    double slackness_lower = 0.0;        // sum |y - alpha| da
    double slackness_upper = 0.0;        // sum |beta - y| dc
    double flatness_violation = 0.0;     // max |y - alpha| where da > 0, |beta - y| where dc > 0
    double identity_error = 0.0;         // max |y + Xi - x|
    double scale = 1.0;                  // max(1, max |x|)
    std::vector<std::string> failures;
};

// Confinement, monotonicity, flatness and complementary slackness; the sums and
// the identity are compared with tol * scale.
SkorokhodReport verify_skorokhod(const ReflectedDecomposition& dec, double tol);

// Driver of the reflected equation in reversed time s = T - t for a discrete
// value trajectory: x_k = Y_N + sum_{m=N-k}^{N-1} (Ytilde_m - Y_{m+1}), with
// barriers alpha_k = -f2(t_{N-k}), beta_k = f1(t_{N-k}). Reflecting x gives
// y_k = Y_{N-k}.
struct ReversedDriver {
    std::vector<double> x;
    BarrierPaths barriers;
};

ReversedDriver reversed_driver(std::span<const double> y_tilde, std::span<const double> y_hat,
                               std::span<const double> f1, std::span<const double> f2);

// Forward-time pushes A_n, C_n (n = 0..N, A_0 = C_0 = 0) from a reversed-time
// decomposition: A_{n+1} - A_n is the lower push applied at t_n.
struct ForwardPushes {
    std::vector<double> a;
    std::vector<double> c;
};

ForwardPushes forward_pushes(const ReflectedDecomposition& reversed);

}  // namespace drbsde
