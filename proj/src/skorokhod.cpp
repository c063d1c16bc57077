#include "drbsde/skorokhod.hpp"

#include "drbsde/error.hpp"

#include <algorithm>
#include <cmath>

namespace drbsde {

namespace {

void check_index(std::span<const double> x, const BarrierPaths& b, int t) {
    if (x.size() != b.size()) throw ContractError("skorokhod: path and barriers differ in length");
    if (t < 0 || static_cast<std::size_t>(t) >= x.size()) throw ContractError("skorokhod: time index out of range");
}

}  // namespace

void BarrierPaths::validate(double tol) const {
    if (alpha.size() != beta.size() || alpha.empty()) throw ModelError("skorokhod: barrier paths malformed");
    for (std::size_t k = 0; k < alpha.size(); ++k) {
        if (!(beta[k] - alpha[k] > tol)) {
            throw ModelError("skorokhod: barrier gap vanishes at node " + std::to_string(k));
        }
    }
}

double compute_H(std::span<const double> x, const BarrierPaths& b, int t) {
    check_index(x, b, t);
    double best = -INFINITY;
    double inner = INFINITY;
    for (int s = t; s >= 0; --s) {
        const auto i = static_cast<std::size_t>(s);
        inner = std::min(inner, x[i] - b.alpha[i]);
        best = std::max(best, std::min(x[i] - b.beta[i], inner));
    }
    return best;
}

double compute_L(std::span<const double> x, const BarrierPaths& b, int t) {
    check_index(x, b, t);
    double best = INFINITY;
    double inner = -INFINITY;
    for (int s = t; s >= 0; --s) {
        const auto i = static_cast<std::size_t>(s);
        inner = std::max(inner, x[i] - b.beta[i]);
        best = std::min(best, std::max(x[i] - b.alpha[i], inner));
    }
    return best;
}

FirstHits first_hit_times(std::span<const double> x, const BarrierPaths& b) {
    if (x.size() != b.size()) throw ContractError("skorokhod: path and barriers differ in length");
    FirstHits h;
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (h.lower == kNoHit && b.alpha[k] - x[k] >= 0.0) h.lower = static_cast<int>(k);
        if (h.upper == kNoHit && x[k] - b.beta[k] >= 0.0) h.upper = static_cast<int>(k);
    }
    return h;
}

std::vector<double> compute_xi(std::span<const double> x, const BarrierPaths& b, XiMethod method) {
    if (x.size() != b.size()) throw ContractError("skorokhod: path and barriers differ in length");
    const int n = static_cast<int>(x.size());
    std::vector<double> xi(x.size(), 0.0);
    const FirstHits hits = first_hit_times(x, b);
    if (hits.lower == hits.upper) return xi;  // never hit (both cannot hit at once while alpha < beta)
    const bool upper_first = hits.upper < hits.lower;
    const int start = upper_first ? hits.upper : hits.lower;

    if (method == XiMethod::direct) {
        for (int k = start; k < n; ++k) {
            xi[static_cast<std::size_t>(k)] = upper_first ? compute_H(x, b, k) : compute_L(x, b, k);
        }
        return xi;
    }
    double h = -INFINITY;
    double l = INFINITY;
    for (int k = 0; k < n; ++k) {
        const auto i = static_cast<std::size_t>(k);
        const double lo = x[i] - b.alpha[i];
        const double hi = x[i] - b.beta[i];
        h = std::max(std::min(h, lo), hi);
        l = std::min(std::max(l, hi), lo);
        if (k >= start) xi[i] = upper_first ? h : l;
    }
    return xi;
}

ReflectedDecomposition reconstruct_reflection(std::span<const double> x, const BarrierPaths& b, XiMethod method) {
    b.validate();
    if (x.size() != b.size()) throw ContractError("skorokhod: path and barriers differ in length");
    ReflectedDecomposition dec;
    dec.x.assign(x.begin(), x.end());
    dec.barriers = b;
    dec.xi = compute_xi(x, b, method);
    const std::size_t n = x.size();
    double scale = 1.0;
    for (const double v : x) scale = std::max(scale, std::abs(v));
    dec.y.resize(n);
    dec.a.resize(n);
    dec.c.resize(n);
    double prev_xi = 0.0;
    double a = 0.0;
    double c = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        double y = x[k] - dec.xi[k];
        // x - (x - beta) can miss beta by an ulp; snap rounding-level excursions.
        if (y > b.beta[k] && y - b.beta[k] <= 1e-12 * scale) y = b.beta[k];
        if (y < b.alpha[k] && b.alpha[k] - y <= 1e-12 * scale) y = b.alpha[k];
        dec.y[k] = y;
        const double step = dec.xi[k] - prev_xi;
        if (step > 0.0) c += step;
        if (step < 0.0) a -= step;
        dec.a[k] = a;
        dec.c[k] = c;
        prev_xi = dec.xi[k];
    }
    return dec;
}

SkorokhodReport verify_skorokhod(const ReflectedDecomposition& dec, double tol) {
    SkorokhodReport r;
    const std::size_t n = dec.y.size();
    if (dec.x.size() != n || dec.a.size() != n || dec.c.size() != n || dec.xi.size() != n || dec.barriers.size() != n) {
        r.pass = false;
        r.failures.emplace_back("decomposition arrays differ in length");
        return r;
    }
    for (const double v : dec.x) r.scale = std::max(r.scale, std::abs(v));
    for (std::size_t k = 0; k < n; ++k) {
        const double lo = dec.barriers.alpha[k];
        const double hi = dec.barriers.beta[k];
        const double y = dec.y[k];
        r.confinement_violation = std::max({r.confinement_violation, lo - y, y - hi});
        const double da = dec.a[k] - (k == 0 ? 0.0 : dec.a[k - 1]);
        const double dc = dec.c[k] - (k == 0 ? 0.0 : dec.c[k - 1]);
        for (const double step : {da, dc}) {
            if (-step > r.monotonicity_violation) {
                r.monotonicity_violation = -step;
                r.monotonicity_index = static_cast<int>(k);
            }
        }
        if (da > 0.0) {
            r.slackness_lower += std::abs(y - lo) * da;
            r.flatness_violation = std::max(r.flatness_violation, std::abs(y - lo));
        }
        if (dc > 0.0) {
            r.slackness_upper += std::abs(hi - y) * dc;
            r.flatness_violation = std::max(r.flatness_violation, std::abs(hi - y));
        }
        r.identity_error = std::max(r.identity_error, std::abs(y + dec.xi[k] - dec.x[k]));
    }
    if (r.confinement_violation > tol) r.failures.push_back("y leaves [alpha, beta]");
    if (r.monotonicity_violation > tol) {
        r.failures.push_back("push process decreases at node " + std::to_string(r.monotonicity_index));
    }
    if (r.flatness_violation > tol) r.failures.push_back("push grows away from its barrier");
    if (r.slackness_lower > tol * r.scale) r.failures.push_back("lower complementary slackness");
    if (r.slackness_upper > tol * r.scale) r.failures.push_back("upper complementary slackness");
    if (r.identity_error > tol * r.scale) r.failures.push_back("y + Xi != x");
    r.pass = r.failures.empty();
    return r;
}

ReversedDriver reversed_driver(std::span<const double> y_tilde, std::span<const double> y_hat,
                               std::span<const double> f1, std::span<const double> f2) {
    const std::size_t N = y_tilde.size();
    if (y_hat.size() != N + 1 || f1.size() != N + 1 || f2.size() != N + 1) {
        throw ContractError("reversed_driver: expected N values of Ytilde and N+1 of Yhat, f1, f2");
    }
    ReversedDriver d;
    d.x.resize(N + 1);
    d.barriers.alpha.resize(N + 1);
    d.barriers.beta.resize(N + 1);
    double acc = y_hat[N];
    d.x[0] = acc;
    for (std::size_t k = 1; k <= N; ++k) {
        const std::size_t m = N - k;
        acc += y_tilde[m] - y_hat[m + 1];
        d.x[k] = acc;
    }
    for (std::size_t k = 0; k <= N; ++k) {
        d.barriers.alpha[k] = -f2[N - k];
        d.barriers.beta[k] = f1[N - k];
    }
    return d;
}

ForwardPushes forward_pushes(const ReflectedDecomposition& reversed) {
    const std::size_t n = reversed.a.size();
    if (n == 0) return {};
    const std::size_t N = n - 1;
    ForwardPushes f;
    f.a.resize(n);
    f.c.resize(n);
    for (std::size_t m = 0; m <= N; ++m) {
        f.a[m] = reversed.a[N] - reversed.a[N - m];
        f.c[m] = reversed.c[N] - reversed.c[N - m];
    }
    return f;
}

}  // namespace drbsde
