#include "drbsde/rng.hpp"

#include <cmath>
#include <numbers>

namespace drbsde {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

inline double to_open_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace

Philox::Counter Philox::operator()(Counter c) const noexcept {
    std::uint32_t k0 = key_[0];
    std::uint32_t k1 = key_[1];
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, c[0], hi0, lo0);
        mulhilo(kMul1, c[2], hi1, lo1);
        c = {hi1 ^ c[1] ^ k0, lo1, hi0 ^ c[3] ^ k1, lo0};
        k0 += kWeyl0;
        k1 += kWeyl1;
    }
    return c;
}

std::array<double, 2> Philox::uniform_pair(std::uint64_t a, std::uint64_t b) const noexcept {
    const Counter out = (*this)({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                                 static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)});
    return {to_open_unit(out[0], out[1]), to_open_unit(out[2], out[3])};
}

std::array<double, 2> Philox::normal_pair(std::uint64_t a, std::uint64_t b) const noexcept {
    const auto [u1, u2] = uniform_pair(a, b);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(theta), r * std::sin(theta)};
}

void Philox::fill_normals(std::uint64_t stream, std::uint64_t step, std::span<double> out) const noexcept {
    // Counter word b packs (step, pair index); 2^32 pairs per step is plenty.
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; i += 2) {
        const auto z = normal_pair(stream, (step << 32) | (i / 2));
        out[i] = z[0];
        if (i + 1 < n) out[i + 1] = z[1];
    }
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
    return splitmix64(splitmix64(seed) ^ splitmix64(tag + 0x5851F42D4C957F2DULL));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) noexcept {
    return splitmix64(derive_seed(seed, tag) ^ splitmix64(index + 0x14057B7EF767814FULL));
}

}  // namespace drbsde
