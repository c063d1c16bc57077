#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace drbsde {

// Philox4x32-10 counter-based generator. A draw is a pure function of
// (key, counter), so simulated paths do not depend on batch layout or on the
// order in which threads visit them.
class Philox {
public:
    using Counter = std::array<std::uint32_t, 4>;

    explicit Philox(std::uint64_t key) noexcept
        : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)} {}

    Counter operator()(Counter ctr) const noexcept;

    // Two independent uniforms in (0, 1) with 53-bit resolution.
    std::array<double, 2> uniform_pair(std::uint64_t a, std::uint64_t b) const noexcept;

    // Two independent standard normals via Box-Muller.
    std::array<double, 2> normal_pair(std::uint64_t a, std::uint64_t b) const noexcept;

    // Fills `out` with standard normals indexed by (stream, step, i).
    void fill_normals(std::uint64_t stream, std::uint64_t step, std::span<double> out) const noexcept;

private:
    std::array<std::uint32_t, 2> key_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Independent sub-seed for a named purpose ("training batch of stage n",
// "evaluation paths", ...).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept;
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) noexcept;

namespace seed_tags {
inline constexpr std::uint64_t paths = 0x70617468ULL;
inline constexpr std::uint64_t init = 0x696e6974ULL;
inline constexpr std::uint64_t train = 0x7472616eULL;
inline constexpr std::uint64_t eval = 0x6576616cULL;
inline constexpr std::uint64_t retrain = 0x72657472ULL;
inline constexpr std::uint64_t strike = 0x7374726bULL;
inline constexpr std::uint64_t kappa = 0x6b617070ULL;
}  // namespace seed_tags

}  // namespace drbsde
