#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace ddrm {

// Philox4x32-10 counter-based generator.
// Ref: Salmon et al., "Parallel random numbers: as easy as 1, 2, 3", SC 2011.
//
// Draws are addressed, not sequenced: every (stream, event) pair maps to an
// independent 128-bit counter block, so any parallel execution order yields
// identical values.
struct Philox4x32 {
    static constexpr std::uint32_t kM0 = 0xD2511F53u;
    static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kW0 = 0x9E3779B9u;
    static constexpr std::uint32_t kW1 = 0xBB67AE85u;

    static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                              std::array<std::uint32_t, 2> key) {
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
            key[0] += kW0;
            key[1] += kW1;
        }
        return ctr;
    }
};

// Keyed Gaussian source over (stream, event) addresses.  One address yields an
// independent standard-normal pair via Box-Muller; uniforms are built from 53
// high bits and offset by half an ulp so log() never sees zero.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed = 0) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::pair<double, double> normal_pair(std::uint64_t stream, std::uint64_t event) const {
        const auto r = Philox4x32::block(
            {static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
             static_cast<std::uint32_t>(event), static_cast<std::uint32_t>(event >> 32)},
            {static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)});
        const double u1 = to_unit(r[0], r[1]);
        const double u2 = to_unit(r[2], r[3]);
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        return {radius * std::cos(angle), radius * std::sin(angle)};
    }

private:
    static double to_unit(std::uint32_t lo, std::uint32_t hi) {
        const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
        return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
    }

    std::uint64_t seed_;
};

}  // namespace ddrm
