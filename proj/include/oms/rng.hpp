#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace oms {

/// Philox4x32-10 counter-based generator. Output is a
/// pure function of (key, counter), so any increment of any substream can be
/// regenerated independently and records are stable across versions.
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter generate(Counter ctr, Key key) {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kW0;
                key[1] += kW1;
            }
            const std::uint64_t p0 = std::uint64_t(kM0) * ctr[0];
            const std::uint64_t p1 = std::uint64_t(kM1) * ctr[2];
            const auto hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
            const auto hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
};

/// Standard normal variates addressed by (seed, channel, index).
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed)
        : key_{std::uint32_t(seed & 0xffffffffu), std::uint32_t(seed >> 32)} {}

    double operator()(std::uint32_t channel, std::uint64_t index) const {
        const auto x = Philox4x32::generate(
            {std::uint32_t(index & 0xffffffffu), std::uint32_t(index >> 32), channel, 0u}, key_);
        const double u1 = to_unit(x[0], x[1]);
        const double u2 = to_unit(x[2], x[3]);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Uniform variate in (0, 1) at the same address space, offset channel.
    double uniform(std::uint32_t channel, std::uint64_t index) const {
        const auto x = Philox4x32::generate(
            {std::uint32_t(index & 0xffffffffu), std::uint32_t(index >> 32), channel, 1u}, key_);
        return to_unit(x[0], x[1]);
    }

private:
    static double to_unit(std::uint32_t hi, std::uint32_t lo) {
        const std::uint64_t bits = ((std::uint64_t(hi) << 32) | lo) >> 11;
        return (double(bits) + 0.5) * 0x1.0p-53;
    }

    Philox4x32::Key key_;
};

/// Wiener increments on a fine grid. A step of size dt built from
/// `substeps` fine increments sums the same fine normals a run with dt /
/// substeps would draw one by one, so refined and coarse runs share a path.
class WienerSource {
public:
    WienerSource(std::uint64_t seed, int substeps = 1) : normals_(seed), substeps_(substeps < 1 ? 1 : substeps) {}

    double increment(std::uint32_t channel, std::uint64_t step, double dt) const {
        if (substeps_ == 1) return std::sqrt(dt) * normals_(channel, step);
        double acc = 0.0;
        const std::uint64_t base = step * std::uint64_t(substeps_);
        for (int l = 0; l < substeps_; ++l) acc += normals_(channel, base + std::uint64_t(l));
        return std::sqrt(dt / substeps_) * acc;
    }

    int substeps() const { return substeps_; }

private:
    NormalStream normals_;
    int substeps_;
};

} // namespace oms
