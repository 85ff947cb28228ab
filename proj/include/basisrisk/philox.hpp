#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace basisrisk {

/// Philox4x32-10 counter-based generator (Salmon et al. 2011). Output is a
/// pure function of (counter, key), which makes per-path streams independent
/// of generation order.
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter generate(Counter ctr, Key key) {
        for (int round = 0; round < 10; ++round) {
            ctr = single_round(ctr, key);
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static Counter single_round(const Counter& c, const Key& k) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
};

/// Standard normal stream for one (seed, stream id) pair; draws are addressed
/// by (step, slot) so any entry can be regenerated without replaying the stream.
class NormalStream {
public:
    NormalStream(std::uint64_t seed, std::uint64_t stream)
        : key_{static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)},
          seed_lo_(static_cast<std::uint32_t>(seed)),
          seed_hi_(static_cast<std::uint32_t>(seed >> 32)) {}

    /// Two independent N(0,1) draws for (step, pair) via Box-Muller.
    std::array<double, 2> pair(std::uint32_t step, std::uint32_t pair_index) const {
        const auto out = Philox4x32::generate({step, pair_index, seed_lo_, seed_hi_}, key_);
        const double u1 = to_unit(out[0], out[1]);
        const double u2 = to_unit(out[2], out[3]);
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        return {radius * std::cos(angle), radius * std::sin(angle)};
    }

    double normal(std::uint32_t step, std::uint32_t slot) const { return pair(step, slot / 2)[slot % 2]; }

private:
    // (0, 1) open interval, 53-bit resolution.
    static double to_unit(std::uint32_t a, std::uint32_t b) {
        const std::uint64_t bits = ((static_cast<std::uint64_t>(a) << 32) | b) >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    Philox4x32::Key key_;
    std::uint32_t seed_lo_;
    std::uint32_t seed_hi_;
};

}  // namespace basisrisk
