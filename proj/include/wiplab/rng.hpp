#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace wiplab {

/// SplitMix64 finalizer, used for hashing stream identifiers into keys.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept
{
    return mix64(a ^ (mix64(b) + 0x632BE59BD9B4E019ULL + (a << 6) + (a >> 2)));
}

/// FNV-1a; turns a role name into a stream tag.
constexpr std::uint64_t tag_of(std::string_view name) noexcept
{
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Philox4x32-10 block function (Salmon et al., SC'11).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) noexcept
{
    constexpr std::uint32_t M0 = 0xD2511F53U;
    constexpr std::uint32_t M1 = 0xCD9E8D57U;
    constexpr std::uint32_t W0 = 0x9E3779B9U;
    constexpr std::uint32_t W1 = 0xBB67AE85U;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = std::uint64_t{M0} * ctr[0];
        const std::uint64_t p1 = std::uint64_t{M1} * ctr[2];
        ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
               static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
        key[0] += W0;
        key[1] += W1;
    }
    return ctr;
}

/**
 * Counter-based random stream.
 *
 * A stream is identified by (master seed, tag, index). Its output is a pure
 * function of that triple and the position in the stream, so any worker can
 * regenerate any stream without coordination.
 */
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) noexcept
        : index_(index)
    {
        const std::uint64_t k = hash_combine(seed, tag);
        key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
    }

    explicit RandomStream(std::uint64_t seed) noexcept : RandomStream(seed, 0, 0) {}

    /// Child stream with a derived tag; independent of this stream's position.
    [[nodiscard]] RandomStream split(std::uint64_t tag, std::uint64_t index) const noexcept
    {
        const std::uint64_t parent = (std::uint64_t{key_[1]} << 32) | key_[0];
        return RandomStream(hash_combine(parent, index_), tag, index);
    }

    std::uint64_t next_u64() noexcept
    {
        if (lane_ == 2) {
            refill();
        }
        return buffer_[lane_++];
    }

    /// Uniform on [0,1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on (0,1).
    double uniform_open() noexcept { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    /// Standard normal via Box-Muller (cosine branch only, two uniforms per draw).
    double normal() noexcept
    {
        const double u1 = uniform_open();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    [[nodiscard]] std::uint64_t position() const noexcept { return counter_ * 2 - (2 - lane_); }

private:
    void refill() noexcept
    {
        const auto out = philox4x32({static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                                     static_cast<std::uint32_t>(index_), static_cast<std::uint32_t>(index_ >> 32)},
                                    key_);
        buffer_[0] = (std::uint64_t{out[1]} << 32) | out[0];
        buffer_[1] = (std::uint64_t{out[3]} << 32) | out[2];
        ++counter_;
        lane_ = 0;
    }

    std::array<std::uint32_t, 2> key_{};
    std::uint64_t index_ = 0;
    std::uint64_t counter_ = 0;
    std::array<std::uint64_t, 2> buffer_{};
    int lane_ = 2;
};

} // namespace wiplab
