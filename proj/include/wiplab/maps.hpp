#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wiplab/error.hpp"
#include "wiplab/rng.hpp"
#include "wiplab/stats.hpp"

namespace wiplab {

enum class MapKind { Doubling, Gauss, LSV };

/**
 * A deterministic map of the unit interval with a known (or sampled)
 * absolutely continuous invariant probability measure.
 *
 * The intermittent family has a neutral fixed point at 0:
 *   T(x) = x (1 + (2x)^gamma)   on [0, 1/2)
 *   T(x) = 2x - 1               on [1/2, 1]
 */
class MapModel {
public:
    static MapModel doubling() { return MapModel(MapKind::Doubling, 0.0, "doubling"); }
    static MapModel gauss() { return MapModel(MapKind::Gauss, 0.0, "gauss"); }

    /// gamma in (0,1). Rate experiments additionally require gamma < 1/2; that is
    /// checked where the rate formulas are used, not here.
    static MapModel lsv(double gamma)
    {
        if (!(gamma > 0.0 && gamma < 1.0)) {
            throw Error(ErrorCode::RangeError, "LSV gamma must lie in (0,1), got " + std::to_string(gamma));
        }
        return MapModel(MapKind::LSV, gamma, "lsv(" + std::to_string(gamma) + ")");
    }

    [[nodiscard]] MapKind kind() const noexcept { return kind_; }
    [[nodiscard]] double gamma() const noexcept { return gamma_; }
    [[nodiscard]] const std::string& label() const noexcept { return label_; }

    /// 2^gamma, cached for the left LSV branch.
    [[nodiscard]] double lsv_scale() const noexcept { return scale_; }

private:
    MapModel(MapKind kind, double gamma, std::string label)
        : kind_(kind), gamma_(gamma), scale_(std::exp2(gamma)), label_(std::move(label))
    {
    }

    MapKind kind_;
    double gamma_;
    double scale_;
    std::string label_;
};

inline double lsv_left_branch(double x, double gamma, double scale) noexcept
{
    return x * (1.0 + scale * std::pow(x, gamma));
}

inline double step(const MapModel& map, double x) noexcept
{
    switch (map.kind()) {
    case MapKind::Doubling: {
        const double y = 2.0 * x;
        return y - std::floor(y);
    }
    case MapKind::Gauss: {
        if (x <= 0.0) {
            return 0.0;
        }
        const double y = 1.0 / x;
        return y - std::floor(y);
    }
    case MapKind::LSV:
        if (x < 0.5) {
            return std::min(1.0, lsv_left_branch(x, map.gamma(), map.lsv_scale()));
        }
        return 2.0 * x - 1.0;
    }
    return x;
}

struct OrbitBuffer {
    double initial = 0.0;
    std::vector<double> values;

    [[nodiscard]] std::size_t length() const noexcept { return values.size(); }
};

/// Largest orbit that orbit() will materialize; longer requests must stream.
inline constexpr std::size_t default_orbit_budget = std::size_t{1} << 26;

/// Streaming orbit: calls visit(j, x_j) for j = 0..n-1 with x_0 = x0.
template <class Visitor>
void for_each_iterate(const MapModel& map, double x0, std::size_t n, Visitor&& visit)
{
    double x = x0;
    for (std::size_t j = 0; j < n; ++j) {
        visit(j, x);
        x = step(map, x);
    }
}

inline OrbitBuffer orbit(const MapModel& map, double x0, std::size_t n, std::size_t budget = default_orbit_budget)
{
    if (n == 0) {
        throw Error(ErrorCode::LengthError, "orbit length must be positive");
    }
    if (n > budget) {
        throw Error(ErrorCode::ResourceLimit,
                    "orbit length " + std::to_string(n) + " exceeds budget " + std::to_string(budget) +
                        "; use for_each_iterate");
    }
    OrbitBuffer out{x0, {}};
    out.values.reserve(n);
    for_each_iterate(map, x0, n, [&](std::size_t, double x) { out.values.push_back(x); });
    return out;
}

inline constexpr double gauss_floor = 1e-15;
inline constexpr std::size_t default_lsv_burn_in = 1000;

/// Inverse invariant CDF for maps where it is explicit (Doubling, Gauss).
inline double invariant_from_uniform(const MapModel& map, double u)
{
    switch (map.kind()) {
    case MapKind::Doubling: return u;
    case MapKind::Gauss: return std::expm1(u * std::numbers::ln2);
    case MapKind::LSV: break;
    }
    throw Error(ErrorCode::RangeError, "no closed-form invariant CDF for " + map.label());
}

/// Gauss invariant density 1/((1+x) ln 2).
inline double gauss_density(double x) noexcept { return 1.0 / ((1.0 + x) * std::numbers::ln2); }

/**
 * Draws a point distributed according to the invariant measure.
 * Exact for Doubling and Gauss; for LSV a uniform start is pushed through
 * `burn_in` iterates, which is only approximately invariant.
 */
inline double sample_invariant(const MapModel& map, RandomStream& rng, std::size_t burn_in = default_lsv_burn_in)
{
    switch (map.kind()) {
    case MapKind::Doubling: return rng.uniform();
    case MapKind::Gauss: {
        double x = 0.0;
        do {
            x = invariant_from_uniform(map, rng.uniform());
        } while (x < gauss_floor);
        return x;
    }
    case MapKind::LSV: {
        for (;;) {
            double x = rng.uniform_open();
            for (std::size_t i = 0; i < burn_in; ++i) {
                x = step(map, x);
            }
            // exact 0 is the absorbing neutral fixed point, reachable only through x = 1/2
            if (x > 0.0) {
                return x;
            }
        }
    }
    }
    return 0.0;
}

/**
 * Long orbits started from the invariant measure, protected against the
 * finite-precision degeneracies of each map.
 *
 * Doubling: the state is a 64-bit fixed-point word and each step shifts in a
 * fresh random low bit, so x_{j+1} - frac(2 x_j) is 0 or 2^-53. This is the
 * exact doubling orbit of a uniformly random real start, truncated to 53 bits,
 * and never collapses to 0.
 * Gauss: the orbit restarts from a fresh invariant sample if it falls below
 * 1e-15 (where 1/x carries no fractional information).
 * LSV: restarts if the orbit lands exactly on the absorbing point 0.
 */
class InvariantOrbit {
public:
    InvariantOrbit(const MapModel& map, RandomStream rng, std::size_t burn_in = default_lsv_burn_in)
        : map_(map), rng_(rng), burn_in_(burn_in)
    {
        if (map_.kind() == MapKind::Doubling) {
            state_ = rng_.next_u64();
            x_ = static_cast<double>(state_ >> 11) * 0x1.0p-53;
        } else {
            x_ = sample_invariant(map_, rng_, burn_in_);
        }
    }

    [[nodiscard]] double current() const noexcept { return x_; }

    double advance()
    {
        switch (map_.kind()) {
        case MapKind::Doubling:
            if (bits_left_ == 0) {
                fresh_ = rng_.next_u64();
                bits_left_ = 64;
            }
            state_ = (state_ << 1) | (fresh_ & 1U);
            fresh_ >>= 1;
            --bits_left_;
            x_ = static_cast<double>(state_ >> 11) * 0x1.0p-53;
            break;
        case MapKind::Gauss:
            x_ = step(map_, x_);
            if (x_ < gauss_floor) {
                x_ = sample_invariant(map_, rng_, burn_in_);
                ++restarts_;
            }
            break;
        case MapKind::LSV:
            x_ = step(map_, x_);
            if (x_ <= 0.0) {
                x_ = sample_invariant(map_, rng_, burn_in_);
                ++restarts_;
            }
            break;
        }
        return x_;
    }

    /// Fills out[0..n) with x_0, x_1, ... starting from the current point.
    void fill(std::span<double> out)
    {
        for (std::size_t j = 0; j < out.size(); ++j) {
            out[j] = x_;
            if (j + 1 < out.size()) {
                advance();
            }
        }
    }

    [[nodiscard]] std::size_t restarts() const noexcept { return restarts_; }

private:
    MapModel map_;
    RandomStream rng_;
    std::size_t burn_in_;
    double x_ = 0.0;
    std::uint64_t state_ = 0;
    std::uint64_t fresh_ = 0;
    int bits_left_ = 0;
    std::size_t restarts_ = 0;
};

/// Convenience: orbit of length n from an invariant start.
inline std::vector<double> invariant_orbit(const MapModel& map, RandomStream rng, std::size_t n)
{
    std::vector<double> out(n);
    InvariantOrbit gen(map, rng);
    gen.fill(out);
    return out;
}

struct ReturnTimeSample {
    double start = 0.0;
    std::uint64_t tau = 0;
    std::vector<double> itinerary; ///< T^1(start) .. T^tau(start), only if requested

    [[nodiscard]] bool itinerary_recorded() const noexcept { return !itinerary.empty(); }
};

inline constexpr std::uint64_t default_return_cap = 100'000'000;

inline bool in_inducing_set(double x) noexcept { return x >= 0.5; }

/// Smallest l >= 0 with T^l(x) in [1/2,1], or nullopt if l would exceed cap.
inline std::optional<std::uint64_t> first_entry_time(const MapModel& map, double x, std::uint64_t cap)
{
    for (std::uint64_t l = 0; l <= cap; ++l) {
        if (in_inducing_set(x)) {
            return l;
        }
        x = step(map, x);
    }
    return std::nullopt;
}

/// First return time of y in Y = [1/2,1] to Y.
inline ReturnTimeSample return_time(const MapModel& map, double y, std::uint64_t cap = default_return_cap,
                                    bool record_itinerary = false)
{
    if (!(y >= 0.5 && y <= 1.0)) {
        throw Error(ErrorCode::RangeError, "return_time start must lie in [1/2,1]");
    }
    if (cap == 0) {
        throw Error(ErrorCode::RangeError, "return_time cap must be positive");
    }
    ReturnTimeSample out{y, 0, {}};
    double x = y;
    for (std::uint64_t l = 1; l <= cap; ++l) {
        x = step(map, x);
        if (record_itinerary) {
            out.itinerary.push_back(x);
        }
        if (in_inducing_set(x)) {
            out.tau = l;
            return out;
        }
    }
    throw Error(ErrorCode::CapExceeded, "no return to [1/2,1] within " + std::to_string(cap) + " steps");
}

struct OrderBound {
    bool unbounded = false;
    double p_max = std::numeric_limits<double>::infinity();
    bool attained = false; ///< false: p_max is a strict supremum

    /// Whether an order p is admissible, i.e. p < p_max (or anything if unbounded).
    [[nodiscard]] bool admits(double p) const noexcept { return unbounded || p < p_max; }
};

inline OrderBound order_of(const MapModel& map) noexcept
{
    if (map.kind() == MapKind::LSV) {
        return OrderBound{false, 1.0 / map.gamma(), false};
    }
    return OrderBound{true};
}

struct TailPoint {
    std::uint64_t n = 0;
    double probability = 0.0;
    double std_error = 0.0;
};

struct ReturnTailEstimate {
    std::vector<TailPoint> points;
    double slope = 0.0;
    double r2 = 0.0;
    std::size_t samples = 0;
};

/**
 * Estimates P(tau > n) for the first return to Y = [1/2,1] on a log-spaced
 * grid of n, and the log-log slope of the tail.
 *
 * Starts y are uniform on Y. Writing u = T(y) = 2y - 1, the event tau > n
 * only happens for tiny u, so u is drawn from the defensive mixture
 * 1/2 Uniform(0,1) + 1/2 LogUniform(u_min, 1) and each sample is reweighted
 * by 1/q(u). The estimate is unbiased for the uniform law on Y; the tail
 * exponent does not depend on the (bounded, continuous) density on Y.
 */
inline ReturnTailEstimate return_time_tail(const MapModel& map, std::uint64_t n_lo, std::uint64_t n_hi,
                                           std::size_t grid_points, std::size_t samples, RandomStream rng)
{
    if (map.kind() != MapKind::LSV) {
        throw Error(ErrorCode::RangeError, "return-time tails are defined for the LSV inducing scheme");
    }
    if (n_lo < 1 || n_hi <= n_lo || grid_points < 3 || samples == 0) {
        throw Error(ErrorCode::RangeError, "invalid tail grid");
    }
    std::vector<std::uint64_t> grid;
    for (std::size_t i = 0; i < grid_points; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(grid_points - 1);
        const auto n = static_cast<std::uint64_t>(
            std::llround(std::exp(std::log(double(n_lo)) * (1.0 - t) + std::log(double(n_hi)) * t)));
        if (grid.empty() || n > grid.back()) {
            grid.push_back(n);
        }
    }
    const double g = map.gamma();
    // continuum approximation of the first-cell threshold at n_hi, with two decades of margin
    const double u_min = 0.5 * std::pow(1.0 + g * double(n_hi), -1.0 / g) * 1e-2;
    const double log_range = -std::log(u_min);

    std::vector<RunningStats> acc(grid.size());
    for (std::size_t s = 0; s < samples; ++s) {
        double u = 0.0;
        if (rng.uniform() < 0.5) {
            u = rng.uniform_open();
        } else {
            u = std::exp(-log_range * rng.uniform());
        }
        const double q = 0.5 + (u >= u_min ? 0.5 / (u * log_range) : 0.0);
        const double weight = 1.0 / q;
        // tau(y) = 1 + first entry time of T(y) = u
        const auto entry = first_entry_time(map, u, n_hi);
        const std::uint64_t tau = entry ? 1 + *entry : n_hi + 1;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            acc[i].push(tau > grid[i] ? weight : 0.0);
        }
    }

    ReturnTailEstimate out;
    out.samples = samples;
    std::vector<double> lx;
    std::vector<double> ly;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        out.points.push_back({grid[i], acc[i].mean(), acc[i].std_error()});
        if (acc[i].mean() > 0.0) {
            lx.push_back(std::log(double(grid[i])));
            ly.push_back(std::log(acc[i].mean()));
        }
    }
    const LineFit fit = least_squares(lx, ly);
    out.slope = fit.slope;
    out.r2 = fit.r2;
    return out;
}

} // namespace wiplab
