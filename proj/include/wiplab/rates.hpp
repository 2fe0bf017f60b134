#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wiplab/error.hpp"
#include "wiplab/stats.hpp"

namespace wiplab {

inline void require_order_above_two(double p)
{
    if (!(p > 2.0)) {
        throw Error(ErrorCode::RangeError, "rate formulas need p > 2");
    }
}

/// WIP exponent (p-2)/(4p); sup over p is 1/4.
inline double r_wip(double p)
{
    require_order_above_two(p);
    return (p - 2.0) / (4.0 * p);
}

inline constexpr double r_wip_supremum = 0.25;

/// Exponent in the lambda_1 estimate, piecewise in p with breaks at 7/2 and 4.
inline double r1_wip(double p)
{
    require_order_above_two(p);
    if (p <= 3.5) {
        return (p - 2.0) / (2.0 * p + 2.0);
    }
    if (p < 4.0) {
        return (p - 2.0) / (4.0 * p - 5.0);
    }
    return (p - 2.0) / (4.0 * p - 6.0);
}

/// p* = (11 + sqrt 73) / 4, where the two homogenization branches meet.
inline double p_star() { return (11.0 + std::sqrt(73.0)) / 4.0; }

/// gamma* = (11 - sqrt 73) / 12, the LSV parameter with 1/gamma* = p*.
inline double gamma_star() { return (11.0 - std::sqrt(73.0)) / 12.0; }

struct HomogRate {
    double exponent = 0.0;
    double log_power = 0.0; ///< power of (-log eps)
};

inline double r_homog_low(double p) { return (p - 2.0) / (2.0 * p); }
inline double r_homog_high(double p) { return (2.0 * p - 2.0) / (3.0 * (2.0 * p - 1.0)); }

inline HomogRate r_homog(double p)
{
    require_order_above_two(p);
    if (p <= p_star()) {
        return {r_homog_low(p), 0.0};
    }
    return {r_homog_high(p), 0.5 * (p - 1.0)};
}

struct LsvRates {
    double wip = 0.0;
    double homog = 0.0;
    bool homog_log_free = true;
};

inline double lsv_homog_large_gamma(double gamma) { return 0.5 * (1.0 - 2.0 * gamma); }
inline double lsv_homog_small_gamma(double gamma) { return (2.0 - 2.0 * gamma) / (3.0 * (2.0 - gamma)); }

/// Exponents for the LSV family, expressed through p = 1/gamma.
inline LsvRates lsv_rates(double gamma)
{
    if (!(gamma > 0.0 && gamma < 0.5)) {
        throw Error(ErrorCode::RangeError, "LSV rates need gamma in (0, 1/2)");
    }
    LsvRates out;
    out.wip = 0.25 * (1.0 - 2.0 * gamma);
    if (gamma >= gamma_star()) {
        out.homog = lsv_homog_large_gamma(gamma);
        out.homog_log_free = true;
    } else {
        out.homog = lsv_homog_small_gamma(gamma);
        out.homog_log_free = false;
    }
    return out;
}

struct RateFit {
    std::vector<std::pair<double, double>> pairs; ///< (scale, distance) used in the fit
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    std::size_t dropped = 0; ///< zero distances left out
    std::optional<double> log_coefficient; ///< coefficient of log(-log eps) in the joint fit
};

/// OLS of log distance on log scale. Zero distances are dropped and counted.
inline RateFit fit_rate(std::span<const std::pair<double, double>> pairs)
{
    RateFit out;
    for (const auto& [scale, dist] : pairs) {
        if (!(scale > 0.0)) {
            throw Error(ErrorCode::NonPositive, "scales must be positive");
        }
        if (dist < 0.0 || std::isnan(dist)) {
            throw Error(ErrorCode::NonPositive, "distances must be nonnegative");
        }
        if (dist == 0.0) {
            ++out.dropped;
            continue;
        }
        out.pairs.emplace_back(scale, dist);
    }
    if (out.pairs.size() < 3) {
        throw Error(ErrorCode::InsufficientData, "rate fit needs at least 3 positive distances");
    }
    std::vector<double> x;
    std::vector<double> y;
    for (const auto& [scale, dist] : out.pairs) {
        x.push_back(std::log(scale));
        y.push_back(std::log(dist));
    }
    const LineFit line = least_squares(x, y);
    out.slope = line.slope;
    out.intercept = line.intercept;
    out.r2 = line.r2;
    return out;
}

/**
 * Joint fit log d = a + s log eps + c log(-log eps), used above p* when at
 * least six scales (all eps < 1) are available; otherwise plain fit_rate.
 */
inline RateFit fit_rate_with_log(std::span<const std::pair<double, double>> pairs)
{
    RateFit out = fit_rate(pairs);
    if (out.pairs.size() < 6) {
        return out;
    }
    // normal equations for three regressors
    double s[3][3] = {};
    double rhs[3] = {};
    for (const auto& [eps, dist] : out.pairs) {
        if (!(eps < 1.0)) {
            return out;
        }
        const double row[3] = {1.0, std::log(eps), std::log(-std::log(eps))};
        const double yv = std::log(dist);
        for (int i = 0; i < 3; ++i) {
            rhs[i] += row[i] * yv;
            for (int j = 0; j < 3; ++j) {
                s[i][j] += row[i] * row[j];
            }
        }
    }
    // Gaussian elimination with partial pivoting
    int perm[3] = {0, 1, 2};
    for (int c = 0; c < 3; ++c) {
        int piv = c;
        for (int r = c + 1; r < 3; ++r) {
            if (std::abs(s[perm[r]][c]) > std::abs(s[perm[piv]][c])) {
                piv = r;
            }
        }
        std::swap(perm[c], perm[piv]);
        const double d = s[perm[c]][c];
        if (std::abs(d) < 1e-300) {
            return out;
        }
        for (int r = c + 1; r < 3; ++r) {
            const double f = s[perm[r]][c] / d;
            for (int k = c; k < 3; ++k) {
                s[perm[r]][k] -= f * s[perm[c]][k];
            }
            rhs[perm[r]] -= f * rhs[perm[c]];
        }
    }
    double beta[3];
    for (int c = 2; c >= 0; --c) {
        double acc = rhs[perm[c]];
        for (int k = c + 1; k < 3; ++k) {
            acc -= s[perm[c]][k] * beta[k];
        }
        beta[c] = acc / s[perm[c]][c];
    }
    double ss_res = 0.0;
    double ss_tot = 0.0;
    double mean = 0.0;
    for (const auto& [eps, dist] : out.pairs) {
        mean += std::log(dist);
    }
    mean /= static_cast<double>(out.pairs.size());
    for (const auto& [eps, dist] : out.pairs) {
        const double fit = beta[0] + beta[1] * std::log(eps) + beta[2] * std::log(-std::log(eps));
        const double yv = std::log(dist);
        ss_res += (yv - fit) * (yv - fit);
        ss_tot += (yv - mean) * (yv - mean);
    }
    out.intercept = beta[0];
    out.slope = beta[1];
    out.log_coefficient = beta[2];
    out.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    return out;
}

/// Rate-table CSV row: param, branch, exponent, logpower.
struct RateRow {
    double param = 0.0;
    std::string branch;
    double exponent = 0.0;
    double log_power = 0.0;
};

enum class RateQuantity { Wip, Homogenization };

/// One row per gamma for the chosen exponent; the branch names which formula applied.
inline std::vector<RateRow> lsv_rate_table(std::span<const double> gammas, RateQuantity quantity)
{
    std::vector<RateRow> rows;
    for (double g : gammas) {
        const LsvRates r = lsv_rates(g);
        if (quantity == RateQuantity::Wip) {
            rows.push_back({g, "wip", r.wip, 0.0});
        } else {
            const double p = 1.0 / g;
            rows.push_back({g, r.homog_log_free ? "homog-low" : "homog-high", r.homog,
                            r.homog_log_free ? 0.0 : 0.5 * (p - 1.0)});
        }
    }
    return rows;
}

} // namespace wiplab
