#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>

#include "wiplab/error.hpp"

namespace wiplab {

/// Streaming mean and variance (Welford).
class RunningStats {
public:
    void push(double x) noexcept
    {
        ++count_;
        const double delta = x - mean_;
        mean_ += delta / static_cast<double>(count_);
        m2_ += delta * (x - mean_);
    }

    [[nodiscard]] std::size_t count() const noexcept { return count_; }
    [[nodiscard]] double mean() const noexcept { return mean_; }
    [[nodiscard]] double variance() const noexcept
    {
        return count_ > 1 ? m2_ / static_cast<double>(count_ - 1) : 0.0;
    }
    [[nodiscard]] double std_error() const noexcept
    {
        return count_ > 1 ? std::sqrt(variance() / static_cast<double>(count_)) : 0.0;
    }

private:
    std::size_t count_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

/// Value together with its Monte Carlo standard error (0 for deterministic quadrature).
struct Estimate {
    double value = 0.0;
    double std_error = 0.0;
};

inline double normal_cdf(double z) noexcept { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

/// Ordinary least squares y = intercept + slope * x.
inline LineFit least_squares(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 2) {
        throw Error(ErrorCode::InsufficientData, "least squares needs at least two paired points");
    }
    const auto n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) {
        throw Error(ErrorCode::InsufficientData, "least squares needs distinct abscissae");
    }
    LineFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
    return fit;
}

} // namespace wiplab
