#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "wiplab/error.hpp"

namespace wiplab {

enum class ObservableKind { Zero, Cosine, Identity, Power, Polynomial };

/**
 * A Hölder observable v: [0,1] -> R given by a named analytic form, together
 * with the constant that centers it under the invariant measure. Evaluation
 * returns the centered value base(x) - center.
 */
class ObservableSpec {
public:
    ObservableSpec() = default;

    static ObservableSpec zero() { return ObservableSpec(ObservableKind::Zero, {}, 1.0); }
    /// cos(2 pi x)
    static ObservableSpec cosine() { return ObservableSpec(ObservableKind::Cosine, {}, 1.0); }
    /// x
    static ObservableSpec identity() { return ObservableSpec(ObservableKind::Identity, {}, 1.0); }
    /// x^theta, theta in (0,1]
    static ObservableSpec power(double theta)
    {
        if (!(theta > 0.0 && theta <= 1.0)) {
            throw Error(ErrorCode::RangeError, "power observable needs theta in (0,1]");
        }
        return ObservableSpec(ObservableKind::Power, {theta}, theta);
    }
    /// sum_k coeffs[k] x^k
    static ObservableSpec polynomial(std::vector<double> coeffs)
    {
        return ObservableSpec(ObservableKind::Polynomial, std::move(coeffs), 1.0);
    }

    [[nodiscard]] ObservableKind kind() const noexcept { return kind_; }
    [[nodiscard]] double holder_exponent() const noexcept { return eta_; }
    [[nodiscard]] double center() const noexcept { return center_; }
    [[nodiscard]] double scale() const noexcept { return scale_; }
    [[nodiscard]] const std::vector<double>& params() const noexcept { return params_; }

    [[nodiscard]] ObservableSpec with_center(double c) const
    {
        ObservableSpec out = *this;
        out.center_ = c;
        return out;
    }

    /// alpha * v, keeping the centering consistent.
    [[nodiscard]] ObservableSpec scaled(double alpha) const
    {
        ObservableSpec out = *this;
        out.scale_ *= alpha;
        out.center_ *= alpha;
        return out;
    }

    [[nodiscard]] double base(double x) const noexcept
    {
        double y = 0.0;
        switch (kind_) {
        case ObservableKind::Zero: y = 0.0; break;
        case ObservableKind::Cosine: y = std::cos(2.0 * std::numbers::pi * x); break;
        case ObservableKind::Identity: y = x; break;
        case ObservableKind::Power: y = std::pow(x, params_[0]); break;
        case ObservableKind::Polynomial:
            for (auto it = params_.rbegin(); it != params_.rend(); ++it) {
                y = y * x + *it;
            }
            break;
        }
        return scale_ * y;
    }

    [[nodiscard]] double operator()(double x) const noexcept { return base(x) - center_; }

    [[nodiscard]] bool is_zero() const noexcept
    {
        if (kind_ == ObservableKind::Zero || scale_ == 0.0) {
            return center_ == 0.0;
        }
        if (kind_ == ObservableKind::Polynomial) {
            for (double c : params_) {
                if (c != 0.0) {
                    return false;
                }
            }
            return center_ == 0.0;
        }
        return false;
    }

    [[nodiscard]] std::string label() const
    {
        switch (kind_) {
        case ObservableKind::Zero: return "zero";
        case ObservableKind::Cosine: return "cos2pi";
        case ObservableKind::Identity: return "x";
        case ObservableKind::Power: return "x^" + std::to_string(params_[0]);
        case ObservableKind::Polynomial: return "poly";
        }
        return "?";
    }

private:
    ObservableSpec(ObservableKind kind, std::vector<double> params, double eta)
        : kind_(kind), params_(std::move(params)), eta_(eta)
    {
    }

    ObservableKind kind_ = ObservableKind::Zero;
    std::vector<double> params_;
    double eta_ = 1.0;
    double scale_ = 1.0;
    double center_ = 0.0;
};

} // namespace wiplab
