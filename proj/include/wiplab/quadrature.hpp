#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include "wiplab/error.hpp"

namespace wiplab {

namespace detail {

// 5-point Gauss-Legendre on [-1,1]
inline constexpr std::array<double, 5> gl5_nodes = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                                    0.5384693101056831, 0.9061798459386640};
inline constexpr std::array<double, 5> gl5_weights = {0.2369268850561891, 0.4786286704993665,
                                                      0.5688888888888889, 0.4786286704993665,
                                                      0.2369268850561891};

// Gauss-Kronrod 7-15 abscissae on [0,1] half-range, with their weights
inline constexpr std::array<double, 8> gk15_x = {0.991455371120812639, 0.949107912342758525, 0.864864423359769073,
                                                 0.741531185599394440, 0.586087235467691130, 0.405845151377397167,
                                                 0.207784955007898468, 0.000000000000000000};
inline constexpr std::array<double, 8> gk15_wk = {0.022935322010529225, 0.063092092629978553, 0.104790010322250184,
                                                  0.140653259715525919, 0.169004726639267903, 0.190350578064785410,
                                                  0.204432940075298892, 0.209482141084727828};
inline constexpr std::array<double, 4> gk15_wg = {0.129484966168869693, 0.279705391489276668, 0.381830050505118945,
                                                  0.417959183673469388};

template <class F>
std::pair<double, double> gk15(F& f, double a, double b)
{
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double fc = f(c);
    double kronrod = fc * gk15_wk[7];
    double gauss = fc * gk15_wg[3];
    for (int i = 0; i < 7; ++i) {
        const double dx = h * gk15_x[static_cast<std::size_t>(i)];
        const double s = f(c - dx) + f(c + dx);
        kronrod += gk15_wk[static_cast<std::size_t>(i)] * s;
        if (i % 2 == 1) {
            gauss += gk15_wg[static_cast<std::size_t>(i / 2)] * s;
        }
    }
    return {kronrod * h, std::abs((kronrod - gauss) * h)};
}

template <class F>
double adaptive_gk(F& f, double a, double b, double tol, int depth, bool& ok)
{
    const auto [value, err] = gk15(f, a, b);
    if (err <= tol || b - a < 1e-14) {
        if (err > tol) {
            ok = false;
        }
        return value;
    }
    if (depth == 0) {
        ok = false;
        return value;
    }
    const double m = 0.5 * (a + b);
    return adaptive_gk(f, a, m, 0.5 * tol, depth - 1, ok) + adaptive_gk(f, m, b, 0.5 * tol, depth - 1, ok);
}

} // namespace detail

/// 5-point Gauss-Legendre on one interval.
template <class F>
double gauss_legendre5(F&& f, double a, double b)
{
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    double s = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
        s += detail::gl5_weights[i] * f(c + h * detail::gl5_nodes[i]);
    }
    return s * h;
}

/**
 * Composite rule on [0,1]: `cells` equal subintervals, with the first one
 * further split geometrically toward 0 so integrands like x^theta are resolved.
 */
template <class F>
double integrate_unit(F&& f, std::size_t cells)
{
    const double h = 1.0 / static_cast<double>(cells);
    double total = 0.0;
    double hi = h;
    for (int level = 0; level < 48; ++level) {
        const double lo = 0.5 * hi;
        total += gauss_legendre5(f, lo, hi);
        hi = lo;
    }
    total += gauss_legendre5(f, 0.0, hi);
    for (std::size_t j = 1; j < cells; ++j) {
        total += gauss_legendre5(f, static_cast<double>(j) * h, static_cast<double>(j + 1) * h);
    }
    return total;
}

/// Adaptive Gauss-Kronrod (7,15) to absolute tolerance; throws QuadratureFailure if not met.
template <class F>
double integrate_adaptive(F&& f, double a, double b, double tol = 1e-10, int max_depth = 50)
{
    if (a == b) {
        return 0.0;
    }
    bool ok = true;
    const double sign = b < a ? -1.0 : 1.0;
    const double lo = std::min(a, b);
    const double hi = std::max(a, b);
    const double value = detail::adaptive_gk(f, lo, hi, tol, max_depth, ok);
    if (!ok) {
        throw Error(ErrorCode::QuadratureFailure,
                    "tolerance " + std::to_string(tol) + " not met on [" + std::to_string(lo) + "," +
                        std::to_string(hi) + "]");
    }
    return sign * value;
}

} // namespace wiplab
