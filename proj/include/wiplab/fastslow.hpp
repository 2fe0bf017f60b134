#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "wiplab/distances.hpp"
#include "wiplab/error.hpp"
#include "wiplab/maps.hpp"
#include "wiplab/observable.hpp"
#include "wiplab/parallel.hpp"
#include "wiplab/paths.hpp"
#include "wiplab/quadrature.hpp"
#include "wiplab/rng.hpp"
#include "wiplab/transfer.hpp"

namespace wiplab {

enum class DriftKind { Zero, Linear, Sine };

/// Averaged drift abar: 0, -kappa x, or amp sin x.
struct DriftSpec {
    DriftKind kind = DriftKind::Zero;
    double param = 0.0;

    static DriftSpec zero() { return {DriftKind::Zero, 0.0}; }
    static DriftSpec linear(double kappa) { return {DriftKind::Linear, kappa}; }
    static DriftSpec sine(double amp) { return {DriftKind::Sine, amp}; }

    [[nodiscard]] double operator()(double x) const noexcept
    {
        switch (kind) {
        case DriftKind::Zero: return 0.0;
        case DriftKind::Linear: return -param * x;
        case DriftKind::Sine: return param * std::sin(x);
        }
        return 0.0;
    }

    [[nodiscard]] double lipschitz() const noexcept { return kind == DriftKind::Zero ? 0.0 : std::abs(param); }
    [[nodiscard]] bool bounded() const noexcept { return kind != DriftKind::Linear || param == 0.0; }

    [[nodiscard]] std::string label() const
    {
        switch (kind) {
        case DriftKind::Zero: return "zero";
        case DriftKind::Linear: return "linear";
        case DriftKind::Sine: return "sine";
        }
        return "?";
    }
};

enum class DiffusionKind { One, Constant, TwoPlusSin, Rational };

/// b(x): 1, c, 2 + sin x, or (1+x^2)/(1+2x^2) = 1/(1 + x^2/(1+x^2)).
struct DiffusionSpec {
    DiffusionKind kind = DiffusionKind::One;
    double param = 1.0;

    static DiffusionSpec one() { return {DiffusionKind::One, 1.0}; }
    static DiffusionSpec constant(double c) { return {DiffusionKind::Constant, c}; }
    static DiffusionSpec two_plus_sin() { return {DiffusionKind::TwoPlusSin, 0.0}; }
    static DiffusionSpec rational() { return {DiffusionKind::Rational, 0.0}; }

    [[nodiscard]] double operator()(double x) const noexcept
    {
        switch (kind) {
        case DiffusionKind::One: return 1.0;
        case DiffusionKind::Constant: return param;
        case DiffusionKind::TwoPlusSin: return 2.0 + std::sin(x);
        case DiffusionKind::Rational: {
            const double x2 = x * x;
            return (1.0 + x2) / (1.0 + 2.0 * x2);
        }
        }
        return 1.0;
    }

    [[nodiscard]] double derivative(double x) const noexcept
    {
        switch (kind) {
        case DiffusionKind::One:
        case DiffusionKind::Constant: return 0.0;
        case DiffusionKind::TwoPlusSin: return std::cos(x);
        case DiffusionKind::Rational: {
            const double d = 1.0 + 2.0 * x * x;
            return -2.0 * x / (d * d);
        }
        }
        return 0.0;
    }

    /// inf |b| and sup |b|.
    [[nodiscard]] std::pair<double, double> range() const noexcept
    {
        switch (kind) {
        case DiffusionKind::One: return {1.0, 1.0};
        case DiffusionKind::Constant: return {std::abs(param), std::abs(param)};
        case DiffusionKind::TwoPlusSin: return {1.0, 3.0};
        case DiffusionKind::Rational: return {0.5, 1.0};
        }
        return {1.0, 1.0};
    }

    [[nodiscard]] bool is_one() const noexcept
    {
        return kind == DiffusionKind::One || (kind == DiffusionKind::Constant && param == 1.0);
    }

    [[nodiscard]] std::string label() const
    {
        switch (kind) {
        case DiffusionKind::One: return "one";
        case DiffusionKind::Constant: return "const";
        case DiffusionKind::TwoPlusSin: return "2+sin";
        case DiffusionKind::Rational: return "rational";
        }
        return "?";
    }
};

/**
 * x(n+1) = x(n) + eps^2 a_eps(x(n), y(n)) + eps b(x(n)) v(y(n)) with
 * a_eps(x,y) = abar(x) + coupling * w(y) + eps^{1/3} perturbation * sin(x + y).
 * w must be centered, so the y-average of a_0 is abar exactly.
 */
struct FastSlowConfig {
    MapModel map = MapModel::doubling();
    ObservableSpec v;
    double epsilon = 0.125;
    double xi = 0.0;
    DriftSpec drift;
    DiffusionSpec diffusion;
    double coupling = 0.0;
    ObservableSpec w;
    double perturbation = 0.0;
    /// declared C in |a_eps - a_0| <= C eps^{1/3}
    double perturbation_bound = 0.0;

    [[nodiscard]] double a0(double x, double y) const noexcept { return drift(x) + coupling * w(y); }

    [[nodiscard]] double a_eps(double x, double y) const noexcept
    {
        double a = a0(x, y);
        if (perturbation != 0.0) {
            a += std::cbrt(epsilon) * perturbation * std::sin(x + y);
        }
        return a;
    }

    /// a_eps vanishes identically (the pure-noise reduction).
    [[nodiscard]] bool drift_free() const noexcept
    {
        return drift.kind == DriftKind::Zero && (coupling == 0.0 || w.is_zero()) && perturbation == 0.0;
    }
};

/// Violations of the regularity assumptions for a configured family.
inline std::vector<std::string> validate_fastslow(const FastSlowConfig& cfg)
{
    std::vector<std::string> out;
    if (!(cfg.epsilon > 0.0 && cfg.epsilon < 1.0)) {
        out.emplace_back("fastslow.epsilon must lie in (0,1)");
    }
    if (std::abs(cfg.perturbation) > cfg.perturbation_bound) {
        out.emplace_back("fastslow.perturbation exceeds the declared bound C in |a_eps - a_0| <= C eps^{1/3}");
    }
    if (cfg.drift.kind == DriftKind::Linear && cfg.drift.param < 0.0) {
        out.emplace_back("fastslow.drift linear rate must be nonnegative");
    }
    if (cfg.diffusion.kind == DiffusionKind::Constant && cfg.diffusion.param == 0.0) {
        out.emplace_back("fastslow.diffusion constant must be nonzero");
    }
    if (!std::isfinite(cfg.xi)) {
        out.emplace_back("fastslow.xi must be finite");
    }
    return out;
}

inline constexpr std::size_t default_step_budget = std::size_t{1} << 26;

/// Number of recursion steps covering [0,1]: ceil(eps^-2).
inline std::size_t fastslow_steps(double epsilon)
{
    return static_cast<std::size_t>(std::ceil(1.0 / (epsilon * epsilon)));
}

/**
 * Runs the recursion along the orbit produced by `orbit` (any type with
 * current() and advance()) and returns x̂_eps on [0,1]. Nodes sit at k eps^2;
 * when eps^-2 is not an integer the last node is the interpolated value at t=1.
 */
template <class Orbit>
SamplePath simulate_fastslow(const FastSlowConfig& cfg, Orbit& orbit, std::size_t budget = default_step_budget)
{
    const std::size_t n = fastslow_steps(cfg.epsilon);
    if (n > budget) {
        throw Error(ErrorCode::BudgetExceeded,
                    "eps^-2 = " + std::to_string(n) + " exceeds the step budget " + std::to_string(budget));
    }
    const double eps = cfg.epsilon;
    const double eps2 = eps * eps;
    std::vector<double> x(n + 1);
    x[0] = cfg.xi;
    for (std::size_t k = 0; k < n; ++k) {
        const double y = orbit.current();
        const double xk = x[k];
        x[k + 1] = xk + eps2 * cfg.a_eps(xk, y) + eps * cfg.diffusion(xk) * cfg.v(y);
        orbit.advance();
    }
    if (static_cast<double>(n) * eps2 == 1.0) {
        return SamplePath(std::move(x));
    }
    std::vector<double> t(n + 1);
    for (std::size_t k = 0; k < n; ++k) {
        t[k] = static_cast<double>(k) * eps2;
    }
    const double t_prev = t[n - 1];
    const double frac = (1.0 - t_prev) / eps2;
    x[n] = x[n - 1] + frac * (x[n] - x[n - 1]);
    t[n] = 1.0;
    return SamplePath(std::move(x), std::move(t));
}

/// Deterministic orbit of y0 under the map.
inline SamplePath simulate_fastslow(const FastSlowConfig& cfg, double y0, std::size_t budget = default_step_budget)
{
    struct PlainOrbit {
        const MapModel& map;
        double y;
        [[nodiscard]] double current() const noexcept { return y; }
        void advance() noexcept { y = step(map, y); }
    } orbit{cfg.map, y0};
    return simulate_fastslow(cfg, orbit, budget);
}

/// abar(x) + b(x) b'(x) Sigma, Sigma = sum_{n>=1} of the correlations of v.
inline double ito_drift(double x, const FastSlowConfig& cfg, double correlation_sum) noexcept
{
    return cfg.drift(x) + cfg.diffusion(x) * cfg.diffusion.derivative(x) * correlation_sum;
}

/// Stratonovich drift abar - (1/2) b b' ∫v^2 plus the conversion (1/2) b b' sigma^2.
inline double stratonovich_to_ito_drift(double x, const FastSlowConfig& cfg, double sigma2, double v2_mean) noexcept
{
    const double bb = cfg.diffusion(x) * cfg.diffusion.derivative(x);
    return cfg.drift(x) - 0.5 * bb * v2_mean + 0.5 * bb * sigma2;
}

struct SdeSolution {
    SamplePath path;
    double dt = 0.0;
    std::string scheme = "euler-maruyama-ito";
};

namespace detail {

inline std::size_t steps_for(double dt)
{
    if (!(dt > 0.0)) {
        throw Error(ErrorCode::RangeError, "time step must be positive");
    }
    const double steps = std::round(1.0 / dt);
    if (steps < 1.0 || std::abs(steps * dt - 1.0) > 1e-12) {
        throw Error(ErrorCode::RangeError, "1/dt must be an integer so the grid ends at t = 1");
    }
    return static_cast<std::size_t>(steps);
}

/// Euler–Maruyama for dX = drift(X) dt + diff(X) dW, W of variance sigma2.
template <class Drift, class Diff>
SamplePath euler_maruyama(double x0, Drift&& drift, Diff&& diff, double sigma2, std::size_t steps, RandomStream& rng)
{
    const double dt = 1.0 / static_cast<double>(steps);
    const double s = std::sqrt(sigma2 / static_cast<double>(steps));
    std::vector<double> x(steps + 1);
    x[0] = x0;
    for (std::size_t k = 0; k < steps; ++k) {
        const double xk = x[k];
        x[k + 1] = xk + drift(xk) * dt + diff(xk) * s * rng.normal();
    }
    return SamplePath(std::move(x));
}

} // namespace detail

/// Euler–Maruyama on the Itô form of the limit equation, dt <= 1e-2.
inline SdeSolution solve_limit_sde(const FastSlowConfig& cfg, double sigma2, double correlation_sum, double dt,
                                   RandomStream& rng)
{
    if (dt > 1e-2) {
        throw Error(ErrorCode::RangeError, "solve_limit_sde needs dt <= 1e-2");
    }
    if (sigma2 < 0.0) {
        throw Error(ErrorCode::RangeError, "sigma2 must be nonnegative");
    }
    const std::size_t steps = detail::steps_for(dt);
    SdeSolution out;
    out.dt = dt;
    out.path = detail::euler_maruyama(
        cfg.xi, [&](double x) { return ito_drift(x, cfg, correlation_sum); },
        [&](double x) { return cfg.diffusion(x); }, sigma2, steps, rng);
    return out;
}

/**
 * Change of variables z = psi(x), psi' = 1/b, which turns the limit equation
 * into dZ = Abar(Z) dt + dW.
 */
class PsiTransform {
public:
    PsiTransform(const FastSlowConfig& cfg, double v2_mean)
        : drift_(cfg.drift), diff_(cfg.diffusion), v2_(v2_mean)
    {
        const auto [lo, hi] = diff_.range();
        if (!(lo > 0.0) && diff_.kind != DiffusionKind::Constant) {
            throw Error(ErrorCode::RangeError, "b must be bounded away from zero");
        }
        if (diff_.kind == DiffusionKind::Constant && diff_.param == 0.0) {
            throw Error(ErrorCode::RangeError, "b must be bounded away from zero");
        }
        (void)hi;
    }

    /// psi(x) = ∫_0^x dt / b(t).
    [[nodiscard]] double psi(double x) const
    {
        switch (diff_.kind) {
        case DiffusionKind::One: return x;
        case DiffusionKind::Constant: return x / diff_.param;
        default: break;
        }
        return integrate_adaptive([this](double t) { return 1.0 / diff_(t); }, 0.0, x, 1e-10);
    }

    /// psi^{-1}(z): Newton steps safeguarded by the bracket from inf b, sup b.
    [[nodiscard]] double inverse(double z) const
    {
        switch (diff_.kind) {
        case DiffusionKind::One: return z;
        case DiffusionKind::Constant: return z * diff_.param;
        default: break;
        }
        const auto [lo, hi] = diff_.range();
        double a = std::min(z * lo, z * hi);
        double b = std::max(z * lo, z * hi);
        double x = z * diff_(0.0);
        x = std::clamp(x, a, b);
        for (int it = 0; it < 100; ++it) {
            const double f = psi(x) - z;
            if (f > 0.0) {
                b = x;
            } else {
                a = x;
            }
            double next = x - f * diff_(x);
            if (!(next > a && next < b)) {
                next = 0.5 * (a + b);
            }
            if (std::abs(next - x) <= 1e-14 * std::max(1.0, std::abs(x)) || b - a <= 1e-15 * std::max(1.0, std::abs(x))) {
                return next;
            }
            x = next;
        }
        return x;
    }

    /// Abar(z) = psi' abar + (1/2) psi'' b^2 ∫v^2 at x = psi^{-1}(z), psi' = 1/b, psi'' = -b'/b^2.
    [[nodiscard]] double abar(double z) const
    {
        const double x = inverse(z);
        return abar_at(x);
    }

    /// Same drift expressed through x = psi^{-1}(z).
    [[nodiscard]] double abar_at(double x) const
    {
        const double b = diff_(x);
        const double dpsi = 1.0 / b;
        const double d2psi = -diff_.derivative(x) / (b * b);
        return dpsi * drift_(x) + 0.5 * d2psi * b * b * v2_;
    }

    [[nodiscard]] bool identity() const noexcept { return diff_.kind == DiffusionKind::One; }

    /// Tabulates Abar on [lo, hi] for fast linear-interpolated evaluation.
    void tabulate(double lo, double hi, std::size_t points)
    {
        if (!(hi > lo) || points < 2) {
            throw Error(ErrorCode::GridError, "Abar table needs hi > lo and at least two points");
        }
        table_lo_ = lo;
        table_step_ = (hi - lo) / static_cast<double>(points - 1);
        table_.resize(points);
        for (std::size_t k = 0; k < points; ++k) {
            table_[k] = abar(lo + static_cast<double>(k) * table_step_);
        }
    }

    /// Abar from the table inside its range, exact outside.
    [[nodiscard]] double abar_fast(double z) const
    {
        if (table_.empty()) {
            return abar(z);
        }
        const double s = (z - table_lo_) / table_step_;
        if (!(s >= 0.0) || s >= static_cast<double>(table_.size() - 1)) {
            return abar(z);
        }
        const auto k = static_cast<std::size_t>(s);
        const double frac = s - static_cast<double>(k);
        return table_[k] + frac * (table_[k + 1] - table_[k]);
    }

private:
    DriftSpec drift_;
    DiffusionSpec diff_;
    double v2_;
    double table_lo_ = 0.0;
    double table_step_ = 1.0;
    std::vector<double> table_;
};

struct MomentConditionRow {
    std::size_t n = 0;
    double drift_ratio = 0.0;    ///< max_u |sum ã_u∘T^j|_q / sqrt(n)
    double v_ratio = 0.0;        ///< |v_n|_q / sqrt(n)
    double v2_ratio = 0.0;       ///< |sum (v^2 - ∫v^2)∘T^j|_q / sqrt(n)
};

/**
 * Monte Carlo L^q norms of the Birkhoff sums entering the moment conditions,
 * each divided by sqrt(n). For the built-in families ã_u(y) = coupling * w(y)
 * does not depend on u.
 */
inline std::vector<MomentConditionRow> check_moment_conditions(const FastSlowConfig& cfg, double q,
                                                               std::span<const std::size_t> grid,
                                                               std::size_t samples, const RandomStream& rng,
                                                               double v2_mean)
{
    if (!moment_admissible(cfg.map, q)) {
        throw Error(ErrorCode::AdmissibilityError,
                    "q = " + std::to_string(q) + " is not admissible for " + cfg.map.label());
    }
    if (grid.empty() || !std::is_sorted(grid.begin(), grid.end()) || grid.front() == 0 || samples == 0) {
        throw Error(ErrorCode::RangeError, "n grid must be positive and increasing, samples positive");
    }
    std::vector<double> acc_a(grid.size(), 0.0);
    std::vector<double> acc_v(grid.size(), 0.0);
    std::vector<double> acc_v2(grid.size(), 0.0);
    const bool drift_varies = cfg.coupling != 0.0 && !cfg.w.is_zero();
    for (std::size_t s = 0; s < samples; ++s) {
        InvariantOrbit gen(cfg.map, rng.split(tag_of("moment-conditions"), s));
        double sa = 0.0;
        double sv = 0.0;
        double sv2 = 0.0;
        std::size_t g = 0;
        for (std::size_t j = 1; j <= grid.back(); ++j) {
            const double y = gen.current();
            if (drift_varies) {
                sa += cfg.coupling * cfg.w(y);
            }
            const double vy = cfg.v(y);
            sv += vy;
            sv2 += vy * vy - v2_mean;
            gen.advance();
            while (g < grid.size() && grid[g] == j) {
                acc_a[g] += std::pow(std::abs(sa), q);
                acc_v[g] += std::pow(std::abs(sv), q);
                acc_v2[g] += std::pow(std::abs(sv2), q);
                ++g;
            }
        }
    }
    std::vector<MomentConditionRow> out;
    const double count = static_cast<double>(samples);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double root = std::sqrt(static_cast<double>(grid[g]));
        out.push_back({grid[g], std::pow(acc_a[g] / count, 1.0 / q) / root,
                       std::pow(acc_v[g] / count, 1.0 / q) / root, std::pow(acc_v2[g] / count, 1.0 / q) / root});
    }
    return out;
}

/// Limit-equation constants derived from the observable.
struct LimitConstants {
    double sigma2 = 0.0;
    double correlation_sum = 0.0; ///< Sigma = (sigma2 - ∫v^2) / 2
    double v2_mean = 0.0;
};

/// sigma^2 by truncated Green–Kubo quadrature, ∫v^2 dmu, and Sigma.
inline LimitConstants limit_constants(const TransferOperator& op, const ObservableSpec& v, std::size_t terms)
{
    LimitConstants lc;
    lc.sigma2 = green_kubo_sigma2(op, v, terms).value;
    lc.v2_mean = op.integrate([&v](double x) { return v(x) * v(x); });
    lc.correlation_sum = 0.5 * (lc.sigma2 - lc.v2_mean);
    return lc;
}

/// Fast-slow path i at the given scale; follows the orbit stream of wn paths with n = eps^-2.
inline SamplePath fastslow_path(const FastSlowConfig& cfg, std::uint64_t seed, std::size_t scale_key, std::size_t i)
{
    InvariantOrbit gen(cfg.map, path_stream(seed, "dynamics", scale_key, i));
    return simulate_fastslow(cfg, gen);
}

/// Limit-SDE path i on the dt = eps^2 grid; uses the reference stream of Brownian paths.
inline SamplePath limit_sde_path(const FastSlowConfig& cfg, const LimitConstants& lc, std::uint64_t seed,
                                 std::size_t scale_key, std::size_t i)
{
    RandomStream rng = path_stream(seed, "reference", scale_key, i);
    return detail::euler_maruyama(
        cfg.xi, [&](double x) { return ito_drift(x, cfg, lc.correlation_sum); },
        [&](double x) { return cfg.diffusion(x); }, lc.sigma2, fastslow_steps(cfg.epsilon), rng);
}

inline PathEnsemble fastslow_ensemble(const FastSlowConfig& cfg, std::size_t count, std::uint64_t seed,
                                      std::size_t scale_key, std::size_t workers = 1)
{
    PathEnsemble out;
    out.descriptor = {cfg.map.label(), cfg.v.label(), fastslow_steps(cfg.epsilon), cfg.epsilon, "dynamics"};
    out.seed = seed;
    out.paths.resize(count);
    parallel_for(count, workers, [&](std::size_t i) { out.paths[i] = fastslow_path(cfg, seed, scale_key, i); });
    return out;
}

inline PathEnsemble limit_sde_ensemble(const FastSlowConfig& cfg, const LimitConstants& lc, std::size_t count,
                                       std::uint64_t seed, std::size_t scale_key, std::size_t workers = 1)
{
    PathEnsemble out;
    out.descriptor = {"limit-sde", cfg.drift.label() + "/" + cfg.diffusion.label(), fastslow_steps(cfg.epsilon),
                      cfg.epsilon, "reference"};
    out.seed = seed;
    out.paths.resize(count);
    parallel_for(count, workers, [&](std::size_t i) { out.paths[i] = limit_sde_path(cfg, lc, seed, scale_key, i); });
    return out;
}

struct HomogenizationReport {
    DistanceReport distance;
    DistanceReport psi_distance;
    std::size_t steps = 0;
};

/**
 * Prokhorov distance between M fast-slow paths and M limit-SDE paths on the
 * shared eps^2 grid, plus the same comparison after the psi change of
 * variables against dZ = Abar(Z) dt + dW. Stream keys use scale_key = eps^-2,
 * matching the WIP pipeline at n = eps^-2.
 */
inline HomogenizationReport homogenization_experiment(const FastSlowConfig& cfg, const LimitConstants& lc,
                                                      std::size_t count, std::uint64_t seed,
                                                      std::span<const double> times, std::size_t workers = 1)
{
    if (count < 1) {
        throw Error(ErrorCode::RangeError, "ensemble size must be positive");
    }
    HomogenizationReport out;
    out.steps = fastslow_steps(cfg.epsilon);
    const std::size_t key = out.steps;
    const PointCloud ps =
        project_generated(count, times, workers, [&](std::size_t i) { return fastslow_path(cfg, seed, key, i); });
    const PointCloud pl =
        project_generated(count, times, workers, [&](std::size_t i) { return limit_sde_path(cfg, lc, seed, key, i); });
    out.distance = empirical_prokhorov(ps, pl);

    PsiTransform psi(cfg, lc.v2_mean);
    if (psi.identity()) {
        out.psi_distance = out.distance;
    } else {
        std::vector<double> zs(ps.coords().size());
        parallel_for(zs.size(), workers, [&](std::size_t k) { zs[k] = psi.psi(ps.coords()[k]); });
        const double z0 = psi.psi(cfg.xi);
        const double reach = 10.0 * (1.0 + std::sqrt(lc.sigma2)) + std::abs(z0);
        psi.tabulate(-reach, reach, std::size_t{1} << 16);
        const PointCloud pz = project_generated(count, times, workers, [&](std::size_t i) {
            RandomStream rng = path_stream(seed, "reference", key, i);
            return detail::euler_maruyama(
                z0, [&](double z) { return psi.abar_fast(z); }, [](double) { return 1.0; }, lc.sigma2, out.steps,
                rng);
        });
        out.psi_distance = empirical_prokhorov(PointCloud(times.size(), std::move(zs)), pz);
    }
    out.psi_distance.estimator = "prokhorov-psi";
    return out;
}

} // namespace wiplab
