#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wiplab/error.hpp"
#include "wiplab/grid.hpp"
#include "wiplab/maps.hpp"
#include "wiplab/observable.hpp"
#include "wiplab/quadrature.hpp"
#include "wiplab/rng.hpp"
#include "wiplab/stats.hpp"
#include "wiplab/ulam.hpp"

namespace wiplab {

inline constexpr std::size_t default_grid_cells = std::size_t{1} << 12;

namespace detail {

// Hurwitz zeta sums over k > K of (k+x)^-s, by Euler-Maclaurin at z = K+1+x (z >= 100).
inline double hurwitz2(double z) noexcept
{
    const double r = 1.0 / z;
    const double r2 = r * r;
    return r + 0.5 * r2 + r2 * r * (1.0 / 6.0 - r2 * (1.0 / 30.0 - r2 / 42.0));
}

inline double hurwitz3(double z) noexcept
{
    const double r = 1.0 / z;
    const double r2 = r * r;
    return 0.5 * r2 + 0.5 * r2 * r + r2 * r2 * (0.25 - r2 * (1.0 / 12.0 - r2 / 12.0));
}

} // namespace detail

/**
 * Transfer operator L of the invariant measure, i.e. the adjoint of f -> f∘T
 * in L^2(mu), so that E(w | T^{-1}B) = (Lw)∘T.
 *
 * Exact branch formulas are used for Doubling and Gauss on a uniform grid of
 * N+1 nodes; LSV uses an Ulam discretization whose nodes are the cell centres.
 * Callables passed to apply_branches take (u, x): u is a preimage of the base
 * point x, so any factor of the form g(T u) may be written as g(x).
 */
class TransferOperator {
public:
    static TransferOperator exact(const MapModel& map, std::size_t cells = default_grid_cells)
    {
        if (map.kind() == MapKind::LSV) {
            throw Error(ErrorCode::RangeError, "LSV has no exact branch formula here; use TransferOperator::ulam");
        }
        TransferOperator op(map);
        op.layout_ = GridLayout::uniform(cells);
        return op;
    }

    static TransferOperator ulam(const MapModel& map, const UlamOptions& opts = {})
    {
        TransferOperator op(map);
        op.ulam_ = std::make_shared<const UlamModel>(UlamModel::build(map, opts));
        op.layout_ = GridLayout::custom(op.ulam_->centers());
        return op;
    }

    /// Exact operator where available, Ulam otherwise.
    static TransferOperator for_map(const MapModel& map, std::size_t cells = default_grid_cells,
                                    const UlamOptions& opts = {})
    {
        return map.kind() == MapKind::LSV ? ulam(map, opts) : exact(map, cells);
    }

    [[nodiscard]] const MapModel& map() const noexcept { return map_; }
    [[nodiscard]] const std::shared_ptr<const GridLayout>& layout() const noexcept { return layout_; }
    [[nodiscard]] bool is_ulam() const noexcept { return ulam_ != nullptr; }
    [[nodiscard]] const UlamModel* ulam_model() const noexcept { return ulam_.get(); }

    /// (Lf)(x) at a single base point, exact operators only.
    template <class F>
    [[nodiscard]] double branch_sum(F&& f, double x) const
    {
        switch (map_.kind()) {
        case MapKind::Doubling: return 0.5 * (f(0.5 * x, x) + f(0.5 * (x + 1.0), x));
        case MapKind::Gauss: return gauss_branch_sum(f, x);
        case MapKind::LSV: break;
        }
        throw Error(ErrorCode::RangeError, "pointwise branch sums need an exact operator");
    }

    /// Lf on the operator grid for f given as a callable of (preimage, base point).
    template <class F>
    [[nodiscard]] GridFunction apply_branches(F&& f) const
    {
        std::vector<double> out(layout_->size());
        if (ulam_) {
            const auto& rev = ulam_->reversal();
            const auto& c = ulam_->centers();
            for (std::size_t j = 0; j < out.size(); ++j) {
                double s = 0.0;
                for (std::size_t k = rev.offsets[j]; k < rev.offsets[j + 1]; ++k) {
                    s += rev.weights[k] * f(c[rev.columns[k]], c[j]);
                }
                out[j] = s;
            }
        } else {
            for (std::size_t j = 0; j < out.size(); ++j) {
                out[j] = branch_sum(f, layout_->node(j));
            }
        }
        return GridFunction(layout_, std::move(out));
    }

    [[nodiscard]] GridFunction apply(const GridFunction& f) const
    {
        if (!f.layout() || !(f.layout() == layout_ || f.layout()->nodes() == layout_->nodes())) {
            throw Error(ErrorCode::GridMismatch, "function grid differs from the operator grid");
        }
        if (ulam_) {
            // on the Ulam grid, node values are cell values
            const auto& rev = ulam_->reversal();
            std::vector<double> out(layout_->size());
            for (std::size_t j = 0; j < out.size(); ++j) {
                double s = 0.0;
                for (std::size_t k = rev.offsets[j]; k < rev.offsets[j + 1]; ++k) {
                    s += rev.weights[k] * f[rev.columns[k]];
                }
                out[j] = s;
            }
            return GridFunction(layout_, std::move(out));
        }
        return apply_branches([&f](double u, double) { return f(u); });
    }

    /// Integral of f against the invariant measure.
    template <class F>
    [[nodiscard]] double integrate(F&& f) const
    {
        switch (map_.kind()) {
        case MapKind::Doubling: return integrate_unit(f, 2 * layout_->cells());
        case MapKind::Gauss:
            return integrate_unit([&f](double x) { return f(x) * gauss_density(x); }, 2 * layout_->cells());
        case MapKind::LSV: {
            const auto& p = ulam_->masses();
            const auto& c = ulam_->centers();
            double s = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) {
                s += p[i] * f(c[i]);
            }
            return s;
        }
        }
        return 0.0;
    }

    /// Integral of f(x, T x) against the invariant measure (Markov-chain pairs on the Ulam grid).
    template <class F>
    [[nodiscard]] double integrate_pairs(F&& f) const
    {
        if (ulam_) {
            const auto& fwd = ulam_->transitions();
            const auto& p = ulam_->masses();
            const auto& c = ulam_->centers();
            double s = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) {
                double row = 0.0;
                for (std::size_t k = fwd.offsets[i]; k < fwd.offsets[i + 1]; ++k) {
                    row += fwd.weights[k] * f(c[i], c[fwd.columns[k]]);
                }
                s += p[i] * row;
            }
            return s;
        }
        return integrate([&](double x) { return f(x, step(map_, x)); });
    }

    /// v with its centering constant set to its mean under this operator's invariant measure.
    [[nodiscard]] ObservableSpec center(const ObservableSpec& v) const
    {
        return v.with_center(integrate([&v](double x) { return v.base(x); }));
    }

private:
    explicit TransferOperator(const MapModel& map) : map_(map) {}

    // Gauss: (Lf)(x) = sum_k u_k^2 (1+x)/(1+u_k) f(u_k), u_k = 1/(k+x).
    // Terms k <= N are summed directly; for k > N every u_k lies in the first
    // grid cell, f is replaced by its quadratic interpolant there and the tail
    // is summed in closed form (telescoping plus Hurwitz zeta).
    template <class F>
    double gauss_branch_sum(F& f, double x) const
    {
        const std::size_t head = layout_->cells();
        double s = 0.0;
        for (std::size_t k = 1; k <= head; ++k) {
            const double u = 1.0 / (static_cast<double>(k) + x);
            s += u * u / (1.0 + u) * f(u, x);
        }
        const double z = static_cast<double>(head) + 1.0 + x;
        const double ua = 1.0 / z;
        const double fa = f(ua, x);
        const double fb = f(0.5 * ua, x);
        const double fc = f(0.25 * ua, x);
        // quadratic c0 + c1 u + c2 u^2 through the three samples
        const double h = 0.25 * ua;
        const double d1 = (fb - fc) / h;
        const double d2 = (fa - fb) / (2.0 * h);
        const double c2 = (d2 - d1) / (3.0 * h);
        const double c1 = d1 - 3.0 * h * c2;
        const double c0 = fc - h * d1 + 2.0 * h * h * c2;
        const double a0 = 1.0 / z;
        const double zeta2 = detail::hurwitz2(z);
        const double a1 = zeta2 - a0;
        const double a2 = detail::hurwitz3(z) - a1;
        s += c0 * a0 + c1 * a1 + c2 * a2;
        return (1.0 + x) * s;
    }

    MapModel map_;
    std::shared_ptr<const GridLayout> layout_;
    std::shared_ptr<const UlamModel> ulam_;
};

/**
 * One-sided Gordin decomposition v = m + chi∘T - chi with
 * chi = sum_{k=1..K} L^k v and L m = 0 (up to the truncation L^{K+1} v).
 */
struct GordinDecomposition {
    ObservableSpec v;
    GridFunction chi;
    GridFunction m_nodes;  ///< m(x_j) at grid nodes x_j
    GridFunction cond_m2;  ///< L(m^2); E(m^2 | T^{-1}B) = cond_m2∘T
    std::size_t depth = 0; ///< number of series terms kept
    double sigma2_m = 0.0; ///< integral of m^2
    double lm_residual = 0.0; ///< |L m|, same norm as term_norms
    double tail_estimate = 0.0;
    double contraction = 0.0;
    std::vector<double> term_norms; ///< |L^k v|, k = 1..depth (sup norm; L1(mu) for Ulam)

    /// m(x) given x and its image T x.
    [[nodiscard]] double m(double x, double tx) const noexcept { return v(x) - chi(tx) + chi(x); }
};

struct DecompositionOptions {
    /// Cap on the number of series terms (exact operators use exactly this many).
    std::size_t depth = 60;
    /// Ulam only: stop once the L1(mu) norm of L^k v drops below this
    /// (the sup norm does not decay at the neutral fixed point).
    double ulam_term_tol = 1e-4;
};

inline constexpr std::size_t default_ulam_depth = 200;

inline GordinDecomposition gordin_decompose(const TransferOperator& op, const ObservableSpec& v,
                                            const DecompositionOptions& opts)
{
    if (opts.depth == 0) {
        throw Error(ErrorCode::RangeError, "decomposition depth must be positive");
    }
    GordinDecomposition dec;
    dec.v = v;
    // L^k v has mean zero; removing the interpolation drift in the mean keeps
    // the constant mode (eigenvalue 1) from accumulating in chi
    auto recenter = [&op](GridFunction& f) {
        const double mean = op.integrate([&f](double x) { return f(x); });
        for (double& y : f.values()) {
            y -= mean;
        }
    };
    GridFunction term = op.apply_branches([&v](double u, double) { return v(u); });
    recenter(term);
    GridFunction chi = GridFunction::zeros(op.layout());
    const double v_scale = std::max(1.0, GridFunction::sample(op.layout(), v).sup_norm());
    const double abs_tol = op.is_ulam() ? opts.ulam_term_tol : 1e-12 * v_scale;
    for (std::size_t k = 1; k <= opts.depth; ++k) {
        chi += term;
        dec.term_norms.push_back(op.is_ulam() ? op.integrate([&term](double x) { return std::abs(term(x)); })
                                              : term.sup_norm());
        dec.depth = k;
        if (op.is_ulam() && dec.term_norms.back() < opts.ulam_term_tol) {
            break;
        }
        if (k < opts.depth) {
            term = op.apply(term);
            recenter(term);
        }
    }
    const std::size_t depth = dec.depth;
    const double last = dec.term_norms.back();
    const std::size_t half = depth / 2;
    const double earlier = dec.term_norms[depth - 1 - half];
    if (half > 0 && earlier > 0.0 && last > 0.0) {
        dec.contraction = std::pow(last / earlier, 1.0 / static_cast<double>(half));
    }
    dec.tail_estimate = dec.contraction < 1.0 ? last / (1.0 - dec.contraction) : std::numeric_limits<double>::infinity();
    const bool decayed = earlier > 0.0 && last * 10.0 <= earlier;
    if (!(last <= abs_tol || decayed)) {
        throw Error(ErrorCode::NonConvergent,
                    "|L^K v| = " + std::to_string(last) + " after K = " + std::to_string(depth) +
                        " did not decrease tenfold over the last K/2 applications");
    }

    dec.chi = std::move(chi);
    const auto& x_nodes = op.layout()->nodes();
    std::vector<double> mv(x_nodes.size());
    for (std::size_t j = 0; j < mv.size(); ++j) {
        mv[j] = dec.m(x_nodes[j], step(op.map(), x_nodes[j]));
    }
    dec.m_nodes = GridFunction(op.layout(), std::move(mv));

    const auto& chi_ref = dec.chi;
    auto m_branch = [&](double u, double x) { return v(u) + chi_ref(u) - chi_ref(x); };
    const auto lm = op.apply_branches(m_branch);
    dec.lm_residual = op.is_ulam() ? op.integrate([&lm](double x) { return std::abs(lm(x)); }) : lm.sup_norm();
    dec.cond_m2 = op.apply_branches([&](double u, double x) {
        const double mm = m_branch(u, x);
        return mm * mm;
    });
    dec.sigma2_m = op.integrate_pairs([&](double x, double tx) {
        const double mm = v(x) - chi_ref(tx) + chi_ref(x);
        return mm * mm;
    });
    return dec;
}

inline GordinDecomposition gordin_decompose(const TransferOperator& op, const ObservableSpec& v, std::size_t depth)
{
    DecompositionOptions opts;
    opts.depth = depth;
    return gordin_decompose(op, v, opts);
}

/// max over nodes of |v - m - chi∘T + chi|.
inline double coboundary_residual(const TransferOperator& op, const GordinDecomposition& dec)
{
    double worst = 0.0;
    const auto& nodes = op.layout()->nodes();
    for (std::size_t j = 0; j < nodes.size(); ++j) {
        const double x = nodes[j];
        const double tx = step(op.map(), x);
        worst = std::max(worst, std::abs(dec.v(x) - dec.m_nodes[j] - dec.chi(tx) + dec.chi(x)));
    }
    return worst;
}

struct VarianceEstimate {
    double value = 0.0;
    double std_error = 0.0;
    bool degenerate = false;           ///< estimate within 3 standard errors of 0
    std::vector<double> correlations;  ///< integral of v * v∘T^n, n = 0..N
    double correlation_sum = 0.0;      ///< sum over n = 1..N

    [[nodiscard]] Estimate estimate() const noexcept { return {value, std_error}; }
};

namespace detail {

inline bool degenerate_variance(double value, double se) noexcept
{
    return se > 0.0 ? std::abs(value) < 3.0 * se : std::abs(value) < 1e-14;
}

} // namespace detail

/**
 * Green-Kubo variance by quadrature: int v^2 + 2 sum_{n=1..N} int (L^n v) v,
 * using the adjoint relation int v·v∘T^n = int (L^n v)·v.
 */
inline VarianceEstimate green_kubo_sigma2(const TransferOperator& op, const ObservableSpec& v, std::size_t terms)
{
    VarianceEstimate out;
    auto pair_integral = [&](const GridFunction* f) {
        if (f == nullptr) {
            return op.integrate([&v](double x) { return v(x) * v(x); });
        }
        return op.integrate([&](double x) { return (*f)(x)*v(x); });
    };
    out.correlations.push_back(pair_integral(nullptr));
    if (terms > 0) {
        GridFunction power = op.apply_branches([&v](double u, double) { return v(u); });
        for (std::size_t n = 1; n <= terms; ++n) {
            out.correlations.push_back(pair_integral(&power));
            out.correlation_sum += out.correlations.back();
            if (n < terms) {
                power = op.apply(power);
            }
        }
    }
    out.value = out.correlations[0] + 2.0 * out.correlation_sum;
    out.degenerate = detail::degenerate_variance(out.value, 0.0);
    return out;
}

/**
 * Green-Kubo variance by Monte Carlo: each invariant start x contributes
 * v(x)^2 + 2 sum_{n=1..N} v(x) v(T^n x); the error bar is the standard
 * error of that per-sample statistic.
 */
inline VarianceEstimate green_kubo_sigma2_mc(const MapModel& map, const ObservableSpec& v, std::size_t terms,
                                             std::size_t samples, const RandomStream& rng)
{
    VarianceEstimate out;
    RunningStats total;
    std::vector<RunningStats> corr(terms + 1);
    std::vector<double> orbit_buf(terms + 1);
    for (std::size_t s = 0; s < samples; ++s) {
        InvariantOrbit gen(map, rng.split(tag_of("green-kubo"), s));
        gen.fill(orbit_buf);
        const double v0 = v(orbit_buf[0]);
        double stat = v0 * v0;
        corr[0].push(v0 * v0);
        for (std::size_t n = 1; n <= terms; ++n) {
            const double c = v0 * v(orbit_buf[n]);
            corr[n].push(c);
            stat += 2.0 * c;
        }
        total.push(stat);
    }
    for (std::size_t n = 0; n <= terms; ++n) {
        out.correlations.push_back(corr[n].mean());
        if (n > 0) {
            out.correlation_sum += corr[n].mean();
        }
    }
    out.value = total.mean();
    out.std_error = total.std_error();
    out.degenerate = detail::degenerate_variance(out.value, out.std_error);
    return out;
}

/// n^{-1} E[v_n^2] over invariant starts, v_n the Birkhoff sum of length n.
inline Estimate batch_sigma2(const MapModel& map, const ObservableSpec& v, std::size_t block, std::size_t samples,
                             const RandomStream& rng)
{
    if (block == 0) {
        throw Error(ErrorCode::RangeError, "block length must be positive");
    }
    RunningStats acc;
    for (std::size_t s = 0; s < samples; ++s) {
        InvariantOrbit gen(map, rng.split(tag_of("batch"), s));
        double sum = 0.0;
        for (std::size_t j = 0; j < block; ++j) {
            sum += v(gen.current());
            gen.advance();
        }
        acc.push(sum * sum / static_cast<double>(block));
    }
    return {acc.mean(), acc.std_error()};
}

struct VnkProfile {
    std::vector<double> values; ///< V_{n,k}, k = 0..n
    double clamped = 0.0;       ///< total magnitude removed to keep V nondecreasing

    [[nodiscard]] double max_deviation() const noexcept
    {
        const auto n = static_cast<double>(values.size() - 1);
        double worst = 0.0;
        for (std::size_t k = 0; k < values.size(); ++k) {
            worst = std::max(worst, std::abs(values[k] - static_cast<double>(k) / n));
        }
        return worst;
    }
};

/**
 * V_{n,k} = k/n + sigma^{-2} n^{-1} sum_{j<k} g(z_j), g(z) = L(m^2)(T z) - sigma^2,
 * along points z_0..z_n with z_{j+1} = T z_j (so T z_j is read from the next point).
 */
inline VnkProfile vnk_profile(const GordinDecomposition& dec, std::span<const double> points)
{
    if (!(dec.sigma2_m > 0.0)) {
        throw Error(ErrorCode::DegenerateVariance, "V_{n,k} needs a positive martingale variance");
    }
    if (points.size() < 2) {
        throw Error(ErrorCode::LengthError, "V_{n,k} needs at least two orbit points");
    }
    const std::size_t n = points.size() - 1;
    const double nn = static_cast<double>(n);
    VnkProfile out;
    out.values.resize(n + 1);
    out.values[0] = 0.0;
    double partial = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
        partial += dec.cond_m2(points[k]) - dec.sigma2_m;
        double value = static_cast<double>(k) / nn + partial / (dec.sigma2_m * nn);
        if (value < out.values[k - 1]) {
            out.clamped += out.values[k - 1] - value;
            value = out.values[k - 1];
        }
        out.values[k] = value;
    }
    return out;
}

/// V_{n,k} along the deterministic orbit of y0 (n+1 points).
inline VnkProfile vnk_profile(const TransferOperator& op, const GordinDecomposition& dec, double y0, std::size_t n)
{
    const auto path = orbit(op.map(), y0, n + 1);
    return vnk_profile(dec, path.values);
}

struct MomentRow {
    std::size_t n = 0;
    double ratio = 0.0; ///< |max_{j<=n} |v_j| |_q / sqrt(n)
};

/// Whether an L^q moment is covered by the maximal inequality for this map.
inline bool moment_admissible(const MapModel& map, double q) noexcept
{
    const OrderBound order = order_of(map);
    if (!(q >= 1.0)) {
        return false;
    }
    if (order.unbounded) {
        return true;
    }
    // need some p < p_max with q <= 2(p-1)
    return q < 2.0 * (order.p_max - 1.0) || (order.attained && q <= 2.0 * (order.p_max - 1.0));
}

/**
 * Monte Carlo L^q norms of the running maximum of |v_j| over invariant
 * starts, divided by sqrt(n), for each n of an increasing grid.
 */
inline std::vector<MomentRow> moment_scaling_check(const MapModel& map, const ObservableSpec& v, double q,
                                                   std::span<const std::size_t> grid, std::size_t samples,
                                                   const RandomStream& rng)
{
    if (!moment_admissible(map, q)) {
        throw Error(ErrorCode::AdmissibilityError,
                    "q = " + std::to_string(q) + " exceeds 2(p-1) for every admissible order of " + map.label());
    }
    if (grid.empty() || !std::is_sorted(grid.begin(), grid.end()) || grid.front() == 0) {
        throw Error(ErrorCode::RangeError, "n grid must be positive and increasing");
    }
    std::vector<double> acc(grid.size(), 0.0);
    const std::size_t n_max = grid.back();
    for (std::size_t s = 0; s < samples; ++s) {
        InvariantOrbit gen(map, rng.split(tag_of("moment"), s));
        double sum = 0.0;
        double running = 0.0;
        std::size_t g = 0;
        for (std::size_t j = 1; j <= n_max; ++j) {
            sum += v(gen.current());
            gen.advance();
            running = std::max(running, std::abs(sum));
            while (g < grid.size() && grid[g] == j) {
                acc[g] += std::pow(running, q);
                ++g;
            }
        }
    }
    std::vector<MomentRow> out;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double norm = std::pow(acc[g] / static_cast<double>(samples), 1.0 / q);
        out.push_back({grid[g], norm / std::sqrt(static_cast<double>(grid[g]))});
    }
    return out;
}

} // namespace wiplab
