#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "wiplab/error.hpp"
#include "wiplab/maps.hpp"

namespace wiplab {

struct UlamOptions {
    std::size_t cells = std::size_t{1} << 14;
    /// Right end of the first cell [0, x_min]; the left half is graded geometrically above it.
    double x_min = 1e-10;
};

/// Compressed sparse rows with double weights.
struct SparseRows {
    std::vector<std::size_t> offsets{0};
    std::vector<std::size_t> columns;
    std::vector<double> weights;

    [[nodiscard]] std::size_t rows() const noexcept { return offsets.size() - 1; }
    [[nodiscard]] std::size_t nonzeros() const noexcept { return columns.size(); }
};

/**
 * Ulam discretization of an interval map: cells C_i and the row-stochastic
 * matrix P_ij = |C_i ∩ T^{-1} C_j| / |C_i|. Its stationary vector gives the
 * cell masses of the invariant measure, and the time reversal
 * R_ji = p_i P_ij / p_j is the discrete invariant-measure transfer operator.
 *
 * Only the LSV family is supported: the left half is graded geometrically
 * toward the neutral fixed point, the right half is uniform.
 */
class UlamModel {
public:
    static UlamModel build(const MapModel& map, const UlamOptions& opts = {})
    {
        if (map.kind() != MapKind::LSV) {
            throw Error(ErrorCode::RangeError, "Ulam model is implemented for the LSV family only");
        }
        if (opts.cells < 8 || opts.cells % 2 != 0) {
            throw Error(ErrorCode::GridError, "Ulam cell count must be even and at least 8");
        }
        if (!(opts.x_min > 0.0 && opts.x_min < 0.25)) {
            throw Error(ErrorCode::GridError, "Ulam x_min must lie in (0, 1/4)");
        }
        UlamModel model;
        model.build_partition(opts);
        model.build_transitions(map);
        model.solve_stationary();
        model.build_reversal();
        return model;
    }

    [[nodiscard]] std::size_t cells() const noexcept { return centers_.size(); }
    [[nodiscard]] const std::vector<double>& boundaries() const noexcept { return bounds_; }
    [[nodiscard]] const std::vector<double>& centers() const noexcept { return centers_; }
    [[nodiscard]] const std::vector<double>& masses() const noexcept { return mass_; }
    [[nodiscard]] const SparseRows& transitions() const noexcept { return forward_; }
    [[nodiscard]] const SparseRows& reversal() const noexcept { return reverse_; }

    [[nodiscard]] double width(std::size_t i) const noexcept { return bounds_[i + 1] - bounds_[i]; }
    /// Invariant density estimate on cell i.
    [[nodiscard]] double density(std::size_t i) const noexcept { return mass_[i] / width(i); }

    [[nodiscard]] std::size_t cell_of(double x) const noexcept
    {
        const auto it = std::upper_bound(bounds_.begin(), bounds_.end(), x);
        if (it == bounds_.begin()) {
            return 0;
        }
        return std::min(static_cast<std::size_t>(it - bounds_.begin()) - 1, cells() - 1);
    }

    [[nodiscard]] double max_row_sum_error() const noexcept
    {
        double worst = 0.0;
        for (std::size_t i = 0; i < forward_.rows(); ++i) {
            double s = 0.0;
            for (std::size_t k = forward_.offsets[i]; k < forward_.offsets[i + 1]; ++k) {
                s += forward_.weights[k];
            }
            worst = std::max(worst, std::abs(s - 1.0));
        }
        return worst;
    }

    /// CSV dump (cell, left, right, density).
    void write_csv(std::ostream& os) const
    {
        os << "cell,left,right,density\n";
        os.precision(17);
        for (std::size_t i = 0; i < cells(); ++i) {
            os << i << ',' << bounds_[i] << ',' << bounds_[i + 1] << ',' << density(i) << '\n';
        }
    }

private:
    void build_partition(const UlamOptions& opts)
    {
        const std::size_t half = opts.cells / 2;
        bounds_.clear();
        bounds_.push_back(0.0);
        // cells [0,x_min], then half-1 geometric cells up to 1/2
        const double ratio = std::log(0.5 / opts.x_min) / static_cast<double>(half - 1);
        for (std::size_t k = 0; k < half - 1; ++k) {
            bounds_.push_back(opts.x_min * std::exp(ratio * static_cast<double>(k)));
        }
        bounds_.push_back(0.5);
        for (std::size_t k = 1; k <= half; ++k) {
            bounds_.push_back(0.5 + 0.5 * static_cast<double>(k) / static_cast<double>(half));
        }
        bounds_.back() = 1.0;
        centers_.resize(bounds_.size() - 1);
        for (std::size_t i = 0; i < centers_.size(); ++i) {
            centers_[i] = 0.5 * (bounds_[i] + bounds_[i + 1]);
        }
    }

    static double left_inverse(double c, double gamma, double scale) noexcept
    {
        if (c <= 0.0) {
            return 0.0;
        }
        if (c >= 1.0) {
            return 0.5;
        }
        // x + scale x^{1+gamma} = c is convex increasing: Newton from x = c decreases monotonically
        double x = std::min(c, 0.5);
        for (int it = 0; it < 200; ++it) {
            const double xg = std::pow(x, gamma);
            const double f = x * (1.0 + scale * xg) - c;
            const double df = 1.0 + scale * (1.0 + gamma) * xg;
            const double next = x - f / df;
            if (!(next < x) || x - next <= 1e-17 * x) {
                return std::max(next, 0.0);
            }
            x = next;
        }
        return x;
    }

    void build_transitions(const MapModel& map)
    {
        const double g = map.gamma();
        const double s = map.lsv_scale();
        forward_ = SparseRows{};
        for (std::size_t i = 0; i < cells(); ++i) {
            const double a = bounds_[i];
            const double b = bounds_[i + 1];
            const bool left = b <= 0.5;
            const double img_lo = left ? lsv_left_branch(a, g, s) : 2.0 * a - 1.0;
            const double img_hi = left ? std::min(1.0, lsv_left_branch(b, g, s)) : 2.0 * b - 1.0;
            auto inverse = [&](double c) {
                if (c <= img_lo) {
                    return a;
                }
                if (c >= img_hi) {
                    return b;
                }
                return left ? left_inverse(c, g, s) : 0.5 * (c + 1.0);
            };
            const std::size_t row_start = forward_.columns.size();
            double total = 0.0;
            std::size_t j = cell_of(img_lo);
            double pre_lo = a;
            for (; j < cells() && bounds_[j] < img_hi; ++j) {
                const double hi = std::min(img_hi, bounds_[j + 1]);
                const double pre_hi = inverse(hi);
                const double frac = (pre_hi - pre_lo) / (b - a);
                if (frac > 0.0) {
                    forward_.columns.push_back(j);
                    forward_.weights.push_back(frac);
                    total += frac;
                }
                pre_lo = pre_hi;
            }
            if (total <= 0.0) {
                throw Error(ErrorCode::GridError, "Ulam cell with empty image");
            }
            for (std::size_t k = row_start; k < forward_.columns.size(); ++k) {
                forward_.weights[k] /= total;
            }
            forward_.offsets.push_back(forward_.columns.size());
        }
    }

    void solve_stationary()
    {
        const auto n = static_cast<Eigen::Index>(cells());
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(forward_.nonzeros() + 2 * cells());
        // (P^T - I) p = 0 with the last equation replaced by sum(p) = 1
        for (std::size_t i = 0; i < cells(); ++i) {
            for (std::size_t k = forward_.offsets[i]; k < forward_.offsets[i + 1]; ++k) {
                const auto row = static_cast<Eigen::Index>(forward_.columns[k]);
                if (row != n - 1) {
                    trips.emplace_back(row, static_cast<Eigen::Index>(i), forward_.weights[k]);
                }
            }
        }
        for (Eigen::Index i = 0; i < n - 1; ++i) {
            trips.emplace_back(i, i, -1.0);
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            trips.emplace_back(n - 1, i, 1.0);
        }
        Eigen::SparseMatrix<double> a(n, n);
        a.setFromTriplets(trips.begin(), trips.end());
        a.makeCompressed();
        Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
        lu.compute(a);
        if (lu.info() != Eigen::Success) {
            throw Error(ErrorCode::NonConvergent, "Ulam stationary system factorization failed");
        }
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
        rhs(n - 1) = 1.0;
        const Eigen::VectorXd p = lu.solve(rhs);
        mass_.assign(cells(), 0.0);
        for (Eigen::Index i = 0; i < n; ++i) {
            mass_[static_cast<std::size_t>(i)] = std::max(0.0, p(i));
        }
        normalize_mass();
        // a few power steps p <- pP remove the residual left by the direct solve
        std::vector<double> next(cells());
        for (int sweep = 0; sweep < 4; ++sweep) {
            std::fill(next.begin(), next.end(), 0.0);
            for (std::size_t i = 0; i < cells(); ++i) {
                for (std::size_t k = forward_.offsets[i]; k < forward_.offsets[i + 1]; ++k) {
                    next[forward_.columns[k]] += mass_[i] * forward_.weights[k];
                }
            }
            mass_.swap(next);
            normalize_mass();
        }
    }

    void normalize_mass()
    {
        double total = 0.0;
        for (double m : mass_) {
            total += m;
        }
        for (double& m : mass_) {
            m /= total;
        }
    }

    void build_reversal()
    {
        std::vector<std::size_t> counts(cells() + 1, 0);
        for (std::size_t k = 0; k < forward_.nonzeros(); ++k) {
            ++counts[forward_.columns[k] + 1];
        }
        reverse_ = SparseRows{};
        reverse_.offsets.assign(cells() + 1, 0);
        for (std::size_t j = 0; j < cells(); ++j) {
            reverse_.offsets[j + 1] = reverse_.offsets[j] + counts[j + 1];
        }
        reverse_.columns.assign(forward_.nonzeros(), 0);
        reverse_.weights.assign(forward_.nonzeros(), 0.0);
        std::vector<std::size_t> fill(reverse_.offsets.begin(), reverse_.offsets.end() - 1);
        for (std::size_t i = 0; i < cells(); ++i) {
            for (std::size_t k = forward_.offsets[i]; k < forward_.offsets[i + 1]; ++k) {
                const std::size_t j = forward_.columns[k];
                const std::size_t slot = fill[j]++;
                reverse_.columns[slot] = i;
                reverse_.weights[slot] = mass_[j] > 0.0 ? mass_[i] * forward_.weights[k] / mass_[j] : 0.0;
            }
        }
    }

    UlamModel() = default;

    std::vector<double> bounds_;
    std::vector<double> centers_;
    SparseRows forward_;
    SparseRows reverse_;
    std::vector<double> mass_;
};

} // namespace wiplab
