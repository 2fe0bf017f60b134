#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <ostream>
#include <vector>

#include "wiplab/error.hpp"

namespace wiplab {

/// Node positions shared by all functions living on one operator grid.
class GridLayout {
public:
    /// Uniform nodes j/N, j = 0..N.
    static std::shared_ptr<const GridLayout> uniform(std::size_t cells)
    {
        if (cells == 0) {
            throw Error(ErrorCode::GridError, "grid needs at least one cell");
        }
        std::vector<double> nodes(cells + 1);
        for (std::size_t j = 0; j <= cells; ++j) {
            nodes[j] = static_cast<double>(j) / static_cast<double>(cells);
        }
        return std::shared_ptr<const GridLayout>(new GridLayout(std::move(nodes), true));
    }

    /// Arbitrary strictly increasing nodes (Ulam cell centres, for instance).
    static std::shared_ptr<const GridLayout> custom(std::vector<double> nodes)
    {
        if (nodes.size() < 2 || !std::is_sorted(nodes.begin(), nodes.end()) ||
            std::adjacent_find(nodes.begin(), nodes.end()) != nodes.end()) {
            throw Error(ErrorCode::GridError, "custom grid nodes must be strictly increasing, at least two");
        }
        return std::shared_ptr<const GridLayout>(new GridLayout(std::move(nodes), false));
    }

    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
    [[nodiscard]] std::size_t cells() const noexcept { return nodes_.size() - 1; }
    [[nodiscard]] double node(std::size_t j) const noexcept { return nodes_[j]; }
    [[nodiscard]] const std::vector<double>& nodes() const noexcept { return nodes_; }
    [[nodiscard]] bool is_uniform() const noexcept { return uniform_; }

    /// Index j of the interval [node_j, node_{j+1}] containing x (clamped to the grid).
    [[nodiscard]] std::size_t locate(double x) const noexcept
    {
        const std::size_t last = nodes_.size() - 2;
        if (uniform_) {
            const double s = x * static_cast<double>(cells());
            if (!(s > 0.0)) {
                return 0;
            }
            return std::min(static_cast<std::size_t>(s), last);
        }
        const auto it = std::upper_bound(nodes_.begin(), nodes_.end(), x);
        if (it == nodes_.begin()) {
            return 0;
        }
        return std::min(static_cast<std::size_t>(it - nodes_.begin()) - 1, last);
    }

private:
    GridLayout(std::vector<double> nodes, bool uniform) : nodes_(std::move(nodes)), uniform_(uniform) {}

    std::vector<double> nodes_;
    bool uniform_;
};

/// Piecewise-linear function through values at the nodes of a GridLayout.
class GridFunction {
public:
    GridFunction() = default;

    GridFunction(std::shared_ptr<const GridLayout> layout, std::vector<double> values)
        : layout_(std::move(layout)), values_(std::move(values))
    {
        if (!layout_ || values_.size() != layout_->size()) {
            throw Error(ErrorCode::GridMismatch, "value count does not match grid");
        }
    }

    static GridFunction zeros(std::shared_ptr<const GridLayout> layout)
    {
        std::vector<double> v(layout->size(), 0.0);
        return GridFunction(std::move(layout), std::move(v));
    }

    template <class F>
    static GridFunction sample(std::shared_ptr<const GridLayout> layout, F&& f)
    {
        std::vector<double> v(layout->size());
        for (std::size_t j = 0; j < v.size(); ++j) {
            v[j] = f(layout->node(j));
        }
        return GridFunction(std::move(layout), std::move(v));
    }

    [[nodiscard]] const std::shared_ptr<const GridLayout>& layout() const noexcept { return layout_; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }
    [[nodiscard]] std::vector<double>& values() noexcept { return values_; }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] double operator[](std::size_t j) const noexcept { return values_[j]; }

    /// Linear interpolant; constant extension outside the node range.
    [[nodiscard]] double operator()(double x) const noexcept
    {
        const auto& nodes = layout_->nodes();
        if (x <= nodes.front()) {
            return values_.front();
        }
        if (x >= nodes.back()) {
            return values_.back();
        }
        const std::size_t j = layout_->locate(x);
        const double a = nodes[j];
        const double b = nodes[j + 1];
        const double t = (x - a) / (b - a);
        return values_[j] + t * (values_[j + 1] - values_[j]);
    }

    [[nodiscard]] double sup_norm() const noexcept
    {
        double m = 0.0;
        for (double v : values_) {
            m = std::max(m, std::abs(v));
        }
        return m;
    }

    [[nodiscard]] bool same_grid(const GridFunction& other) const noexcept
    {
        return layout_ == other.layout_ ||
               (layout_ && other.layout_ && layout_->nodes() == other.layout_->nodes());
    }

    GridFunction& operator+=(const GridFunction& other)
    {
        if (!same_grid(other)) {
            throw Error(ErrorCode::GridMismatch, "adding functions on different grids");
        }
        for (std::size_t j = 0; j < values_.size(); ++j) {
            values_[j] += other.values_[j];
        }
        return *this;
    }

    /// CSV dump with header (node,value).
    void write_csv(std::ostream& os) const
    {
        os << "node,value\n";
        os.precision(17);
        for (std::size_t j = 0; j < values_.size(); ++j) {
            os << layout_->node(j) << ',' << values_[j] << '\n';
        }
    }

private:
    std::shared_ptr<const GridLayout> layout_;
    std::vector<double> values_;
};

} // namespace wiplab
