#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wiplab/error.hpp"
#include "wiplab/paths.hpp"

namespace wiplab {

/// m points in R^d under the sup metric, stored row-major.
class PointCloud {
public:
    PointCloud() = default;

    PointCloud(std::size_t dimension, std::vector<double> coords)
        : dim_(dimension), coords_(std::move(coords))
    {
        if (dim_ == 0 || coords_.size() % dim_ != 0) {
            throw Error(ErrorCode::LengthError, "point coordinates must come in groups of the dimension");
        }
    }

    static PointCloud from_rows(const std::vector<std::vector<double>>& rows)
    {
        if (rows.empty()) {
            throw Error(ErrorCode::LengthError, "empty point list");
        }
        const std::size_t d = rows.front().size();
        std::vector<double> flat;
        flat.reserve(rows.size() * d);
        for (const auto& r : rows) {
            if (r.size() != d) {
                throw Error(ErrorCode::SizeMismatch, "all points must share one dimension");
            }
            flat.insert(flat.end(), r.begin(), r.end());
        }
        return PointCloud(d, std::move(flat));
    }

    [[nodiscard]] std::size_t dimension() const noexcept { return dim_; }
    [[nodiscard]] std::size_t size() const noexcept { return dim_ == 0 ? 0 : coords_.size() / dim_; }
    [[nodiscard]] std::span<const double> point(std::size_t i) const noexcept
    {
        return {coords_.data() + i * dim_, dim_};
    }
    [[nodiscard]] const std::vector<double>& coords() const noexcept { return coords_; }

    [[nodiscard]] double distance(std::size_t i, const PointCloud& other, std::size_t j) const noexcept
    {
        const double* a = coords_.data() + i * dim_;
        const double* b = other.coords_.data() + j * dim_;
        double d = 0.0;
        for (std::size_t k = 0; k < dim_; ++k) {
            d = std::max(d, std::abs(a[k] - b[k]));
        }
        return d;
    }

private:
    std::size_t dim_ = 0;
    std::vector<double> coords_;
};

/// k/8, k = 1..8 style grid: d equally spaced times ending at 1.
inline std::vector<double> dyadic_times(std::size_t d)
{
    if (d == 0) {
        throw Error(ErrorCode::RangeError, "projection dimension must be positive");
    }
    std::vector<double> t(d);
    for (std::size_t k = 0; k < d; ++k) {
        t[k] = static_cast<double>(k + 1) / static_cast<double>(d);
    }
    return t;
}

/// Values of each path at the given times.
inline PointCloud project_paths(std::span<const SamplePath> paths, std::span<const double> times)
{
    if (times.empty()) {
        throw Error(ErrorCode::RangeError, "projection needs at least one time");
    }
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (times[k] < 0.0 || times[k] > 1.0 || (k > 0 && !(times[k] > times[k - 1]))) {
            throw Error(ErrorCode::RangeError, "projection times must be strictly increasing in [0,1]");
        }
    }
    std::vector<double> flat;
    flat.reserve(paths.size() * times.size());
    for (const auto& p : paths) {
        for (double t : times) {
            flat.push_back(p(t));
        }
    }
    return PointCloud(times.size(), std::move(flat));
}

inline PointCloud project_paths(const PathEnsemble& ensemble, std::span<const double> times)
{
    return project_paths(std::span<const SamplePath>(ensemble.paths), times);
}

/// Projects gen(i), i < count, without keeping the paths (row i of the cloud is path i).
template <class Generator>
PointCloud project_generated(std::size_t count, std::span<const double> times, std::size_t workers,
                             Generator&& gen)
{
    if (times.empty()) {
        throw Error(ErrorCode::RangeError, "projection needs at least one time");
    }
    const std::size_t d = times.size();
    std::vector<double> flat(count * d);
    parallel_for(count, workers, [&](std::size_t i) {
        const SamplePath path = gen(i);
        for (std::size_t k = 0; k < d; ++k) {
            flat[i * d + k] = path(times[k]);
        }
    });
    return PointCloud(d, std::move(flat));
}

struct DistanceReport {
    std::string estimator;
    double value = 0.0;
    double matching_size = 0.0;
    double grid_size = 0.0;
    double std_error = 0.0;
};

namespace detail {

/// Number of atoms of mass 1/m that may be left uncoupled at level eps:
/// the largest k with k/m <= eps, using the same k/m doubles as the candidate grid.
inline std::size_t tolerated_atoms(double eps, std::size_t m) noexcept
{
    if (eps <= 0.0) {
        return 0;
    }
    const double md = static_cast<double>(m);
    if (eps >= 1.0) {
        return m;
    }
    auto k = static_cast<std::size_t>(std::floor(eps * md));
    k = std::min(k, m);
    while (k < m && static_cast<double>(k + 1) / md <= eps) {
        ++k;
    }
    while (k > 0 && static_cast<double>(k) / md > eps) {
        --k;
    }
    return k;
}

/// Bipartite graph whose rows keep their neighbours sorted by distance, so the
/// edge set at a threshold is a prefix of every row.
class ThresholdGraph {
public:
    ThresholdGraph(const PointCloud& p, const PointCloud& q, double max_threshold)
        : m_(p.size()), offsets_(p.size() + 1, 0)
    {
        std::vector<std::pair<double, std::size_t>> row;
        for (std::size_t i = 0; i < m_; ++i) {
            row.clear();
            for (std::size_t j = 0; j < m_; ++j) {
                const double d = p.distance(i, q, j);
                if (d <= max_threshold) {
                    row.emplace_back(d, j);
                }
            }
            std::sort(row.begin(), row.end());
            for (const auto& [d, j] : row) {
                dist_.push_back(d);
                cols_.push_back(j);
            }
            offsets_[i + 1] = cols_.size();
        }
    }

    [[nodiscard]] std::size_t size() const noexcept { return m_; }
    [[nodiscard]] const std::vector<double>& distances() const noexcept { return dist_; }

    /// Hopcroft–Karp maximum matching on edges with distance <= eps,
    /// starting from (and overwriting) the given matching, which must be valid at eps.
    std::size_t max_matching(double eps, std::vector<std::size_t>& match_row, std::vector<std::size_t>& match_col) const
    {
        const std::size_t none = std::numeric_limits<std::size_t>::max();
        std::vector<std::size_t> end(m_);
        for (std::size_t i = 0; i < m_; ++i) {
            const auto first = dist_.begin() + static_cast<std::ptrdiff_t>(offsets_[i]);
            const auto last = dist_.begin() + static_cast<std::ptrdiff_t>(offsets_[i + 1]);
            end[i] = static_cast<std::size_t>(std::upper_bound(first, last, eps) - dist_.begin());
        }
        std::size_t matched = 0;
        for (std::size_t i = 0; i < m_; ++i) {
            matched += match_row[i] != none ? 1 : 0;
        }
        std::vector<std::size_t> layer(m_);
        std::vector<std::size_t> queue(m_);
        std::vector<std::size_t> cursor(m_);
        std::vector<std::size_t> stack;
        const std::size_t inf = none;
        while (true) {
            // BFS layering from free rows
            std::size_t head = 0;
            std::size_t tail = 0;
            for (std::size_t i = 0; i < m_; ++i) {
                if (match_row[i] == none) {
                    layer[i] = 0;
                    queue[tail++] = i;
                } else {
                    layer[i] = inf;
                }
            }
            bool found = false;
            while (head < tail) {
                const std::size_t i = queue[head++];
                for (std::size_t k = offsets_[i]; k < end[i]; ++k) {
                    const std::size_t r = match_col[cols_[k]];
                    if (r == none) {
                        found = true;
                    } else if (layer[r] == inf) {
                        layer[r] = layer[i] + 1;
                        queue[tail++] = r;
                    }
                }
            }
            if (!found) {
                break;
            }
            // iterative DFS along the layers
            for (std::size_t i = 0; i < m_; ++i) {
                cursor[i] = offsets_[i];
            }
            for (std::size_t root = 0; root < m_; ++root) {
                if (match_row[root] != none) {
                    continue;
                }
                stack.assign(1, root);
                while (!stack.empty()) {
                    const std::size_t i = stack.back();
                    bool advanced = false;
                    while (cursor[i] < end[i]) {
                        const std::size_t j = cols_[cursor[i]];
                        const std::size_t r = match_col[j];
                        if (r == none) {
                            // augment along the stack
                            for (std::size_t s = stack.size(); s-- > 0;) {
                                const std::size_t row = stack[s];
                                const std::size_t col = cols_[cursor[row]];
                                match_row[row] = col;
                                match_col[col] = row;
                            }
                            ++matched;
                            stack.clear();
                            advanced = true;
                            break;
                        }
                        if (layer[r] == layer[i] + 1) {
                            stack.push_back(r);
                            advanced = true;
                            break;
                        }
                        ++cursor[i];
                    }
                    if (!advanced) {
                        layer[i] = inf;
                        stack.pop_back();
                        if (!stack.empty()) {
                            ++cursor[stack.back()];
                        }
                    }
                }
            }
        }
        return matched;
    }

private:
    std::size_t m_;
    std::vector<std::size_t> offsets_;
    std::vector<std::size_t> cols_;
    std::vector<double> dist_;
};

inline void check_equal_sizes(const PointCloud& p, const PointCloud& q)
{
    if (p.size() != q.size() || p.size() == 0) {
        throw Error(ErrorCode::SizeMismatch, "Prokhorov needs two nonempty clouds of equal size");
    }
    if (p.dimension() != q.dimension()) {
        throw Error(ErrorCode::SizeMismatch, "clouds have different dimensions");
    }
}

} // namespace detail

/**
 * Exact Prokhorov distance between the uniform empirical measures on P and Q.
 * Level eps is feasible when edges {d <= eps} admit a matching that leaves at
 * most floor(eps m) atoms uncoupled; the answer is the least feasible value in
 * {0} ∪ {d_ij} ∪ {k/m}.
 */
inline DistanceReport empirical_prokhorov(const PointCloud& p, const PointCloud& q)
{
    detail::check_equal_sizes(p, q);
    const std::size_t m = p.size();
    const double md = static_cast<double>(m);
    const std::size_t none = std::numeric_limits<std::size_t>::max();
    // eps = 1 is always feasible, so distances above 1 never matter
    const detail::ThresholdGraph graph(p, q, 1.0);

    std::vector<std::size_t> row(m, none);
    std::vector<std::size_t> col(m, none);
    std::vector<std::size_t> warm_row = row;
    std::vector<std::size_t> warm_col = col;
    std::size_t best_matching = 0;
    auto feasible = [&](double eps) {
        row = warm_row;
        col = warm_col;
        const std::size_t size = graph.max_matching(eps, row, col);
        const bool ok = size + detail::tolerated_atoms(eps, m) >= m;
        if (!ok) {
            warm_row = row;
            warm_col = col;
        } else {
            best_matching = size;
        }
        return ok;
    };

    // least k with k/m feasible (k = m always is)
    std::size_t lo = 0;
    std::size_t hi = m;
    if (feasible(0.0)) {
        return {"prokhorov", 0.0, md, 1.0, 0.0};
    }
    while (hi - lo > 1) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (feasible(static_cast<double>(mid) / md)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    const std::size_t k = hi;
    double answer = static_cast<double>(k) / md;
    const double lower = static_cast<double>(k - 1) / md;
    std::size_t answer_matching = best_matching;

    // inside ((k-1)/m, k/m) the tolerance is k-1 atoms; search the pairwise distances there
    std::vector<double> inner;
    for (double d : graph.distances()) {
        if (d > lower && d < answer) {
            inner.push_back(d);
        }
    }
    std::sort(inner.begin(), inner.end());
    inner.erase(std::unique(inner.begin(), inner.end()), inner.end());
    std::size_t a = 0;
    std::size_t b = inner.size();
    while (a < b) {
        const std::size_t mid = a + (b - a) / 2;
        if (feasible(inner[mid])) {
            b = mid;
            answer_matching = best_matching;
        } else {
            a = mid + 1;
        }
    }
    if (a < inner.size()) {
        answer = inner[a];
    }
    return {"prokhorov", answer, static_cast<double>(answer_matching), static_cast<double>(m + 1 + inner.size()),
            0.0};
}

/// Test oracle: all permutations against all candidate thresholds (m <= 8).
inline DistanceReport brute_force_prokhorov(const PointCloud& p, const PointCloud& q)
{
    detail::check_equal_sizes(p, q);
    const std::size_t m = p.size();
    if (m > 8) {
        throw Error(ErrorCode::TooLarge, "brute-force Prokhorov is limited to 8 atoms");
    }
    const double md = static_cast<double>(m);
    std::vector<double> grid{0.0};
    for (std::size_t k = 1; k <= m; ++k) {
        grid.push_back(static_cast<double>(k) / md);
    }
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            grid.push_back(p.distance(i, q, j));
        }
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best = std::numeric_limits<double>::infinity();
    do {
        for (double eps : grid) {
            if (eps >= best) {
                break;
            }
            std::size_t violations = 0;
            for (std::size_t i = 0; i < m; ++i) {
                violations += p.distance(i, q, perm[i]) > eps ? 1 : 0;
            }
            if (violations <= detail::tolerated_atoms(eps, m)) {
                best = eps;
                break;
            }
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return {"prokhorov-brute-force", best, md, static_cast<double>(grid.size()), 0.0};
}

/// sup_x |F_M(x) - F(x)|, evaluated on both sides of each jump.
template <class Cdf>
double kolmogorov_distance(std::vector<double> samples, Cdf&& reference_cdf)
{
    if (samples.empty()) {
        throw Error(ErrorCode::InsufficientData, "Kolmogorov distance needs at least one sample");
    }
    std::sort(samples.begin(), samples.end());
    const double count = static_cast<double>(samples.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = reference_cdf(samples[i]);
        const double above = static_cast<double>(i + 1) / count - f;
        const double below = f - static_cast<double>(i) / count;
        worst = std::max({worst, above, below});
    }
    return std::clamp(worst, 0.0, 1.0);
}

/// Prokhorov bound eps0^{q/(q+1)} implied by an L^q sup-distance bound eps0.
inline double prokhorov_bound_from_moment(double eps0, double q)
{
    if (!(eps0 > 0.0) || !(q >= 1.0)) {
        throw Error(ErrorCode::RangeError, "moment bound needs eps0 > 0 and q >= 1");
    }
    return std::pow(eps0, q / (q + 1.0));
}

struct KubiliusDiagnostics {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double eps1 = 0.0; ///< minimizer for lambda1
    double eps2 = 0.0; ///< minimizer for lambda2
    /// lambda |log lambda| with lambda = lambda1 + lambda2 and C = 1 (not certified)
    double bound = 0.0;
};

/**
 * Monte Carlo evaluation of the martingale-array rate quantities lambda_1 and
 * lambda_2 over an eps grid. Each row of `marray` is one orbit of m values;
 * `vnn` holds V_{n,n} for the same rows.
 */
inline KubiliusDiagnostics kubilius_diagnostics(const std::vector<std::vector<double>>& marray,
                                                std::span<const double> vnn, double sigma, double delta,
                                                std::span<const double> eps_grid)
{
    if (eps_grid.empty()) {
        throw Error(ErrorCode::GridError, "empty eps grid");
    }
    if (marray.empty() || vnn.size() != marray.size()) {
        throw Error(ErrorCode::SizeMismatch, "need one V_{n,n} value per m-orbit");
    }
    if (!(sigma > 0.0) || delta < 0.0 || delta > 1.0) {
        throw Error(ErrorCode::RangeError, "sigma must be positive and delta in [0,1]");
    }
    const std::size_t n = marray.front().size();
    const double scale = 1.0 / (std::sqrt(static_cast<double>(n)) * sigma);
    const double power = 2.0 + 2.0 * delta;
    const double rows = static_cast<double>(marray.size());

    KubiliusDiagnostics out;
    out.lambda1 = std::numeric_limits<double>::infinity();
    out.lambda2 = std::numeric_limits<double>::infinity();
    for (double eps : eps_grid) {
        double moment = 0.0;
        for (const auto& r : marray) {
            for (double mv : r) {
                const double xi = std::abs(mv) * scale;
                if (xi > eps) {
                    moment += std::pow(xi, power);
                }
            }
        }
        moment /= rows;
        const double l1 = std::sqrt(eps) + std::pow(moment, 1.0 / (3.0 + 2.0 * delta));
        if (l1 < out.lambda1) {
            out.lambda1 = l1;
            out.eps1 = eps;
        }
        std::size_t exceed = 0;
        for (double v : vnn) {
            exceed += std::abs(v - 1.0) > eps * eps ? 1 : 0;
        }
        const double l2 = eps + static_cast<double>(exceed) / rows;
        if (l2 < out.lambda2) {
            out.lambda2 = l2;
            out.eps2 = eps;
        }
    }
    const double lambda = out.lambda1 + out.lambda2;
    out.bound = lambda * std::abs(std::log(lambda));
    return out;
}

/// Distances CSV row: experiment, scale, estimator, value, aux1..aux3.
inline void write_distance_row(std::ostream& os, const std::string& experiment, double scale,
                               const DistanceReport& r)
{
    os << experiment << ',' << scale << ',' << r.estimator << ',' << r.value << ',' << r.matching_size << ','
       << r.grid_size << ',' << r.std_error << '\n';
}

} // namespace wiplab
