#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "wiplab/error.hpp"
#include "wiplab/maps.hpp"
#include "wiplab/observable.hpp"
#include "wiplab/parallel.hpp"
#include "wiplab/rng.hpp"

namespace wiplab {

/**
 * Piecewise-linear path on [0,1] through n+1 nodes. Nodes sit at j/n unless
 * explicit (nondecreasing) node times are given, as for time-changed paths.
 */
class SamplePath {
public:
    SamplePath() = default;

    explicit SamplePath(std::vector<double> values) : values_(std::move(values))
    {
        if (values_.size() < 2) {
            throw Error(ErrorCode::LengthError, "a path needs at least two nodes");
        }
    }

    SamplePath(std::vector<double> values, std::vector<double> times)
        : values_(std::move(values)), times_(std::move(times))
    {
        if (values_.size() < 2 || times_.size() != values_.size()) {
            throw Error(ErrorCode::LengthError, "time-change nodes must match the value nodes");
        }
        if (times_.front() != 0.0 || times_.back() != 1.0 || !std::is_sorted(times_.begin(), times_.end())) {
            throw Error(ErrorCode::RangeError, "time-change nodes must be nondecreasing from 0 to 1");
        }
    }

    [[nodiscard]] std::size_t grid_size() const noexcept { return values_.size() - 1; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }
    [[nodiscard]] const std::vector<double>& times() const noexcept { return times_; }
    [[nodiscard]] bool time_changed() const noexcept { return !times_.empty(); }

    [[nodiscard]] double time_at(std::size_t j) const noexcept
    {
        return times_.empty() ? static_cast<double>(j) / static_cast<double>(grid_size()) : times_[j];
    }

    [[nodiscard]] double operator()(double t) const noexcept
    {
        const std::size_t n = grid_size();
        if (t <= 0.0) {
            return values_.front();
        }
        if (t >= 1.0) {
            return values_.back();
        }
        if (times_.empty()) {
            const double s = t * static_cast<double>(n);
            const auto j = std::min(static_cast<std::size_t>(s), n - 1);
            const double frac = s - static_cast<double>(j);
            if (frac == 0.0) {
                return values_[j];
            }
            return values_[j] + frac * (values_[j + 1] - values_[j]);
        }
        // last node with time <= t, so repeated times resolve to the later node
        const auto it = std::upper_bound(times_.begin(), times_.end(), t);
        const auto j = static_cast<std::size_t>(it - times_.begin()) - 1;
        if (j >= n) {
            return values_.back();
        }
        const double a = times_[j];
        const double b = times_[j + 1];
        if (b <= a) {
            return values_[j + 1];
        }
        return values_[j] + (t - a) / (b - a) * (values_[j + 1] - values_[j]);
    }

private:
    std::vector<double> values_;
    std::vector<double> times_;
};

/// W_n(j/n) = n^{-1/2} sum_{i<j} v_i.
inline SamplePath build_wn(std::span<const double> vvalues, std::size_t n)
{
    if (n == 0 || vvalues.size() < n) {
        throw Error(ErrorCode::LengthError, "build_wn needs at least n observable values");
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    std::vector<double> nodes(n + 1);
    double sum = 0.0;
    nodes[0] = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        sum += vvalues[j];
        nodes[j + 1] = sum * scale;
    }
    return SamplePath(std::move(nodes));
}

/**
 * Time-changed martingale path: node k sits at time V_k / V_n with value
 * n^{-1/2} sigma^{-1} sum_{j<=k} m_j (mvalues in reversed-time order).
 */
inline SamplePath build_xn(std::span<const double> mvalues, std::span<const double> vnk, double sigma)
{
    const std::size_t n = mvalues.size();
    if (n == 0 || vnk.size() != n + 1) {
        throw Error(ErrorCode::LengthError, "build_xn needs n martingale values and n+1 V values");
    }
    if (!(vnk[n] > 0.0) || !(sigma > 0.0)) {
        throw Error(ErrorCode::DegenerateVariance, "V_{n,n} and sigma must be positive");
    }
    const double scale = 1.0 / (std::sqrt(static_cast<double>(n)) * sigma);
    std::vector<double> values(n + 1);
    std::vector<double> times(n + 1);
    double sum = 0.0;
    values[0] = 0.0;
    times[0] = vnk[0] / vnk[n];
    for (std::size_t k = 1; k <= n; ++k) {
        if (vnk[k] < vnk[k - 1]) {
            throw Error(ErrorCode::RangeError, "V_{n,k} must be nondecreasing");
        }
        sum += mvalues[k - 1];
        values[k] = sum * scale;
        times[k] = vnk[k] / vnk[n];
    }
    times[0] = 0.0;
    times[n] = 1.0;
    return SamplePath(std::move(values), std::move(times));
}

/// g(u)(t) = u(1) - u(1-t) on the uniform node grid.
inline SamplePath time_reverse_g(const SamplePath& u)
{
    if (u.time_changed()) {
        throw Error(ErrorCode::TimeChangedPath, "time reversal needs a uniform grid");
    }
    const auto& v = u.values();
    const std::size_t n = u.grid_size();
    std::vector<double> out(n + 1);
    for (std::size_t j = 0; j <= n; ++j) {
        out[j] = v[n] - v[n - j];
    }
    return SamplePath(std::move(out));
}

/// Brownian motion with variance sigma2 on n steps: node j+1 = node j + sqrt(sigma2/n) Z_j.
inline SamplePath brownian_path(double sigma2, std::size_t n, RandomStream& rng)
{
    if (sigma2 < 0.0 || n == 0) {
        throw Error(ErrorCode::RangeError, "brownian_path needs sigma2 >= 0 and n >= 1");
    }
    const double s = std::sqrt(sigma2 / static_cast<double>(n));
    std::vector<double> nodes(n + 1);
    nodes[0] = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        nodes[j + 1] = nodes[j] + s * rng.normal();
    }
    return SamplePath(std::move(nodes));
}

/// P(sup_{[0,1]} W >= a) = 2 P(W(1) >= a) for Brownian motion of variance sigma2.
inline double brownian_sup_tail(double a, double sigma2)
{
    if (a < 0.0 || !(sigma2 > 0.0)) {
        throw Error(ErrorCode::RangeError, "brownian_sup_tail needs a >= 0 and sigma2 > 0");
    }
    return std::erfc(a / std::sqrt(2.0 * sigma2));
}

struct PathFunctionals {
    double terminal = 0.0;
    double sup = 0.0;
    double inf = 0.0;
    double sup_abs = 0.0;
    double integral = 0.0;
    std::vector<double> at_times;
};

/// Exact functionals of the piecewise-linear interpolant.
inline PathFunctionals path_functionals(const SamplePath& u, std::span<const double> times = {})
{
    const auto& v = u.values();
    PathFunctionals out;
    out.terminal = v.back();
    out.sup = *std::max_element(v.begin(), v.end());
    out.inf = *std::min_element(v.begin(), v.end());
    out.sup_abs = std::max(std::abs(out.sup), std::abs(out.inf));
    for (std::size_t j = 0; j + 1 < v.size(); ++j) {
        out.integral += 0.5 * (u.time_at(j + 1) - u.time_at(j)) * (v[j] + v[j + 1]);
    }
    for (double t : times) {
        out.at_times.push_back(u(t));
    }
    return out;
}

struct EnsembleDescriptor {
    std::string map;
    std::string observable;
    std::size_t n = 0;
    double epsilon = 0.0; ///< 0 when not a fast-slow ensemble
    std::string role;
};

/// Collection of paths regenerable bit-for-bit from (descriptor, seed).
struct PathEnsemble {
    EnsembleDescriptor descriptor;
    std::uint64_t seed = 0;
    std::vector<SamplePath> paths;

    [[nodiscard]] std::size_t size() const noexcept { return paths.size(); }

    /// CSV (path_id, node_index, t, value).
    void write_csv(std::ostream& os) const
    {
        os << "path_id,node_index,t,value\n";
        os.precision(17);
        for (std::size_t i = 0; i < paths.size(); ++i) {
            const auto& p = paths[i];
            for (std::size_t j = 0; j <= p.grid_size(); ++j) {
                os << i << ',' << j << ',' << p.time_at(j) << ',' << p.values()[j] << '\n';
            }
        }
    }
};

/// Stream for path `index` of the ensemble playing `role` at scale key `scale`.
inline RandomStream path_stream(std::uint64_t seed, std::string_view role, std::size_t scale, std::size_t index)
{
    return RandomStream(seed, hash_combine(tag_of(role), scale), index);
}

/// Path i of the W_n ensemble: orbit from the "dynamics" stream keyed by scale_key.
inline SamplePath wn_path(const MapModel& map, const ObservableSpec& v, std::size_t n, std::uint64_t seed,
                          std::size_t scale_key, std::size_t i)
{
    InvariantOrbit gen(map, path_stream(seed, "dynamics", scale_key, i));
    std::vector<double> vv(n);
    for (std::size_t j = 0; j < n; ++j) {
        vv[j] = v(gen.current());
        gen.advance();
    }
    return build_wn(vv, n);
}

/// Path i of the Brownian reference ensemble ("reference" stream).
inline SamplePath reference_brownian_path(double sigma2, std::size_t n, std::uint64_t seed, std::size_t scale_key,
                                          std::size_t i)
{
    RandomStream rng = path_stream(seed, "reference", scale_key, i);
    return brownian_path(sigma2, n, rng);
}

/// M paths W_n, each from an independent invariant start.
inline PathEnsemble wn_ensemble(const MapModel& map, const ObservableSpec& v, std::size_t n, std::size_t count,
                                std::uint64_t seed, std::size_t scale_key, std::size_t workers = 1)
{
    PathEnsemble out;
    out.descriptor = {map.label(), v.label(), n, 0.0, "dynamics"};
    out.seed = seed;
    out.paths.resize(count);
    parallel_for(count, workers, [&](std::size_t i) { out.paths[i] = wn_path(map, v, n, seed, scale_key, i); });
    return out;
}

/// M Brownian paths with variance sigma2 on an n-step grid.
inline PathEnsemble brownian_ensemble(double sigma2, std::size_t n, std::size_t count, std::uint64_t seed,
                                      std::size_t scale_key, std::size_t workers = 1)
{
    PathEnsemble out;
    out.descriptor = {"brownian", "sigma2=" + std::to_string(sigma2), n, 0.0, "reference"};
    out.seed = seed;
    out.paths.resize(count);
    parallel_for(count, workers,
                 [&](std::size_t i) { out.paths[i] = reference_brownian_path(sigma2, n, seed, scale_key, i); });
    return out;
}

} // namespace wiplab
