#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wiplab/distances.hpp"
#include "wiplab/error.hpp"
#include "wiplab/fastslow.hpp"
#include "wiplab/maps.hpp"
#include "wiplab/observable.hpp"
#include "wiplab/paths.hpp"
#include "wiplab/rates.hpp"
#include "wiplab/stats.hpp"
#include "wiplab/transfer.hpp"

namespace wiplab {

inline constexpr const char* version_tag = "wiplab-1.0.0";

/// Flat key = value text with dotted keys; '#' starts a comment.
class Config {
public:
    static Config parse(const std::string& text)
    {
        Config cfg;
        std::istringstream in(text);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) {
                line.erase(hash);
            }
            const std::string body = trim(line);
            if (body.empty()) {
                continue;
            }
            const auto eq = body.find('=');
            if (eq == std::string::npos) {
                throw Error(ErrorCode::ConfigError, "line " + std::to_string(lineno) + ": expected key = value");
            }
            const std::string key = trim(body.substr(0, eq));
            if (key.empty()) {
                throw Error(ErrorCode::ConfigError, "line " + std::to_string(lineno) + ": empty key");
            }
            cfg.entries_[key] = trim(body.substr(eq + 1));
        }
        return cfg;
    }

    static Config load(const std::filesystem::path& path)
    {
        std::ifstream in(path);
        if (!in) {
            throw Error(ErrorCode::ConfigError, "cannot read config file " + path.string());
        }
        std::stringstream buf;
        buf << in.rdbuf();
        return parse(buf.str());
    }

    void set(const std::string& key, const std::string& value) { entries_[key] = value; }
    [[nodiscard]] bool has(const std::string& key) const { return entries_.count(key) != 0; }
    [[nodiscard]] const std::map<std::string, std::string>& entries() const noexcept { return entries_; }

    [[nodiscard]] std::string get(const std::string& key, const std::string& fallback) const
    {
        const auto it = entries_.find(key);
        return it == entries_.end() ? fallback : it->second;
    }

    [[nodiscard]] double get_double(const std::string& key, double fallback) const
    {
        const auto it = entries_.find(key);
        return it == entries_.end() ? fallback : to_double(key, it->second);
    }

    [[nodiscard]] std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const
    {
        const auto it = entries_.find(key);
        return it == entries_.end() ? fallback : to_u64(key, it->second);
    }

    [[nodiscard]] std::vector<double> get_doubles(const std::string& key) const
    {
        std::vector<double> out;
        const auto it = entries_.find(key);
        if (it != entries_.end()) {
            for (const auto& item : split(it->second)) {
                out.push_back(to_double(key, item));
            }
        }
        return out;
    }

    [[nodiscard]] std::vector<std::uint64_t> get_u64s(const std::string& key) const
    {
        std::vector<std::uint64_t> out;
        const auto it = entries_.find(key);
        if (it != entries_.end()) {
            for (const auto& item : split(it->second)) {
                out.push_back(to_u64(key, item));
            }
        }
        return out;
    }

private:
    static std::string trim(const std::string& s)
    {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) {
            return {};
        }
        const auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    }

    static std::vector<std::string> split(const std::string& s)
    {
        std::vector<std::string> out;
        std::string item;
        std::istringstream in(s);
        while (std::getline(in, item, ',')) {
            item = trim(item);
            if (!item.empty()) {
                out.push_back(item);
            }
        }
        return out;
    }

    // accepts plain numbers and 2^k / 2^-k
    static double to_double(const std::string& key, const std::string& text)
    {
        try {
            const auto caret = text.find('^');
            if (caret != std::string::npos) {
                const double base = std::stod(text.substr(0, caret));
                const double expo = std::stod(text.substr(caret + 1));
                return std::pow(base, expo);
            }
            std::size_t used = 0;
            const double v = std::stod(text, &used);
            if (used != text.size()) {
                throw std::invalid_argument(text);
            }
            return v;
        } catch (const std::exception&) {
            throw Error(ErrorCode::ConfigError, key + ": not a number: '" + text + "'");
        }
    }

    static std::uint64_t to_u64(const std::string& key, const std::string& text)
    {
        const double v = to_double(key, text);
        if (text.find('^') == std::string::npos) {
            try {
                std::size_t used = 0;
                const unsigned long long u = std::stoull(text, &used, 0);
                if (used == text.size() && text.front() != '-') {
                    return u;
                }
            } catch (const std::exception&) {
            }
        }
        if (!(v >= 0.0) || v != std::floor(v) || v > 1.8e19) {
            throw Error(ErrorCode::ConfigError, key + ": not a nonnegative integer: '" + text + "'");
        }
        return static_cast<std::uint64_t>(v);
    }

    std::map<std::string, std::string> entries_;
};

enum class ExperimentKind { Clt, WipRate, DecompCheck, VnkScaling, FastslowRate, ProkhorovSelftest, RateTable };

inline std::string to_string(ExperimentKind k)
{
    switch (k) {
    case ExperimentKind::Clt: return "clt";
    case ExperimentKind::WipRate: return "wip-rate";
    case ExperimentKind::DecompCheck: return "decomp-check";
    case ExperimentKind::VnkScaling: return "vnk-scaling";
    case ExperimentKind::FastslowRate: return "fastslow-rate";
    case ExperimentKind::ProkhorovSelftest: return "prokhorov-selftest";
    case ExperimentKind::RateTable: return "rate-table";
    }
    return "?";
}

inline ExperimentKind parse_experiment_kind(const std::string& s)
{
    for (auto k : {ExperimentKind::Clt, ExperimentKind::WipRate, ExperimentKind::DecompCheck,
                   ExperimentKind::VnkScaling, ExperimentKind::FastslowRate, ExperimentKind::ProkhorovSelftest,
                   ExperimentKind::RateTable}) {
        if (to_string(k) == s) {
            return k;
        }
    }
    throw Error(ErrorCode::ConfigError, "experiment: unknown kind '" + s + "'");
}

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::Clt;
    std::string map_kind = "doubling";
    double gamma = 0.25;
    std::string observable_kind = "x";
    double theta = 1.0;
    std::vector<double> coeffs;
    std::vector<std::uint64_t> n_grid;
    std::vector<double> eps_grid;
    std::uint64_t ensemble = 4096;
    std::uint64_t dimension = 8;
    std::uint64_t seed = 1;
    std::string output = "out";

    std::uint64_t depth = 60;
    std::uint64_t grid_cells = default_grid_cells;
    std::uint64_t gk_terms = 40;
    std::uint64_t batch_block = 1024;
    std::uint64_t batch_samples = 4096;

    std::uint64_t selftest_instances = 500;

    std::vector<double> gammas;
    std::vector<double> p_values;
    std::string rate_quantity = "wip";

    std::string drift = "zero";
    double drift_param = 0.0;
    std::string diffusion = "one";
    double diffusion_param = 1.0;
    double xi = 0.0;
    double coupling = 0.0;
    double perturbation = 0.0;
    double perturbation_bound = 0.0;

    Config source;

    static ExperimentConfig from(const Config& c)
    {
        ExperimentConfig e;
        e.source = c;
        e.kind = parse_experiment_kind(c.get("experiment", "clt"));
        e.map_kind = c.get("map.kind", e.map_kind);
        e.gamma = c.get_double("map.gamma", e.gamma);
        e.observable_kind = c.get("observable.kind", e.observable_kind);
        e.theta = c.get_double("observable.theta", e.theta);
        e.coeffs = c.get_doubles("observable.coeffs");
        e.n_grid = c.get_u64s("scales.n");
        e.eps_grid = c.get_doubles("scales.eps");
        e.ensemble = c.get_u64("ensemble.size", e.ensemble);
        e.dimension = c.get_u64("projection.dim", e.dimension);
        e.seed = c.get_u64("seed", e.seed);
        e.output = c.get("output.dir", e.output);
        e.depth = c.get_u64("decomp.depth", e.depth);
        e.grid_cells = c.get_u64("decomp.grid_cells", e.grid_cells);
        e.gk_terms = c.get_u64("decomp.gk_terms", e.gk_terms);
        e.batch_block = c.get_u64("decomp.batch_block", e.batch_block);
        e.batch_samples = c.get_u64("decomp.batch_samples", e.batch_samples);
        e.selftest_instances = c.get_u64("selftest.instances", e.selftest_instances);
        e.gammas = c.get_doubles("rates.gammas");
        e.p_values = c.get_doubles("rates.p");
        e.rate_quantity = c.get("rates.quantity", e.rate_quantity);
        e.drift = c.get("fastslow.drift", e.drift);
        e.drift_param = c.get_double("fastslow.drift_param", e.drift_param);
        e.diffusion = c.get("fastslow.diffusion", e.diffusion);
        e.diffusion_param = c.get_double("fastslow.diffusion_param", e.diffusion_param);
        e.xi = c.get_double("fastslow.xi", e.xi);
        e.coupling = c.get_double("fastslow.coupling", e.coupling);
        e.perturbation = c.get_double("fastslow.perturbation", e.perturbation);
        e.perturbation_bound = c.get_double("fastslow.perturbation_bound", e.perturbation_bound);
        return e;
    }

    [[nodiscard]] MapModel map() const
    {
        if (map_kind == "doubling") {
            return MapModel::doubling();
        }
        if (map_kind == "gauss") {
            return MapModel::gauss();
        }
        if (map_kind == "lsv") {
            return MapModel::lsv(gamma);
        }
        throw Error(ErrorCode::ConfigError, "map.kind: unknown map '" + map_kind + "'");
    }

    /// Uncentered observable; the runner centers it under the invariant measure.
    [[nodiscard]] ObservableSpec observable() const
    {
        if (observable_kind == "x") {
            return ObservableSpec::identity();
        }
        if (observable_kind == "cos2pi") {
            return ObservableSpec::cosine();
        }
        if (observable_kind == "power") {
            return ObservableSpec::power(theta);
        }
        if (observable_kind == "poly") {
            return ObservableSpec::polynomial(coeffs);
        }
        if (observable_kind == "zero") {
            return ObservableSpec::zero();
        }
        throw Error(ErrorCode::ConfigError, "observable.kind: unknown observable '" + observable_kind + "'");
    }

    [[nodiscard]] FastSlowConfig fastslow(const MapModel& m, const ObservableSpec& v, double eps) const
    {
        FastSlowConfig f;
        f.map = m;
        f.v = v;
        f.epsilon = eps;
        f.xi = xi;
        if (drift == "zero") {
            f.drift = DriftSpec::zero();
        } else if (drift == "linear") {
            f.drift = DriftSpec::linear(drift_param);
        } else if (drift == "sine") {
            f.drift = DriftSpec::sine(drift_param);
        } else {
            throw Error(ErrorCode::ConfigError, "fastslow.drift: unknown family '" + drift + "'");
        }
        if (diffusion == "one") {
            f.diffusion = DiffusionSpec::one();
        } else if (diffusion == "const") {
            f.diffusion = DiffusionSpec::constant(diffusion_param);
        } else if (diffusion == "2+sin") {
            f.diffusion = DiffusionSpec::two_plus_sin();
        } else if (diffusion == "rational") {
            f.diffusion = DiffusionSpec::rational();
        } else {
            throw Error(ErrorCode::ConfigError, "fastslow.diffusion: unknown family '" + diffusion + "'");
        }
        f.coupling = coupling;
        f.w = v;
        f.perturbation = perturbation;
        f.perturbation_bound = perturbation_bound;
        return f;
    }
};

/// Structural violations, each prefixed by the offending field path; empty means valid.
inline std::vector<std::string> validate(const ExperimentConfig& e)
{
    std::vector<std::string> out;
    auto strictly_increasing = [](const auto& g) {
        for (std::size_t i = 1; i < g.size(); ++i) {
            if (!(g[i] > g[i - 1])) {
                return false;
            }
        }
        return true;
    };
    bool map_ok = true;
    if (e.map_kind != "doubling" && e.map_kind != "gauss" && e.map_kind != "lsv") {
        out.push_back("map.kind: unknown map '" + e.map_kind + "'");
        map_ok = false;
    } else if (e.map_kind == "lsv" && !(e.gamma > 0.0 && e.gamma < 1.0)) {
        out.push_back("map.gamma: must lie in (0,1)");
        map_ok = false;
    }
    try {
        (void)e.observable();
    } catch (const Error& err) {
        out.emplace_back(std::string("observable: ") + err.what());
    }
    const bool uses_paths = e.kind == ExperimentKind::WipRate || e.kind == ExperimentKind::FastslowRate ||
                            e.kind == ExperimentKind::Clt;
    if (uses_paths || e.kind == ExperimentKind::VnkScaling) {
        if (e.ensemble < 2) {
            out.emplace_back("ensemble.size: M must be at least 2");
        }
    }
    if (e.kind == ExperimentKind::WipRate || e.kind == ExperimentKind::FastslowRate) {
        if (e.dimension < 1) {
            out.emplace_back("projection.dim: d must be at least 1");
        }
        // the rate theory needs an order p > 2 with p < 1/gamma
        if (map_ok && e.map_kind == "lsv" && !(1.0 / e.gamma > 2.0)) {
            out.emplace_back("map.gamma: order p must exceed 2 (need gamma < 1/2)");
        }
    }
    if (e.kind == ExperimentKind::Clt || e.kind == ExperimentKind::WipRate || e.kind == ExperimentKind::VnkScaling) {
        if (e.n_grid.empty()) {
            out.emplace_back("scales.n: grid is empty");
        } else if (!strictly_increasing(e.n_grid)) {
            out.emplace_back("scales.n: grid must be strictly increasing");
        } else if (e.n_grid.front() < 1) {
            out.emplace_back("scales.n: n must be positive");
        }
        if (e.kind != ExperimentKind::Clt && e.n_grid.size() < 3) {
            out.emplace_back("scales.n: a rate fit needs at least 3 scales");
        }
    }
    if (e.kind == ExperimentKind::FastslowRate) {
        if (e.eps_grid.empty()) {
            out.emplace_back("scales.eps: grid is empty");
        } else if (!strictly_increasing(e.eps_grid)) {
            out.emplace_back("scales.eps: grid must be strictly increasing");
        }
        for (double eps : e.eps_grid) {
            if (!(eps > 0.0 && eps < 1.0)) {
                out.emplace_back("scales.eps: every eps must lie in (0,1)");
                break;
            }
        }
        if (e.eps_grid.size() < 3) {
            out.emplace_back("scales.eps: a rate fit needs at least 3 scales");
        }
        try {
            const FastSlowConfig f = e.fastslow(MapModel::doubling(), ObservableSpec::zero(), 0.5);
            for (const auto& v : validate_fastslow(f)) {
                out.push_back(v);
            }
        } catch (const Error& err) {
            out.emplace_back(err.what());
        }
    }
    if (e.kind == ExperimentKind::RateTable) {
        if (e.gammas.empty() && e.p_values.empty()) {
            out.emplace_back("rates.gammas: give a gamma grid or rates.p");
        }
        for (double g : e.gammas) {
            if (!(g > 0.0 && g < 0.5)) {
                out.emplace_back("rates.gammas: every gamma must lie in (0, 1/2)");
                break;
            }
        }
        for (double p : e.p_values) {
            if (!(p > 2.0)) {
                out.emplace_back("rates.p: order p must exceed 2");
                break;
            }
        }
        if (e.rate_quantity != "wip" && e.rate_quantity != "homog") {
            out.emplace_back("rates.quantity: must be wip or homog");
        }
    }
    if (e.kind == ExperimentKind::DecompCheck && e.depth < 1) {
        out.emplace_back("decomp.depth: must be positive");
    }
    if (e.kind == ExperimentKind::ProkhorovSelftest && e.selftest_instances < 1) {
        out.emplace_back("selftest.instances: must be positive");
    }
    return out;
}

struct RunOptions {
    std::size_t workers = 1;
    std::filesystem::path out_dir = "out";
    /// keep the CSV text in the manifest (used by tests)
    bool keep_text = true;
};

struct RunManifest {
    std::string experiment;
    std::string version = version_tag;
    double wall_seconds = 0.0;
    std::map<std::string, std::size_t> row_counts;
    std::map<std::string, std::string> csv; ///< file name -> content
    std::vector<std::string> notes;
    nlohmann::json config_echo;
};

namespace detail {

/// CSV sink with 17 significant digits.
class CsvTable {
public:
    explicit CsvTable(std::string header) : header_(std::move(header)) { body_ << std::setprecision(17); }

    template <class... Fields>
    void row(const Fields&... fields)
    {
        bool first = true;
        ((body_ << (first ? "" : ",") << fields, first = false), ...);
        body_ << '\n';
        ++rows_;
    }

    [[nodiscard]] std::string text() const { return header_ + "\n" + body_.str(); }
    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }

private:
    std::string header_;
    std::ostringstream body_;
    std::size_t rows_ = 0;
};

inline TransferOperator operator_for(const MapModel& map, std::size_t cells)
{
    if (map.kind() == MapKind::LSV) {
        return TransferOperator::ulam(map);
    }
    return TransferOperator::exact(map, cells);
}

inline std::size_t gk_terms_for(const ExperimentConfig& e, const MapModel& map)
{
    return map.kind() == MapKind::LSV ? std::max<std::size_t>(e.gk_terms, default_ulam_depth) : e.gk_terms;
}

} // namespace detail

/**
 * Executes one experiment and writes distances.csv, fits.csv, rates.csv and
 * manifest.json under opts.out_dir. Throws ConfigError if the config does
 * not validate; module errors propagate.
 */
inline RunManifest run(const ExperimentConfig& e, const RunOptions& opts)
{
    const auto violations = validate(e);
    if (!violations.empty()) {
        std::string msg;
        for (const auto& v : violations) {
            msg += (msg.empty() ? "" : "; ") + v;
        }
        throw Error(ErrorCode::ConfigError, msg);
    }
    const auto start = std::chrono::steady_clock::now();
    const std::string tag = to_string(e.kind);
    RunManifest manifest;
    manifest.experiment = tag;
    manifest.config_echo = nlohmann::json::object();
    for (const auto& [k, v] : e.source.entries()) {
        manifest.config_echo[k] = v;
    }

    detail::CsvTable distances("experiment,scale,estimator,value,aux1,aux2,aux3");
    detail::CsvTable fits("experiment,slope,intercept,r2,n_points");
    detail::CsvTable rates("param,branch,exponent,logpower");
    const std::size_t workers = std::max<std::size_t>(1, opts.workers);

    auto add_fit = [&](const std::vector<std::pair<double, double>>& pairs) {
        const RateFit fit = fit_rate(pairs);
        fits.row(tag, fit.slope, fit.intercept, fit.r2, fit.pairs.size());
        if (fit.dropped > 0) {
            manifest.notes.push_back(std::to_string(fit.dropped) + " zero distance(s) dropped from the fit");
        }
    };

    switch (e.kind) {
    case ExperimentKind::Clt: {
        const MapModel map = e.map();
        const auto op = detail::operator_for(map, e.grid_cells);
        const ObservableSpec v = op.center(e.observable());
        const double sigma2 = green_kubo_sigma2(op, v, detail::gk_terms_for(e, map)).value;
        if (!(sigma2 > 0.0)) {
            throw Error(ErrorCode::DegenerateVariance, "CLT check needs a positive variance");
        }
        const double sigma = std::sqrt(sigma2);
        for (const std::uint64_t n : e.n_grid) {
            std::vector<double> terminal(e.ensemble);
            parallel_for(e.ensemble, workers, [&](std::size_t i) {
                InvariantOrbit gen(map, path_stream(e.seed, "dynamics", n, i));
                double sum = 0.0;
                for (std::uint64_t j = 0; j < n; ++j) {
                    sum += v(gen.current());
                    gen.advance();
                }
                terminal[i] = sum * (1.0 / std::sqrt(static_cast<double>(n)));
            });
            const double ks = kolmogorov_distance(terminal, [sigma](double x) { return normal_cdf(x / sigma); });
            distances.row(tag, n, "kolmogorov", ks, sigma2, e.ensemble, 0);
        }
        break;
    }
    case ExperimentKind::WipRate: {
        const MapModel map = e.map();
        const auto op = detail::operator_for(map, e.grid_cells);
        const ObservableSpec v = op.center(e.observable());
        const LimitConstants lc = limit_constants(op, v, detail::gk_terms_for(e, map));
        const auto times = dyadic_times(e.dimension);
        std::vector<std::pair<double, double>> pairs;
        for (const std::uint64_t n : e.n_grid) {
            const PointCloud dyn = project_generated(e.ensemble, times, workers, [&](std::size_t i) {
                return wn_path(map, v, n, e.seed, n, i);
            });
            const PointCloud ref = project_generated(e.ensemble, times, workers, [&](std::size_t i) {
                return reference_brownian_path(lc.sigma2, n, e.seed, n, i);
            });
            const DistanceReport r = empirical_prokhorov(dyn, ref);
            distances.row(tag, n, r.estimator, r.value, r.matching_size, r.grid_size, lc.sigma2);
            pairs.emplace_back(static_cast<double>(n), r.value);
        }
        add_fit(pairs);
        break;
    }
    case ExperimentKind::FastslowRate: {
        const MapModel map = e.map();
        const auto op = detail::operator_for(map, e.grid_cells);
        const ObservableSpec v = op.center(e.observable());
        const LimitConstants lc = limit_constants(op, v, detail::gk_terms_for(e, map));
        const auto times = dyadic_times(e.dimension);
        std::vector<std::pair<double, double>> pairs;
        for (const double eps : e.eps_grid) {
            const FastSlowConfig f = e.fastslow(map, v, eps);
            const HomogenizationReport h = homogenization_experiment(f, lc, e.ensemble, e.seed, times, workers);
            const auto n = fastslow_steps(eps);
            distances.row(tag, n, h.distance.estimator, h.distance.value, h.distance.matching_size,
                          h.distance.grid_size, lc.sigma2);
            distances.row(tag, n, h.psi_distance.estimator, h.psi_distance.value, h.psi_distance.matching_size,
                          h.psi_distance.grid_size, lc.sigma2);
            pairs.emplace_back(eps, h.distance.value);
        }
        add_fit(pairs);
        break;
    }
    case ExperimentKind::DecompCheck: {
        const MapModel map = e.map();
        const auto op = detail::operator_for(map, e.grid_cells);
        const ObservableSpec v = op.center(e.observable());
        DecompositionOptions dopts;
        dopts.depth = map.kind() == MapKind::LSV ? std::max<std::size_t>(e.depth, default_ulam_depth) : e.depth;
        const GordinDecomposition dec = gordin_decompose(op, v, dopts);
        const auto gk = green_kubo_sigma2(op, v, detail::gk_terms_for(e, map));
        const Estimate batch =
            batch_sigma2(map, v, e.batch_block, e.batch_samples, RandomStream(e.seed, tag_of("decomp-check"), 0));
        const auto depth = static_cast<double>(dec.depth);
        distances.row(tag, depth, "coboundary-residual", coboundary_residual(op, dec), 0, 0, 0);
        distances.row(tag, depth, "lm-residual", dec.lm_residual, 0, 0, 0);
        distances.row(tag, depth, "sigma2-martingale", dec.sigma2_m, dec.tail_estimate, dec.contraction, 0);
        distances.row(tag, depth, "sigma2-green-kubo", gk.value, gk.correlation_sum, 0, 0);
        distances.row(tag, depth, "sigma2-batch", batch.value, batch.std_error, e.batch_block, e.batch_samples);
        break;
    }
    case ExperimentKind::VnkScaling: {
        const MapModel map = e.map();
        const auto op = detail::operator_for(map, e.grid_cells);
        const ObservableSpec v = op.center(e.observable());
        DecompositionOptions dopts;
        dopts.depth = map.kind() == MapKind::LSV ? std::max<std::size_t>(e.depth, default_ulam_depth) : e.depth;
        const GordinDecomposition dec = gordin_decompose(op, v, dopts);
        std::vector<std::pair<double, double>> pairs;
        for (const std::uint64_t n : e.n_grid) {
            std::vector<double> dev(e.ensemble);
            std::vector<double> clamp(e.ensemble);
            parallel_for(e.ensemble, workers, [&](std::size_t i) {
                InvariantOrbit gen(map, path_stream(e.seed, "vnk", n, i));
                std::vector<double> pts(n + 1);
                gen.fill(pts);
                const VnkProfile prof = vnk_profile(dec, pts);
                dev[i] = prof.max_deviation();
                clamp[i] = prof.clamped;
            });
            double ms = 0.0;
            double clamped = 0.0;
            for (std::size_t i = 0; i < dev.size(); ++i) {
                ms += dev[i] * dev[i];
                clamped = std::max(clamped, clamp[i]);
            }
            const double rms = std::sqrt(ms / static_cast<double>(dev.size()));
            distances.row(tag, n, "rms-max-vnk-deviation", rms, clamped, e.ensemble, 0);
            pairs.emplace_back(static_cast<double>(n), rms);
        }
        add_fit(pairs);
        break;
    }
    case ExperimentKind::ProkhorovSelftest: {
        RandomStream rng(e.seed, tag_of("prokhorov-selftest"), 0);
        std::size_t pass = 0;
        std::size_t fail = 0;
        const std::size_t dims[3] = {1, 2, 4};
        for (std::uint64_t t = 0; t < e.selftest_instances; ++t) {
            const std::size_t m = 2 + static_cast<std::size_t>(rng.next_u64() % 5);
            const std::size_t d = dims[rng.next_u64() % 3];
            // coarse lattice values so ties between distances and k/m occur
            const bool lattice = rng.uniform() < 0.3;
            std::vector<double> a(m * d);
            std::vector<double> b(m * d);
            for (auto* vec : {&a, &b}) {
                for (double& x : *vec) {
                    x = lattice ? std::round(rng.uniform() * 8.0) / 8.0 : 2.0 * rng.uniform() - 0.5;
                }
            }
            const PointCloud p(d, a);
            const PointCloud q(d, b);
            if (empirical_prokhorov(p, q).value == brute_force_prokhorov(p, q).value) {
                ++pass;
            } else {
                ++fail;
            }
        }
        distances.row(tag, e.selftest_instances, "oracle-agreement", pass, fail, e.selftest_instances, 0);
        const double hand = empirical_prokhorov(PointCloud(1, {0.0, 1.0}), PointCloud(1, {0.05, 2.0})).value;
        distances.row(tag, 2, "hand-case", hand, 0.5, hand == 0.5 ? 1 : 0, 0);
        if (fail > 0) {
            manifest.notes.push_back(std::to_string(fail) + " self-test instance(s) disagreed with the oracle");
        }
        break;
    }
    case ExperimentKind::RateTable: {
        const RateQuantity q = e.rate_quantity == "homog" ? RateQuantity::Homogenization : RateQuantity::Wip;
        for (const auto& r : lsv_rate_table(e.gammas, q)) {
            rates.row(r.param, r.branch, r.exponent, r.log_power);
        }
        for (double p : e.p_values) {
            if (q == RateQuantity::Wip) {
                rates.row(p, "wip", r_wip(p), 0);
                rates.row(p, "wip-r1", r1_wip(p), 0);
            } else {
                const HomogRate h = r_homog(p);
                rates.row(p, p <= p_star() ? "homog-low" : "homog-high", h.exponent, h.log_power);
            }
        }
        break;
    }
    }

    manifest.csv["distances.csv"] = distances.text();
    manifest.csv["fits.csv"] = fits.text();
    manifest.csv["rates.csv"] = rates.text();
    manifest.row_counts["distances.csv"] = distances.rows();
    manifest.row_counts["fits.csv"] = fits.rows();
    manifest.row_counts["rates.csv"] = rates.rows();
    manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (!opts.out_dir.empty()) {
        std::filesystem::create_directories(opts.out_dir);
        for (const auto& [name, text] : manifest.csv) {
            std::ofstream(opts.out_dir / name, std::ios::binary) << text;
        }
        nlohmann::json j;
        j["experiment"] = manifest.experiment;
        j["version"] = manifest.version;
        j["wall_seconds"] = manifest.wall_seconds;
        j["row_counts"] = manifest.row_counts;
        j["notes"] = manifest.notes;
        j["config"] = manifest.config_echo;
        j["workers"] = workers;
        std::ofstream(opts.out_dir / "manifest.json") << j.dump(2) << '\n';
    }
    if (!opts.keep_text) {
        manifest.csv.clear();
    }
    return manifest;
}

/// Machine-readable error record.
inline std::string error_record(const std::string& code, const std::string& message)
{
    nlohmann::json j;
    j["error"] = code;
    j["message"] = message;
    return j.dump();
}

} // namespace wiplab
