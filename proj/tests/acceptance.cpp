// Acceptance criteria 1-10: one PASS/FAIL line each, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "wiplab/runner.hpp"

using namespace wiplab;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct CsvRow {
    std::string experiment;
    double scale = 0.0;
    std::string estimator;
    double value = 0.0;
};

std::vector<CsvRow> parse_distances(const std::string& text)
{
    std::vector<CsvRow> out;
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::istringstream f(line);
        CsvRow r;
        std::string field;
        std::getline(f, r.experiment, ',');
        std::getline(f, field, ',');
        r.scale = std::stod(field);
        std::getline(f, r.estimator, ',');
        std::getline(f, field, ',');
        r.value = std::stod(field);
        out.push_back(r);
    }
    return out;
}

double fitted_slope(const std::string& fits)
{
    std::istringstream in(fits);
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    std::istringstream f(line);
    std::string field;
    std::getline(f, field, ',');
    std::getline(f, field, ',');
    return std::stod(field);
}

/// Strictly decreasing in the listed order, allowing one inversion.
bool decreasing_up_to_one(const std::vector<double>& v)
{
    int inversions = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        inversions += !(v[i] < v[i - 1]);
    }
    return inversions <= 1;
}

std::string fmt(double x)
{
    std::ostringstream os;
    os.precision(6);
    os << x;
    return os.str();
}

std::string list(const std::vector<double>& v)
{
    std::string s;
    for (double x : v) {
        s += (s.empty() ? "" : " ") + fmt(x);
    }
    return "[" + s + "]";
}

std::size_t hardware_workers() { return 8; }

const std::filesystem::path out_root = std::filesystem::temp_directory_path() / "wiplab_acceptance";

/// Runs a config through the runner, writing CSVs under out_root/name_w<workers>.
RunManifest run_named(const std::string& name, const std::string& text, std::size_t workers)
{
    RunOptions opts;
    opts.workers = workers;
    opts.out_dir = out_root / (name + "_w" + std::to_string(workers));
    return run(ExperimentConfig::from(Config::parse(text)), opts);
}

const std::string cfg_vnk = "experiment = vnk-scaling\nmap.kind = doubling\nobservable.kind = cos2pi\n"
                            "scales.n = 256,512,1024,2048,4096,8192,16384\nensemble.size = 2000\ndecomp.depth = 1\n"
                            "seed = 2024\n";
const std::string cfg_selftest = "experiment = prokhorov-selftest\nselftest.instances = 500\nseed = 2024\n";
const std::string cfg_clt = "experiment = clt\nmap.kind = doubling\nobservable.kind = x\nscales.n = 16384\n"
                            "ensemble.size = 10000\nseed = 2024\n";
const std::string cfg_wip = "experiment = wip-rate\nmap.kind = doubling\nobservable.kind = x\n"
                            "scales.n = 64,128,256,512,1024,2048,4096\nensemble.size = 4096\nprojection.dim = 8\n"
                            "seed = 2024\n";
const std::string cfg_fs_free = "experiment = fastslow-rate\nmap.kind = doubling\nobservable.kind = x\n"
                                "scales.eps = 2^-6,2^-5,2^-4,2^-3\nensemble.size = 4096\nprojection.dim = 8\n"
                                "fastslow.drift = zero\nfastslow.diffusion = one\nseed = 2024\n";
const std::string cfg_fs_ou = "experiment = fastslow-rate\nmap.kind = doubling\nobservable.kind = x\n"
                              "scales.eps = 2^-6,2^-5,2^-4,2^-3\nensemble.size = 4096\nprojection.dim = 8\n"
                              "fastslow.drift = linear\nfastslow.drift_param = 1\nfastslow.diffusion = one\n"
                              "seed = 2024\n";

Outcome criterion1()
{
    const auto op = TransferOperator::exact(MapModel::doubling());
    const auto v = ObservableSpec::identity().with_center(0.5);
    const auto dec = gordin_decompose(op, v, 60);
    const double cob = coboundary_residual(op, dec);
    const double gk = green_kubo_sigma2(op, v, 40).value;
    const auto batch = batch_sigma2(op.map(), v, 1 << 12, 100000, RandomStream(2024, tag_of("batch"), 0));
    const bool ok = cob <= 1e-8 && dec.lm_residual <= 1e-6 && std::abs(dec.sigma2_m - 0.25) <= 1e-6 &&
                    std::abs(gk - 0.25) <= 1e-6 && std::abs(batch.value - 0.25) <= 3.0 * batch.std_error;
    return {ok, "coboundary " + fmt(cob) + ", |Lm| " + fmt(dec.lm_residual) + ", sigma2_m " + fmt(dec.sigma2_m) +
                    ", green-kubo " + fmt(gk) + ", batch " + fmt(batch.value) + " +- " + fmt(batch.std_error)};
}

Outcome criterion2()
{
    const auto m = run_named("vnk", cfg_vnk, hardware_workers());
    const double slope = fitted_slope(m.csv.at("fits.csv"));
    return {slope >= -0.65 && slope <= -0.35, "slope " + fmt(slope) + " (target [-0.65, -0.35])"};
}

Outcome criterion3()
{
    const auto m = run_named("selftest", cfg_selftest, hardware_workers());
    const auto rows = parse_distances(m.csv.at("distances.csv"));
    double agree = 0.0;
    double hand = -1.0;
    for (const auto& r : rows) {
        if (r.estimator == "oracle-agreement") {
            agree = r.value;
        }
        if (r.estimator == "hand-case") {
            hand = r.value;
        }
    }
    return {agree == 500.0 && hand == 0.5, fmt(agree) + "/500 instances agree, hand case " + fmt(hand)};
}

Outcome criterion4()
{
    const auto m = run_named("clt", cfg_clt, hardware_workers());
    const double ks = parse_distances(m.csv.at("distances.csv")).at(0).value;
    return {ks <= 0.02, "Kolmogorov distance " + fmt(ks) + " (limit 0.02)"};
}

std::vector<double> values_of(const RunManifest& m, const std::string& estimator)
{
    std::vector<double> out;
    for (const auto& r : parse_distances(m.csv.at("distances.csv"))) {
        if (r.estimator == estimator) {
            out.push_back(r.value);
        }
    }
    return out;
}

RunManifest wip_manifest;

Outcome criterion5()
{
    wip_manifest = run_named("wip", cfg_wip, hardware_workers());
    const auto d = values_of(wip_manifest, "prokhorov");
    const double slope = fitted_slope(wip_manifest.csv.at("fits.csv"));
    const bool trend = decreasing_up_to_one(d);
    return {trend && slope <= -0.10, "distances " + list(d) + ", decreasing up to one inversion: " +
                                         (trend ? "yes" : "no") + ", slope " + fmt(slope) + " (limit -0.10)"};
}

Outcome criterion6()
{
    std::string detail;
    bool ok = true;
    for (double gamma : {0.25, 0.5}) {
        const auto est =
            return_time_tail(MapModel::lsv(gamma), 10, 1000, 12, 1000000, RandomStream(2024, tag_of("tail"), 0));
        const bool good = std::abs(est.slope + 1.0 / gamma) <= 0.1 / gamma;
        ok = ok && good;
        detail += (detail.empty() ? "" : ", ") + std::string("gamma ") + fmt(gamma) + " slope " + fmt(est.slope) +
                  " (target " + fmt(-1.0 / gamma) + ")";
    }
    return {ok, detail};
}

Outcome criterion7()
{
    const auto free = run_named("fastslow_free", cfg_fs_free, hardware_workers());
    const auto fs = parse_distances(free.csv.at("distances.csv"));
    const auto wip = parse_distances(wip_manifest.csv.at("distances.csv"));
    std::size_t compared = 0;
    bool identical = true;
    for (const auto& r : fs) {
        if (r.estimator != "prokhorov") {
            continue;
        }
        for (const auto& w : wip) {
            if (w.scale == r.scale) {
                ++compared;
                identical = identical && w.value == r.value;
            }
        }
    }
    identical = identical && compared == 4;

    const auto ou = run_named("fastslow_ou", cfg_fs_ou, hardware_workers());
    // rows are listed from small to large eps; the trend is read from large to small eps
    auto d = values_of(ou, "prokhorov");
    std::reverse(d.begin(), d.end());
    const bool trend = decreasing_up_to_one(d);
    return {identical && trend, std::string("pure-noise distances equal WIP distances: ") +
                                    (identical ? "yes" : "no") + " (" + std::to_string(compared) +
                                    " scales), OU distances eps=2^-3..2^-6 " + list(d) +
                                    ", decreasing up to one inversion: " + (trend ? "yes" : "no")};
}

Outcome criterion8()
{
    FastSlowConfig cfg;
    cfg.drift = DriftSpec::linear(1.0);
    cfg.xi = 1.0;
    const double sigma2 = 0.25;
    std::vector<RunningStats> part(hardware_workers());
    const std::size_t paths = 100000;
    std::vector<double> x1(paths);
    parallel_for(paths, hardware_workers(), [&](std::size_t s) {
        RandomStream rng(2024, tag_of("ou"), s);
        x1[s] = solve_limit_sde(cfg, sigma2, 0.0, 1e-3, rng).path.values().back();
    });
    RunningStats st;
    for (double x : x1) {
        st.push(x);
    }
    const double mean = std::exp(-1.0);
    const double var = sigma2 * (1.0 - std::exp(-2.0)) / 2.0;
    // standard error of the sample variance from the fourth central moment
    double m4 = 0.0;
    for (double x : x1) {
        m4 += std::pow(x - st.mean(), 4);
    }
    m4 /= static_cast<double>(paths);
    const double se_var = std::sqrt((m4 - st.variance() * st.variance()) / static_cast<double>(paths));
    const bool moments = std::abs(st.mean() - mean) <= 3.0 * st.std_error() && std::abs(st.variance() - var) <= 3.0 * se_var;

    FastSlowConfig s = cfg;
    s.drift = DriftSpec::sine(0.7);
    s.diffusion = DiffusionSpec::two_plus_sin();
    const double v2 = 1.0 / 12.0;
    const double corr = 0.5 * (sigma2 - v2);
    double ito_gap = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const double x = -5.0 + 10.0 * k / 999.0;
        ito_gap = std::max(ito_gap, std::abs(ito_drift(x, s, corr) - stratonovich_to_ito_drift(x, s, sigma2, v2)));
    }
    const PsiTransform psi(s, v2);
    double round_trip = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const double x = -10.0 + 20.0 * k / 999.0;
        round_trip = std::max(round_trip, std::abs(psi.inverse(psi.psi(x)) - x));
    }
    return {moments && ito_gap <= 1e-12 && round_trip <= 1e-8,
            "OU mean " + fmt(st.mean()) + " (exact " + fmt(mean) + ", se " + fmt(st.std_error()) + "), variance " +
                fmt(st.variance()) + " (exact " + fmt(var) + ", se " + fmt(se_var) + "), drift identity " +
                fmt(ito_gap) + ", psi round trip " + fmt(round_trip)};
}

Outcome criterion9()
{
    const double ps = (11.0 + std::sqrt(73.0)) / 4.0;
    const double gs = (11.0 - std::sqrt(73.0)) / 12.0;
    const double cont_p = std::abs(r_homog_low(ps) - r_homog_high(ps));
    const double cont_g = std::abs(lsv_homog_large_gamma(gs) - lsv_homog_small_gamma(gs));
    bool dominance = true;
    for (double p = 2.001; p <= 100.0; p += 0.001) {
        dominance = dominance && r1_wip(p) > r_wip(p);
    }
    auto f = [](double p) { return r_homog_low(p) - r_homog_high(p); };
    double a = 2.001;
    double b = 20.0;
    while (b - a > 1e-12) {
        const double mid = 0.5 * (a + b);
        ((f(mid) < 0.0) == (f(a) < 0.0) ? a : b) = mid;
    }
    const double crossing = 0.5 * (a + b);
    const bool ok = r_wip(4.0) == 0.125 && cont_p <= 1e-10 && cont_g <= 1e-10 && dominance &&
                    std::abs(crossing - ps) <= 1e-6;
    return {ok, "r(4) = " + fmt(r_wip(4.0)) + ", p* gap " + fmt(cont_p) + ", gamma* gap " + fmt(cont_g) +
                    ", r1 > r: " + (dominance ? "yes" : "no") + ", bisection p* " + fmt(crossing)};
}

Outcome criterion10()
{
    const std::vector<std::pair<std::string, std::string>> runs = {
        {"vnk", cfg_vnk}, {"selftest", cfg_selftest}, {"clt", cfg_clt}, {"wip", cfg_wip},
        {"fastslow_free", cfg_fs_free}, {"fastslow_ou", cfg_fs_ou}};
    std::size_t files = 0;
    std::string mismatches;
    for (const auto& [name, text] : runs) {
        run_named(name, text, 1);
        for (const char* file : {"distances.csv", "fits.csv", "rates.csv"}) {
            auto slurp = [](const std::filesystem::path& p) {
                std::ifstream in(p, std::ios::binary);
                std::stringstream s;
                s << in.rdbuf();
                return s.str();
            };
            const auto a = slurp(out_root / (name + "_w1") / file);
            const auto b = slurp(out_root / (name + "_w" + std::to_string(hardware_workers())) / file);
            ++files;
            if (a != b || a.empty()) {
                mismatches += " " + name + "/" + file;
            }
        }
    }
    return {mismatches.empty(), std::to_string(files) + " CSV files compared between 1 and " +
                                    std::to_string(hardware_workers()) + " workers" +
                                    (mismatches.empty() ? ", all byte-identical" : ", differing:" + mismatches)};
}

} // namespace

int main()
{
    std::filesystem::remove_all(out_root);
    struct Criterion {
        int id;
        std::string name;
        double limit_seconds;
        std::function<Outcome()> check;
    };
    const std::vector<Criterion> criteria = {
        {1, "Gordin decomposition exactness", 10.0, criterion1},
        {2, "quadratic variation concentration", 120.0, criterion2},
        {3, "Prokhorov solver exactness", 30.0, criterion3},
        {4, "CLT check", 60.0, criterion4},
        {5, "WIP convergence trend", 600.0, criterion5},
        {6, "LSV return-time tail", 120.0, criterion6},
        {7, "homogenization sanity", 600.0, criterion7},
        {8, "SDE solver correctness", 0.0, criterion8},
        {9, "rate formulas", 0.0, criterion9},
        {10, "reproducibility", 0.0, criterion10},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        Outcome o;
        const auto start = std::chrono::steady_clock::now();
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = c.limit_seconds <= 0.0 || secs <= c.limit_seconds;
        const bool pass = o.pass && in_time;
        failures += !pass;
        std::printf("%s criterion %d (%s): %s; %.2f s%s\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                    o.detail.c_str(), secs,
                    in_time ? "" : (" exceeds " + fmt(c.limit_seconds) + " s").c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
