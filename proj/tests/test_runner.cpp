#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "wiplab/runner.hpp"

using namespace wiplab;

namespace {

std::filesystem::path scratch(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / ("wiplab_test_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::string> lines(const std::string& text)
{
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        out.push_back(line);
    }
    return out;
}

ExperimentConfig config(const std::string& text) { return ExperimentConfig::from(Config::parse(text)); }

bool has_violation(const std::vector<std::string>& v, const std::string& needle)
{
    for (const auto& s : v) {
        if (s.find(needle) != std::string::npos) {
            return true;
        }
    }
    return false;
}

int run_cli(const std::string& args)
{
    const int status = std::system((std::string(WIPLAB_CLI) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST_CASE("config parsing")
{
    const auto c = Config::parse("# comment\nexperiment = wip-rate\nscales.n = 2^6, 128,256 # trailing\n\nseed=0x10\n");
    CHECK(c.get("experiment", "") == "wip-rate");
    CHECK(c.get_u64s("scales.n") == std::vector<std::uint64_t>{64, 128, 256});
    CHECK(c.get_u64("seed", 0) == 16);
    CHECK(c.get_doubles("scales.eps").empty());
    CHECK(Config::parse("scales.eps = 2^-3").get_doubles("scales.eps") == std::vector<double>{0.125});
    CHECK_THROWS_AS(Config::parse("no equals sign"), Error);
    CHECK_THROWS_AS(Config::parse("= 3"), Error);
    CHECK_THROWS_AS(Config::parse("seed = banana").get_u64("seed", 0), Error);
    CHECK_THROWS_AS(Config::parse("seed = -3").get_u64("seed", 0), Error);
    CHECK_THROWS_AS(config("experiment = nope"), Error);
}

TEST_CASE("validation")
{
    const std::string doubling = "experiment = wip-rate\nmap.kind = doubling\nobservable.kind = x\n"
                                 "scales.n = 64,128,256\nensemble.size = 100\nprojection.dim = 8\n";
    CHECK(validate(config(doubling)).empty());

    const auto lsv = validate(config(doubling + "map.kind = lsv\nmap.gamma = 0.5\n"));
    CHECK(has_violation(lsv, "order p must exceed 2"));

    CHECK(has_violation(validate(config(doubling + "ensemble.size = 1\n")), "ensemble.size"));
    CHECK(has_violation(validate(config(doubling + "projection.dim = 0\n")), "projection.dim"));
    CHECK(has_violation(validate(config(doubling + "scales.n = 64,64,128\n")), "strictly increasing"));
    CHECK(has_violation(validate(config(doubling + "map.kind = tent\n")), "map.kind"));
    CHECK(has_violation(validate(config(doubling + "map.kind = lsv\nmap.gamma = 1.5\n")), "map.gamma"));

    const std::string fs = "experiment = fastslow-rate\nscales.eps = 0.125,0.25,0.5\nfastslow.drift = linear\n"
                           "fastslow.drift_param = 1\n";
    CHECK(validate(config(fs)).empty());
    CHECK(has_violation(validate(config(fs + "scales.eps = 0.5,0.25,0.125\n")), "scales.eps"));
    CHECK(has_violation(validate(config(fs + "fastslow.perturbation = 1\n")), "perturbation"));
    CHECK(has_violation(validate(config(fs + "fastslow.diffusion = wobbly\n")), "fastslow.diffusion"));

    CHECK(has_violation(validate(config("experiment = rate-table\nrates.gammas = 0.6\n")), "rates.gammas"));
    CHECK(has_violation(validate(config("experiment = rate-table\n")), "rates.gammas"));
}

TEST_CASE("rate table run")
{
    const auto dir = scratch("rates");
    const auto e = config("experiment = rate-table\nrates.gammas = 0.05,0.10,0.15,0.20,0.25,0.30,0.35,0.40,0.45\n");
    RunOptions opts;
    opts.out_dir = dir;
    const auto m = run(e, opts);
    CHECK(m.row_counts.at("rates.csv") == 9);
    const auto rows = lines(slurp(dir / "rates.csv"));
    REQUIRE(rows.size() == 10);
    CHECK(rows[0] == "param,branch,exponent,logpower");
    for (std::size_t i = 1; i < rows.size(); ++i) {
        std::istringstream in(rows[i]);
        std::string param;
        std::string branch;
        std::string exponent;
        std::getline(in, param, ',');
        std::getline(in, branch, ',');
        std::getline(in, exponent, ',');
        CHECK(std::stod(exponent) == lsv_rates(std::stod(param)).wip);
    }
    CHECK(std::filesystem::exists(dir / "manifest.json"));
    const auto j = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(j["experiment"] == "rate-table");
    CHECK(j["row_counts"]["rates.csv"] == 9);
}

TEST_CASE("self-test run")
{
    const auto e = config("experiment = prokhorov-selftest\nselftest.instances = 200\n");
    RunOptions opts;
    opts.out_dir = "";
    const auto m = run(e, opts);
    const auto rows = lines(m.csv.at("distances.csv"));
    REQUIRE(rows.size() == 3);
    CHECK(rows[1] == "prokhorov-selftest,200,oracle-agreement,200,0,200,0");
    CHECK(rows[2] == "prokhorov-selftest,2,hand-case,0.5,0.5,1,0");
    CHECK(m.notes.empty());
}

TEST_CASE("runs are identical across worker counts")
{
    const std::string text = "experiment = wip-rate\nmap.kind = doubling\nobservable.kind = x\n"
                             "scales.n = 16,32,64\nensemble.size = 200\nprojection.dim = 4\nseed = 9\n";
    RunOptions one;
    one.out_dir = "";
    one.workers = 1;
    RunOptions many = one;
    many.workers = 5;
    const auto a = run(config(text), one);
    const auto b = run(config(text), many);
    CHECK(a.csv == b.csv);
    CHECK(lines(a.csv.at("distances.csv")).size() == 4);
    CHECK(lines(a.csv.at("fits.csv")).size() == 2);

    const auto c = run(config(text + "seed = 10\n"), one);
    CHECK(c.csv.at("distances.csv") != a.csv.at("distances.csv"));
}

TEST_CASE("other experiment kinds")
{
    RunOptions opts;
    opts.out_dir = "";
    opts.workers = 4;
    const auto clt = run(config("experiment = clt\nscales.n = 256\nensemble.size = 2000\n"), opts);
    const auto row = lines(clt.csv.at("distances.csv")).at(1);
    CHECK(row.rfind("clt,256,kolmogorov,", 0) == 0);

    const auto dec = run(config("experiment = decomp-check\nobservable.kind = x\ndecomp.batch_samples = 2000\n"), opts);
    CHECK(dec.row_counts.at("distances.csv") == 5);

    const auto vnk = run(config("experiment = vnk-scaling\nobservable.kind = cos2pi\nscales.n = 64,128,256\n"
                                "ensemble.size = 200\n"),
                         opts);
    CHECK(vnk.row_counts.at("fits.csv") == 1);

    const auto fs = run(config("experiment = fastslow-rate\nscales.eps = 0.125,0.25,0.5\nensemble.size = 100\n"
                               "fastslow.drift = linear\nfastslow.drift_param = 1\nfastslow.diffusion = 2+sin\n"),
                        opts);
    CHECK(fs.row_counts.at("distances.csv") == 6);

    CHECK_THROWS_AS(run(config("experiment = clt\n"), opts), Error);
}

TEST_CASE("command-line exit codes")
{
    const auto dir = scratch("cli");
    std::filesystem::create_directories(dir);
    {
        std::ofstream(dir / "ok.cfg") << "experiment = rate-table\nrates.gammas = 0.1,0.2\n";
        std::ofstream(dir / "bad.cfg") << "experiment = wip-rate\nmap.kind = lsv\nmap.gamma = 0.5\nscales.n = 8,16,32\n";
        std::ofstream(dir / "broken.cfg") << "this is not a config\n";
        std::ofstream(dir / "runtime.cfg") << "experiment = clt\nobservable.kind = zero\nscales.n = 16\n"
                                              "ensemble.size = 10\n";
    }
    const std::string out = " --out " + (dir / "out").string();
    CHECK(run_cli("--config " + (dir / "ok.cfg").string() + out) == 0);
    CHECK(std::filesystem::exists(dir / "out" / "rates.csv"));
    CHECK(run_cli("rate-table --config " + (dir / "ok.cfg").string() + out) == 0);
    CHECK(run_cli("--config " + (dir / "bad.cfg").string() + out) == 2);
    CHECK(run_cli("--config " + (dir / "broken.cfg").string() + out) == 2);
    CHECK(run_cli("--config " + (dir / "missing.cfg").string() + out) == 2);
    CHECK(run_cli("clt --config " + (dir / "ok.cfg").string() + out) == 2);
    CHECK(run_cli("--config " + (dir / "runtime.cfg").string() + out) == 3);
    CHECK(run_cli("--bogus-flag") == 2);
}
