#include <catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <vector>

#include "wiplab/maps.hpp"
#include "wiplab/rng.hpp"

using namespace wiplab;
using Catch::Approx;

TEST_CASE("Philox4x32-10 known-answer vectors")
{
    CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) ==
          std::array<std::uint32_t, 4>{0x6627e8d5U, 0xe169c58dU, 0xbc57ac4cU, 0x9b00dbd8U});
    CHECK(philox4x32({0xffffffffU, 0xffffffffU, 0xffffffffU, 0xffffffffU}, {0xffffffffU, 0xffffffffU}) ==
          std::array<std::uint32_t, 4>{0x408f276dU, 0x41c83b0eU, 0xa20bc7c6U, 0x6d5451fdU});
    CHECK(philox4x32({0x243f6a88U, 0x85a308d3U, 0x13198a2eU, 0x03707344U}, {0xa4093822U, 0x299f31d0U}) ==
          std::array<std::uint32_t, 4>{0xd16cfe09U, 0x94fdccebU, 0x5001e420U, 0x24126ea1U});
}

TEST_CASE("random streams are pure functions of their identifiers")
{
    RandomStream a(42, tag_of("x"), 7);
    RandomStream b(42, tag_of("x"), 7);
    RandomStream c(42, tag_of("x"), 8);
    RandomStream d(43, tag_of("x"), 7);
    int same_c = 0;
    int same_d = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto va = a.next_u64();
        REQUIRE(va == b.next_u64());
        same_c += va == c.next_u64();
        same_d += va == d.next_u64();
    }
    CHECK(same_c == 0);
    CHECK(same_d == 0);
    CHECK(a.position() == 1000);

    RandomStream u(1);
    double lo = 1.0;
    double hi = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double x = u.uniform();
        lo = std::min(lo, x);
        hi = std::max(hi, x);
        const double y = u.uniform_open();
        REQUIRE(y > 0.0);
        REQUIRE(y < 1.0);
    }
    CHECK(lo >= 0.0);
    CHECK(hi < 1.0);
}

TEST_CASE("step examples")
{
    CHECK(step(MapModel::doubling(), 0.3) == Approx(0.6).margin(1e-15));
    CHECK(step(MapModel::lsv(0.5), 0.25) == Approx(0.25 * (1.0 + std::sqrt(2.0) * 0.5)).epsilon(1e-15));
    CHECK(step(MapModel::lsv(0.5), 0.25) == Approx(0.4267766).margin(1e-7));
    CHECK(step(MapModel::gauss(), 0.4) == Approx(0.5).margin(1e-15));
    CHECK(step(MapModel::gauss(), 0.0) == 0.0);
}

TEST_CASE("step maps the unit interval into itself")
{
    RandomStream rng(3);
    for (const auto& map : {MapModel::doubling(), MapModel::gauss(), MapModel::lsv(0.25), MapModel::lsv(0.9)}) {
        for (double x : {0.0, 0.5, 1.0, std::nextafter(0.5, 0.0), std::nextafter(1.0, 0.0)}) {
            const double y = step(map, x);
            CHECK(y >= 0.0);
            CHECK(y <= 1.0);
        }
        for (int i = 0; i < 10000; ++i) {
            const double y = step(map, rng.uniform());
            REQUIRE(y >= 0.0);
            REQUIRE(y <= 1.0);
        }
    }
}

TEST_CASE("orbit examples")
{
    const auto a = orbit(MapModel::doubling(), 0.3, 3);
    REQUIRE(a.length() == 3);
    CHECK(a.values[0] == 0.3);
    CHECK(a.values[1] == Approx(0.6).margin(1e-15));
    CHECK(a.values[2] == Approx(0.2).margin(1e-15));

    const auto b = orbit(MapModel::lsv(0.5), 0.75, 2);
    CHECK(b.values[1] == 0.5);

    const auto c = orbit(MapModel::gauss(), 0.5, 2);
    CHECK(c.values[1] == 0.0);

    const auto map = MapModel::lsv(0.3);
    const auto d = orbit(map, 0.123, 500);
    for (std::size_t j = 0; j + 1 < d.length(); ++j) {
        REQUIRE(d.values[j + 1] == step(map, d.values[j]));
    }
    CHECK_THROWS_AS(orbit(map, 0.1, 0), Error);
    CHECK_THROWS_AS(orbit(map, 0.1, 100, 10), Error);
}

TEST_CASE("LSV parameter range")
{
    CHECK_THROWS_AS(MapModel::lsv(0.0), Error);
    CHECK_THROWS_AS(MapModel::lsv(1.0), Error);
    CHECK_NOTHROW(MapModel::lsv(0.5));
}

TEST_CASE("invariant sampling examples")
{
    CHECK(invariant_from_uniform(MapModel::doubling(), 0.42) == 0.42);
    CHECK(invariant_from_uniform(MapModel::gauss(), 0.5) == Approx(std::sqrt(2.0) - 1.0).epsilon(1e-14));
    CHECK_THROWS_AS(invariant_from_uniform(MapModel::lsv(0.25), 0.5), Error);

    // Gauss: inverse-CDF samples against ln(1+x)/ln 2
    RandomStream rng(11);
    const auto map = MapModel::gauss();
    std::vector<double> xs(1000000);
    for (double& x : xs) {
        x = sample_invariant(map, rng);
    }
    std::sort(xs.begin(), xs.end());
    double worst = 0.0;
    const double count = static_cast<double>(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = std::log1p(xs[i]) / std::log(2.0);
        worst = std::max({worst, (i + 1) / count - f, f - i / count});
    }
    CHECK(worst <= 0.005);
}

TEST_CASE("LSV invariant mass piles up near the neutral fixed point")
{
    const auto map = MapModel::lsv(0.25);
    InvariantOrbit gen(map, RandomStream(5));
    std::size_t low = 0;
    std::size_t high = 0;
    for (int j = 0; j < 1000000; ++j) {
        const double x = gen.current();
        low += x <= 0.1;
        high += x >= 0.9;
        gen.advance();
    }
    CHECK(low > high);
}

TEST_CASE("measure preservation along invariant orbits")
{
    const std::vector<std::function<double(double)>> suite = {
        [](double x) { return x; },
        [](double x) { return x * x; },
        [](double x) { return std::cos(2.0 * std::numbers::pi * x); },
        [](double x) { return x < 0.3 ? 1.0 : 0.0; },
        [](double x) { return std::sqrt(x); },
    };
    for (const auto& map : {MapModel::doubling(), MapModel::gauss(), MapModel::lsv(0.25)}) {
        InvariantOrbit gen(map, RandomStream(17, tag_of(map.label()), 0));
        std::vector<double> a(suite.size(), 0.0);
        std::vector<double> b(suite.size(), 0.0);
        const std::size_t n = 10'000'000;
        for (std::size_t j = 0; j < n; ++j) {
            const double x = gen.current();
            const double tx = step(map, x);
            for (std::size_t s = 0; s < suite.size(); ++s) {
                a[s] += suite[s](x);
                b[s] += suite[s](tx);
            }
            gen.advance();
        }
        for (std::size_t s = 0; s < suite.size(); ++s) {
            INFO(map.label() << " test function " << s);
            CHECK(std::abs(a[s] - b[s]) / static_cast<double>(n) <= 1e-3);
        }
    }
}

TEST_CASE("doubling orbits follow the map up to the refreshed low bit")
{
    const auto map = MapModel::doubling();
    InvariantOrbit gen(map, RandomStream(9));
    double prev = gen.current();
    for (int j = 0; j < 100000; ++j) {
        const double x = gen.advance();
        const double diff = x - step(map, prev);
        REQUIRE((diff == 0.0 || diff == 0x1.0p-53));
        prev = x;
    }
}

TEST_CASE("orbits and samples are reproducible from the seed")
{
    for (const auto& map : {MapModel::doubling(), MapModel::gauss(), MapModel::lsv(0.3)}) {
        const auto a = invariant_orbit(map, RandomStream(77, 1, 2), 5000);
        const auto b = invariant_orbit(map, RandomStream(77, 1, 2), 5000);
        CHECK(a == b);
        RandomStream r1(8);
        RandomStream r2(8);
        CHECK(sample_invariant(map, r1) == sample_invariant(map, r2));
    }
}

TEST_CASE("return time examples")
{
    const auto map = MapModel::lsv(0.5);
    CHECK(return_time(map, 0.75).tau == 1);
    CHECK(return_time(map, 0.6).tau >= 2);
    CHECK(return_time(MapModel::lsv(0.3), 1.0).tau == 1);
    CHECK_THROWS_AS(return_time(map, 0.4), Error);
    CHECK_THROWS_AS(return_time(map, 0.5 + 1e-12, 3), Error);

    const auto s = return_time(MapModel::lsv(0.4), 0.52, 1000000, true);
    REQUIRE(s.itinerary.size() == s.tau);
    CHECK(s.itinerary.back() >= 0.5);
    for (std::size_t l = 0; l + 1 < s.itinerary.size(); ++l) {
        REQUIRE(s.itinerary[l] < 0.5);
    }
}

TEST_CASE("order of nonuniform expansion")
{
    const auto lsv = order_of(MapModel::lsv(0.25));
    CHECK(lsv.p_max == 4.0);
    CHECK_FALSE(lsv.attained);
    CHECK(lsv.admits(3.9));
    CHECK_FALSE(lsv.admits(4.0));
    CHECK(order_of(MapModel::doubling()).unbounded);
    CHECK(order_of(MapModel::gauss()).unbounded);
    CHECK(order_of(MapModel::lsv(0.5)).p_max == 2.0);
}

TEST_CASE("LSV return-time tail exponent")
{
    for (double gamma : {0.25, 0.5}) {
        const auto est = return_time_tail(MapModel::lsv(gamma), 10, 1000, 12, 1000000, RandomStream(21));
        INFO("gamma " << gamma << " slope " << est.slope);
        CHECK(std::abs(est.slope + 1.0 / gamma) <= 0.1 / gamma);
    }
    CHECK_THROWS_AS(return_time_tail(MapModel::doubling(), 10, 1000, 12, 10, RandomStream(1)), Error);
}
