#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rmflux/errors.hpp"
#include "rmflux/gate.hpp"

using namespace rmflux;

namespace {

EnvironmentScene random_scene(Rng& rng) {
    EnvironmentScene s;
    s.n = 64;
    const int nb = 2 + static_cast<int>(rng.next_u64() % 8);
    for (int i = 0; i < nb; ++i) {
        const int w = 3 + static_cast<int>(rng.next_u64() % 10), h = 3 + static_cast<int>(rng.next_u64() % 10);
        s.buildings.push_back({static_cast<int>(rng.next_u64() % (64 - w)), static_cast<int>(rng.next_u64() % (64 - h)), w, h});
    }
    const int nv = static_cast<int>(rng.next_u64() % 4);
    for (int i = 0; i < nv; ++i) s.vehicles.push_back({static_cast<int>(rng.next_u64() % 60), static_cast<int>(rng.next_u64() % 60), 3, 2});
    do {
        s.bs = {static_cast<int>(rng.next_u64() % 64), static_cast<int>(rng.next_u64() % 64), 1.5 + 30.0 * rng.uniform()};
    } while (inside_building(s, s.bs.x, s.bs.y));
    return s;
}

}  // namespace

TEST_CASE("token layout") {
    EnvironmentScene s;
    s.n = 64;
    s.buildings = {{0, 0, 8, 8}};
    s.vehicles = {{56, 56, 4, 8}};
    s.bs = {32, 16, 50.0};
    const TokenizerConfig tc;
    const auto t = tokenize(s, tc).tokens;
    CHECK(t.rows == 129);
    CHECK(t.cols == 64);
    // the building fills patch (0, 0) completely
    for (int j = 0; j < 64; ++j) CHECK(t(0, j) == 1.0);
    CHECK(t(1, 0) == 0.0);
    // the vehicle covers the left half of the last dynamic patch; each pooled entry is one cell
    CHECK(t(64 + 63, 0) == 1.0);
    CHECK(t(64 + 63, 7) == 0.0);
    // BS token tiles (x / n, y / n, z / 100)
    CHECK(t(128, 0) == 0.5);
    CHECK(t(128, 1) == 0.25);
    CHECK(t(128, 2) == 0.5);
    CHECK(t(128, 3) == 0.5);

    s.n = 48;
    CHECK_THROWS_AS(tokenize(s, tc), ConfigError);
}

TEST_CASE("projections regenerate from the seed") {
    const auto a = ProjectionPair::from_seed(42), b = ProjectionPair::from_seed(42), c = ProjectionPair::from_seed(43);
    CHECK(a.w_k == b.w_k);
    CHECK(a.w_v == b.w_v);
    CHECK_FALSE(a.w_k == c.w_k);
    CHECK(a.w_k.rows == 64);
    CHECK(a.d_k() == 32);
    double ss = 0.0;
    for (double v : a.w_k.data) ss += v * v;
    CHECK(ss / a.w_k.data.size() == doctest::Approx(1.0 / 64).epsilon(0.1));
}

TEST_CASE("embedding is tokens times projections") {
    Rng rng(1);
    const auto s = random_scene(rng);
    const auto p = ProjectionPair::from_seed(7);
    const auto e = embed(s, p);
    const auto t = tokenize(s, TokenizerConfig{}).tokens;
    for (int i : {0, 70, 128})
        for (int j : {0, 31}) {
            double k = 0.0;
            for (int m = 0; m < 64; ++m) k += t(i, m) * p.w_k(m, j);
            CHECK(e.k(i, j) == doctest::Approx(k).epsilon(1e-12));
        }
    const auto again = embed(s, p);
    CHECK(again.k == e.k);
    CHECK(again.v == e.v);
}

TEST_CASE("one building change touches its token rows") {
    EnvironmentScene a;
    a.n = 64;
    a.buildings = {{10, 10, 5, 5}, {40, 40, 6, 6}};
    a.bs = {1, 1, 1.5};
    auto b = a;
    b.buildings[1] = {40, 40, 6, 9};
    const auto p = ProjectionPair::from_seed(42);
    const auto ea = embed(a, p), eb = embed(b, p);
    auto row_differs = [&](int r) {
        for (int j = 0; j < ea.k.cols; ++j)
            if (ea.k(r, j) != eb.k(r, j)) return true;
        return false;
    };
    CHECK(row_differs(5 * 8 + 5));  // patch containing (40..45, 46..48)
    CHECK(row_differs(6 * 8 + 5));
    CHECK_FALSE(row_differs(1 * 8 + 1));
    CHECK_FALSE(row_differs(128));
}

TEST_CASE("empty dynamic grid is unchanged by clearing it") {
    EnvironmentScene a;
    a.n = 64;
    a.buildings = {{10, 10, 5, 5}};
    a.bs = {1, 1, 1.5};
    const auto p = ProjectionPair::from_seed(42);
    CHECK(d_env(a, without_vehicles(a), p) == 0.0);
}

TEST_CASE("d_env is a pseudo-metric") {
    Rng rng(2);
    const auto p = ProjectionPair::from_seed(42);
    for (int i = 0; i < 30; ++i) {
        const auto a = random_scene(rng), b = random_scene(rng), c = random_scene(rng);
        const auto ea = embed(a, p), eb = embed(b, p), ec = embed(c, p);
        CHECK(d_env(ea, ea) == 0.0);
        CHECK(d_env(ea, eb) >= 0.0);
        CHECK(d_env(ea, eb) == d_env(eb, ea));
        CHECK(d_env(ea, ec) <= d_env(ea, eb) + d_env(eb, ec) + 1e-12);
    }
}

TEST_CASE("d_env normalization") {
    EnvironmentScene a;
    a.n = 64;
    a.bs = {1, 1, 1.5};
    auto b = a;
    b.buildings = {{0, 0, 64, 64}};
    b.bs = {1, 1, 1.5};
    const auto p = ProjectionPair::from_seed(5);
    const TokenizerConfig tc;
    CHECK(gate_normalization(tc, p) == doctest::Approx(std::sqrt(129.0 * 32.0)));
    const auto ea = embed(a, p);
    Embedding eb = embed(a, p);
    eb.k.data[0] += 3.0;
    eb.v.data[5] += 4.0;
    CHECK(d_env(ea, eb) == doctest::Approx(5.0 / std::sqrt(129.0 * 32.0)).epsilon(1e-12));
}

TEST_CASE("KL theorem values") {
    const std::vector<double> a = {1.0, 0.0}, b = {0.0, 1.0};
    CHECK(kl_theorem(a, b, 0.5) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(kl_theorem(a, a, 0.3) == 0.0);
    CHECK(kl_theorem(a, b, 1.0) == 0.0);
    CHECK_THROWS_AS(kl_theorem(a, b, 0.0), DomainError);
    CHECK_THROWS_AS(kl_theorem(a, b, -1.0), DomainError);
    double prev = INFINITY;
    for (int k = 1; k <= 100; ++k) {
        const double v = kl_theorem(a, b, k / 100.0);
        if (k < 100) CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("Monte-Carlo KL agrees with the closed form") {
    Rng rng(3);
    const std::vector<double> a = {1.0, 0.0}, b = {0.0, 1.0};
    const auto est = kl_monte_carlo(a, b, 0.5, 100000, rng);
    CHECK(std::abs(est.estimate - 0.5) <= 3.0 * est.std_error);
    CHECK(std::abs(est.estimate - 0.5) <= 0.02 * 0.5);

    const auto same = kl_monte_carlo(a, a, 0.5, 10000, rng);
    CHECK(std::abs(same.estimate) <= 3.0 * same.std_error + 1e-15);

    int pass = 0;
    for (int i = 0; i < 20; ++i) {
        const std::vector<double> x = {rng.uniform(), rng.uniform()}, y = {rng.uniform(), rng.uniform()};
        const auto e = kl_monte_carlo(x, y, 0.9, 20000, rng);
        pass += std::abs(e.estimate - kl_theorem(x, y, 0.9)) <= 3.0 * e.std_error;
    }
    CHECK(pass >= 18);
}

TEST_CASE("tau calibration rule") {
    const double budget = 0.01;
    SUBCASE("budget never binds") {
        std::vector<CalibrationPoint> pts;
        for (int i = 0; i < 10; ++i) pts.push_back({0.1 * (i + 1), 0.001});
        CHECK(calibrate_tau(pts, budget).tau == doctest::Approx(1.0));
    }
    SUBCASE("budget always binds") {
        std::vector<CalibrationPoint> pts;
        for (int i = 0; i < 10; ++i) pts.push_back({0.1 * (i + 1), 0.5});
        CHECK(calibrate_tau(pts, budget).tau == 0.0);
    }
    SUBCASE("loss exceeds the budget past the 7th pair") {
        std::vector<CalibrationPoint> pts;
        for (int i = 0; i < 10; ++i) pts.push_back({0.05 * (i + 1), i < 7 ? 0.001 * i : 0.02 + 0.001 * i});
        std::swap(pts[2], pts[8]);  // order of input must not matter
        const auto g = calibrate_tau(pts, budget, 3.0);
        CHECK(g.tau == doctest::Approx(0.35));
        CHECK(g.normalization == 3.0);
        for (const auto& p : pts)
            if (g.admits(p.d_env)) CHECK(p.nmse_increase <= budget);
    }
    SUBCASE("an early violation caps tau even if later pairs are fine") {
        std::vector<CalibrationPoint> pts = {{0.1, 0.0}, {0.2, 0.5}, {0.3, 0.0}};
        CHECK(calibrate_tau(pts, budget).tau == doctest::Approx(0.1));
    }
    SUBCASE("ties are admitted together") {
        std::vector<CalibrationPoint> pts = {{0.1, 0.0}, {0.2, 0.0}, {0.2, 0.5}};
        CHECK(calibrate_tau(pts, budget).tau == doctest::Approx(0.1));
    }
    CHECK_THROWS_AS(calibrate_tau({}, budget), ConfigError);
}
