#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "rmflux/errors.hpp"
#include "rmflux/metrics.hpp"
#include "rmflux/rng.hpp"

using namespace rmflux;

namespace {

RadioMap random_map(int n, std::uint64_t seed) {
    Rng rng(seed);
    RadioMap m(n, n);
    for (auto& v : m.values) v = rng.uniform();
    return m;
}

// Direct double sum over each window, weights formed explicitly in 2-D.
double ssim_reference(const RadioMap& x, const RadioMap& y, double L) {
    const int w = 11;
    const double sigma = 1.5;
    double weights[11][11];
    double total = 0.0;
    for (int i = 0; i < w; ++i)
        for (int j = 0; j < w; ++j) {
            const double di = i - 5, dj = j - 5;
            weights[i][j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
            total += weights[i][j];
        }
    const double c1 = (0.01 * L) * (0.01 * L), c2 = (0.03 * L) * (0.03 * L), c3 = c2 / 2;
    double acc = 0.0;
    int count = 0;
    for (int r0 = 0; r0 + w <= x.rows; ++r0)
        for (int c0 = 0; c0 + w <= x.cols; ++c0) {
            double mx = 0, my = 0;
            for (int i = 0; i < w; ++i)
                for (int j = 0; j < w; ++j) {
                    mx += weights[i][j] / total * x.at(r0 + i, c0 + j);
                    my += weights[i][j] / total * y.at(r0 + i, c0 + j);
                }
            double vx = 0, vy = 0, cxy = 0;
            for (int i = 0; i < w; ++i)
                for (int j = 0; j < w; ++j) {
                    const double dx = x.at(r0 + i, c0 + j) - mx, dy = y.at(r0 + i, c0 + j) - my;
                    vx += weights[i][j] / total * dx * dx;
                    vy += weights[i][j] / total * dy * dy;
                    cxy += weights[i][j] / total * dx * dy;
                }
            // separate luminance, contrast and structure terms
            const double sx = std::sqrt(vx), sy = std::sqrt(vy);
            const double l = (2 * mx * my + c1) / (mx * mx + my * my + c1);
            const double c = (2 * sx * sy + c2) / (vx + vy + c2);
            const double s = (cxy + c3) / (sx * sy + c3);
            acc += l * c * s;
            ++count;
        }
    return acc / count;
}

}  // namespace

TEST_CASE("identical maps") {
    const auto m = random_map(32, 1);
    CHECK(mse(m, m) == 0.0);
    CHECK(nmse(m, m) == 0.0);
    CHECK(rmse(m, m) == 0.0);
    CHECK(std::isinf(psnr(m, m)));
    CHECK(std::abs(ssim(m, m) - 1.0) <= 1e-12);
    SsimOptions g;
    g.global = true;
    CHECK(std::abs(ssim(m, m, 1.0, g) - 1.0) <= 1e-12);
}

TEST_CASE("hand-computed example") {
    RadioMap truth(2, 2, 0.5), pred(2, 2, 0.6);
    CHECK(mse(pred, truth) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(nmse(pred, truth) == doctest::Approx(0.04).epsilon(1e-12));
    CHECK(rmse(pred, truth) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("zero prediction has unit NMSE") {
    const auto truth = random_map(16, 4);
    CHECK(nmse(RadioMap(16, 16, 0.0), truth) == 1.0);
    CHECK_THROWS_AS(nmse(truth, RadioMap(16, 16, 0.0)), DomainError);
}

TEST_CASE("NMSE normalizes by its second argument") {
    const auto a = random_map(16, 5);
    RadioMap b = a;
    for (auto& v : b.values) v *= 0.5;
    CHECK(nmse(a, b) != doctest::Approx(nmse(b, a)));
    CHECK(mse(a, b) == mse(b, a));
}

TEST_CASE("PSNR values") {
    CHECK(psnr_from_mse(1e-4) == 40.0);
    CHECK(psnr_from_mse(1.0) == 0.0);
    CHECK(psnr_from_mse(4.0, 2.0) == 0.0);
    CHECK(psnr_from_mse(1e-3) > psnr_from_mse(1e-2));
    CHECK(std::isinf(psnr_from_mse(0.0)));
}

TEST_CASE("rmse squared equals mse") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto a = random_map(12, s), b = random_map(12, s + 100);
        const double r = rmse(a, b);
        CHECK(std::abs(r * r - mse(a, b)) <= 1e-12 * mse(a, b));
    }
}

TEST_CASE("constant maps reduce to the luminance term") {
    const double a = 0.3, b = 0.7, c1 = 1e-4;
    const double expect = (2 * a * b + c1) / (a * a + b * b + c1);
    CHECK(ssim(RadioMap(16, 16, a), RadioMap(16, 16, b)) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("golden SSIM pair matches the direct-summation reference") {
    std::ifstream in(std::string(RMFLUX_DATA_DIR) + "/golden/ssim_pair.json");
    REQUIRE(in);
    const auto j = nlohmann::json::parse(in);
    const int n = j.at("n").get<int>();
    RadioMap a(n, n), b(n, n);
    a.values = j.at("a").get<std::vector<double>>();
    b.values = j.at("b").get<std::vector<double>>();
    const double ref = ssim_reference(a, b, 1.0);
    CHECK(std::abs(ssim(a, b) - ref) <= 1e-6);
    CHECK(ref < 0.99);
}

TEST_CASE("SSIM matches the reference on random maps") {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto a = random_map(20, s), b = random_map(20, s + 7);
        CHECK(std::abs(ssim(a, b) - ssim_reference(a, b, 1.0)) <= 1e-9);
    }
}

TEST_CASE("SSIM symmetry and bounds") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto a = random_map(16, s), b = random_map(16, s + 50);
        const double ab = ssim(a, b), ba = ssim(b, a);
        CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
        CHECK(ab >= -1.0);
        CHECK(ab <= 1.0);
    }
    RadioMap inv = random_map(16, 3);
    const auto orig = inv;
    for (auto& v : inv.values) v = 1.0 - v;
    CHECK(ssim(orig, inv) < 0.0);
}

TEST_CASE("SSIM needs a full window") {
    CHECK_THROWS_AS(ssim(RadioMap(10, 10, 0.1), RadioMap(10, 10, 0.1)), ConfigError);
    CHECK_THROWS_AS(mse(RadioMap(4, 4), RadioMap(4, 5)), ConfigError);
}

TEST_CASE("report JSON") {
    const auto m = random_map(16, 9);
    const auto j = to_json(evaluate(m, m));
    CHECK(j.at("psnr_db") == "inf");
    CHECK(j.at("ssim").get<double>() == 1.0);
    for (const char* k : {"mse", "nmse", "rmse", "psnr_db", "ssim"}) CHECK(j.contains(k));
    const auto k = to_json(evaluate(RadioMap(16, 16, 0.6), RadioMap(16, 16, 0.5)));
    CHECK(k.at("psnr_db").get<double>() == doctest::Approx(20.0));
}
